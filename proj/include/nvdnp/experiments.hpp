#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nvdnp/lindblad.hpp"
#include "nvdnp/presets.hpp"

namespace nvdnp {

struct PolarizationResult {
  double p;
  double pop_up;    // ⟨ψ1|ρ|ψ1⟩
  double pop_down;  // ⟨ψ2|ρ|ψ2⟩
};

/// Raised when the m_s = 0 nuclear populations sum to ≤ 1e−12.
class UndefinedPolarization : public DomainError {
 public:
  using DomainError::DomainError;
};

PolarizationResult polarization_of_state(const DensityMatrix& rho);

/// Everything one P(Δ) evaluation needs.
struct ExperimentSetup {
  std::string preset_name;
  SystemParams params;
  RelaxationRates rates;
  SequenceParams sequence;
  ModelOptions options;
  /// Append one chopped-laser train before reading P so the electron is back in m_s = 0.
  bool reset_before_readout = true;

  static ExperimentSetup from_preset(const Preset& preset);
};

nlohmann::json to_json(const ExperimentSetup& s);

/// The electron reset applied before readout: one chopped laser train.
Schedule readout_reset(const CycleTiming& timing);

/// P after the standard schedule at detuning Δ, starting from the mixed state.
double final_polarization(const ExperimentSetup& setup, double delta_hz);

/// P after each complete cycle n = 0..n_max at fixed Δ.
std::vector<double> polarization_per_cycle(const ExperimentSetup& setup, double delta_hz, int n_max);

/// Raw state trajectory of n cycles sampled every `interval_ns` (no readout reset).
Trajectory polarization_trajectory(const ExperimentSetup& setup, double delta_hz, int n_cycles,
                                   std::int64_t interval_ns);

/// Inclusive grid min, min + step, ... ≤ max (+1e−9 step slack). Throws ConfigError on a bad axis.
std::vector<double> make_grid(double min, double max, double step);

struct SweepAxis {
  std::string name;
  std::string unit;
  std::vector<double> values;
};

/// Gridded values over one or two axes; 2-D data is row-major with axes[0] slow.
struct SweepResult {
  std::vector<SweepAxis> axes;
  std::string value_name = "P";
  std::vector<double> values;
  std::vector<std::pair<std::string, std::vector<double>>> extra;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t rows() const { return axes.empty() ? 0 : axes[0].values.size(); }
  std::size_t cols() const { return axes.size() < 2 ? 1 : axes[1].values.size(); }
  double at(std::size_t i, std::size_t j = 0) const { return values[i * cols() + j]; }

  /// Throws DomainError when values/extra lengths do not match the axes.
  void check_shape() const;
};

/// Δ-window searched for the maximum at each grid point of the field sweeps.
struct InnerDetuningGrid {
  double half_width_hz = 600e3;
  double step_hz = 5e3;
};

/// Centre of the ψ2 → m_s = +1 doublet (the positive-P lobe), from the closed-form spectrum.
double predicted_resonance(const SystemParams& p);

SweepResult sweep_detuning(const ExperimentSetup& setup, std::span<const double> delta_grid,
                           int workers = 1);

/// Detuning of the positive-P extremum on [0, 1 MHz] at 5 kHz steps.
double resonant_detuning(const ExperimentSetup& setup, int workers = 1);

SweepResult sweep_repetitions(const ExperimentSetup& setup, int n_max, double delta_hz);

/// Positive-lobe maximum of P over the inner Δ window for each B_z (reported as max |P|).
/// Extra columns: signed P and Δ at the maximum.
SweepResult sweep_field(const ExperimentSetup& setup, std::span<const double> b_grid,
                        const InnerDetuningGrid& inner = {}, int workers = 1);

SweepResult sweep_ani_detuning(const ExperimentSetup& setup, std::span<const double> ani_grid,
                               std::span<const double> delta_grid, int workers = 1);

/// Per-row (keep_axis = 0) or per-column (keep_axis = 1) extremum of |P|, sign retained.
SweepResult max_trace(const SweepResult& sweep, int keep_axis = 0);

/// Positive-lobe maximum of P over the inner Δ window per (B_z, A_ani) cell.
SweepResult sweep_field_ani(const ExperimentSetup& setup, std::span<const double> b_grid,
                            std::span<const double> ani_grid, const InnerDetuningGrid& inner = {},
                            int workers = 1);

/// 1-D: x, P[, extra...]; 2-D long form: x, y, P.
void write_sweep_csv(std::ostream& os, const SweepResult& sweep);

}  // namespace nvdnp
