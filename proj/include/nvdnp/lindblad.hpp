#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "nvdnp/pulse_schedule.hpp"
#include "nvdnp/spin_core.hpp"
#include "nvdnp/types.hpp"

namespace nvdnp {

/// Tolerance for the Hermiticity, trace and positivity invariants of ρ.
inline constexpr double kStateTolerance = 1e-9;

/// 6×6 density matrix in the fixed basis.
class DensityMatrix {
 public:
  /// Validates Hermiticity, unit trace and positivity to kStateTolerance.
  explicit DensityMatrix(const Mat6& m);

  static DensityMatrix unchecked(const Mat6& m);

  const Mat6& matrix() const { return m_; }

  double trace() const { return m_.trace().real(); }
  double hermiticity_error() const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const;
  double purity() const { return (m_ * m_).trace().real(); }
  double population(int basis) const { return m_(basis, basis).real(); }
  double expectation(const Vec6& psi) const { return psi.dot(m_ * psi).real(); }

 private:
  struct UncheckedTag {};
  DensityMatrix(const Mat6& m, UncheckedTag) : m_(m) {}

  Mat6 m_;
};

/// |0⟩⟨0| ⊗ ½(|↑⟩⟨↑| + |↓⟩⟨↓|).
DensityMatrix initial_mixed_state();

/// Relaxation channels. Rates are in s⁻¹ and enter the dissipator linearly.
struct RelaxationRates {
  double gamma_gl = 8e6;                        // optical pumping, laser-gated
  double n_th = 0.0;                            // thermal occupation
  std::array<double, 4> gamma_dephasing{};      // ψ1, ψ2, driven lower, driven upper
  double gamma_nuclear_gl = 0.0;                // ψ1 ↔ ψ2 cross-relaxation, laser-gated

  void validate() const;

  bool operator==(const RelaxationRates&) const = default;
};

/// Which electron manifold the optical relaxation channels empty into m_s = 0.
enum class OpticalChannels { DrivenManifold, LowerManifold, BothManifolds };

struct ModelOptions {
  /// Drop the Ω coupling to m_s = −1 (4-level {0, +1} model).
  bool restrict_to_driven_subspace = false;
  OpticalChannels optical = OpticalChannels::DrivenManifold;

  bool operator==(const ModelOptions&) const = default;
};

/// H0 in the frame rotating with the carrier D + γe·Bz + Δ on the m_s = +1
/// manifold, plus Ω·S_x. The m_s = −1 manifold keeps its static energy.
Mat6 rotating_hamiltonian(const SystemParams& p, double delta_hz, double omega_hz,
                          const ModelOptions& options = {});

struct JumpOperator {
  std::string name;
  Mat6 op;           // includes √rate
  bool laser_gated;  // active only during laser-on segments
};

/// Channels with a zero rate are omitted.
std::vector<JumpOperator> build_channels(const RelaxationRates& r, const EigenSystem& es,
                                         const ModelOptions& options = {});

/// Superoperator on column-stacked ρ: vec(AρB) = (Bᵀ ⊗ A) vec(ρ).
/// The Hamiltonian (Hz) is multiplied by 2π; jump operators are used as given.
class Liouvillian {
 public:
  const Superop& matrix() const { return m_; }
  Mat6 apply(const Mat6& rho) const;

 private:
  friend Liouvillian liouvillian(const Mat6&, std::span<const Mat6>);
  Superop m_;
};

/// Throws DomainError when H is not Hermitian.
Liouvillian liouvillian(const Mat6& h, std::span<const Mat6> jumps);

/// exp(𝓛·t). Unitary segments (no jumps) take the 6×6 eigendecomposition path.
Superop segment_propagator(const Mat6& h, std::span<const Mat6> jumps, double seconds);

struct Sampling {
  enum class Mode { Final, Boundaries, Interval };
  Mode mode = Mode::Boundaries;
  std::int64_t interval_ns = 10;
};

struct TrajectoryPoint {
  std::int64_t time_ns;
  DensityMatrix rho;
};

using Trajectory = std::vector<TrajectoryPoint>;

/// Propagates states through schedules for one fixed (params, rates, options).
/// Segment propagators are cached by (laser, mw, Δ, Ω, duration). Not
/// thread-safe; use one instance per worker.
class Evolver {
 public:
  Evolver(const SystemParams& p, const RelaxationRates& r, const ModelOptions& options = {});

  /// `frame_detuning_hz` is the carrier detuning; a MW segment uses its own.
  const Superop& propagator(const PulseSegment& seg, double frame_detuning_hz);

  DensityMatrix propagate(const DensityMatrix& rho, const PulseSegment& seg,
                          double frame_detuning_hz);

  Trajectory evolve(const DensityMatrix& rho0, const Schedule& s, const Sampling& sampling = {});

  DensityMatrix evolve_final(const DensityMatrix& rho0, const Schedule& s);

  const SystemParams& params() const { return params_; }
  const RelaxationRates& rates() const { return rates_; }
  const ModelOptions& options() const { return options_; }
  const std::vector<JumpOperator>& channels() const { return channels_; }

  std::size_t cache_size() const { return cache_.size(); }
  std::size_t propagators_built() const { return built_; }

 private:
  using Key = std::tuple<bool, bool, double, double, std::int64_t>;

  SuperVec step(const SuperVec& v, const PulseSegment& seg, double frame_detuning_hz);

  SystemParams params_;
  RelaxationRates rates_;
  ModelOptions options_;
  std::vector<JumpOperator> channels_;
  std::map<Key, Superop> cache_;
  std::size_t built_ = 0;
};

/// Carrier detuning seen by each segment: the most recent MW segment's Δ, or the
/// first upcoming one before any MW has played, or 0 without microwaves.
std::vector<double> frame_detunings(const Schedule& s);

DensityMatrix propagate_segment(const DensityMatrix& rho, const PulseSegment& seg,
                                const SystemParams& p, const RelaxationRates& r,
                                const ModelOptions& options = {});

Trajectory evolve_schedule(const DensityMatrix& rho0, const Schedule& s, const SystemParams& p,
                           const RelaxationRates& r, const Sampling& sampling = {},
                           const ModelOptions& options = {});

/// CSV: time_ns, rho_re_ij, rho_im_ij (row-major), P.
void write_trajectory_csv(std::ostream& os, const Trajectory& t);

}  // namespace nvdnp
