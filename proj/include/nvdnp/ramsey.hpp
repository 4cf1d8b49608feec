#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "nvdnp/fitting.hpp"
#include "nvdnp/lindblad.hpp"
#include "nvdnp/spin_core.hpp"

namespace nvdnp {

inline constexpr double kDefaultProbeDetuning = 5e6;
inline constexpr double kDefaultT2Star = 2e-6;

/// One m_s = 0 → ±1 transition seen in the Ramsey fringes.
struct RamseyTransition {
  double frequency_hz;  // relative to the probe carrier
  double visibility;    // 2|⟨excited|S_x|ground⟩|², in [0, 1]
  NuclearSpin origin;   // ground state ψ1 (↑) or ψ2 (↓)
  int excited;          // eigenstate index into EigenSystem
};

/// E_excited − E_{1,2} for the four transitions of the probed manifold, ordered
/// (lower, ψ1), (upper, ψ1), (lower, ψ2), (upper, ψ2), shifted so the bare
/// electron line sits at `probe_detuning_hz`. Throws DomainError for Manifold::Zero.
std::array<RamseyTransition, 4> analytic_peaks(const SystemParams& p, Manifold manifold,
                                               double probe_detuning_hz = kDefaultProbeDetuning);

/// Higher-frequency fringe of the ↑/↓ pair: ↑ on m_s = −1, ↓ on m_s = +1.
NuclearSpin origin_of_higher_peak(Manifold manifold);

struct RamseyPeak {
  double frequency_hz;
  double amplitude;
  NuclearSpin origin = NuclearSpin::Up;
  double visibility = 1.0;
};

struct RamseyModel {
  Manifold manifold = Manifold::Minus;
  double probe_detuning_hz = kDefaultProbeDetuning;
  double t2_star_s = kDefaultT2Star;
  std::vector<RamseyPeak> peaks;
  double baseline = 0.0;

  /// Amplitudes in [0, 1] summing to ≤ 1, frequencies > 0, T2* > 0.
  void validate() const;
};

/// Peak amplitudes = nuclear population × transition visibility.
RamseyModel ramsey_model_from_populations(const SystemParams& p, Manifold manifold, double pop_up,
                                          double pop_down,
                                          double probe_detuning_hz = kDefaultProbeDetuning,
                                          double t2_star_s = kDefaultT2Star);

RamseyModel ramsey_model_from_state(const SystemParams& p, Manifold manifold, const DensityMatrix& rho,
                                    double probe_detuning_hz = kDefaultProbeDetuning,
                                    double t2_star_s = kDefaultT2Star);

struct TimeSeries {
  double dt_s = 0.0;
  std::vector<double> values;

  double time(std::size_t i) const { return static_cast<double>(i) * dt_s; }
};

/// Samples t = 0, dt, ... < duration. Throws DomainError unless dt > 0 and duration > 0.
TimeSeries synthesize_ramsey(const RamseyModel& model, double duration_s, double dt_s);

struct Spectrum {
  std::vector<double> frequency_hz;
  std::vector<Complex> amplitude;  // scaled by dt
  std::vector<double> magnitude;

  double bin_hz() const { return frequency_hz.size() > 1 ? frequency_hz[1] - frequency_hz[0] : 0.0; }
};

/// One-sided, windowless DFT of the signal zero-padded to pad_factor × length.
/// Throws DomainError for fewer than 8 samples, dt ≤ 0 or pad_factor < 1.
Spectrum fft_spectrum(std::span<const double> signal, double dt_s, int pad_factor = 4);

/// FWHM of the absorption line of a fringe decaying as exp(−(t/T2*)²): 2√ln2 / (π T2*).
double gaussian_envelope_fwhm(double t2_star_s);

struct LorentzianPairGuess {
  std::array<double, 2> centers_hz;
  double width_hz;
  std::array<double, 2> window_hz{0.0, 0.0};  // fit range; empty means [min c − 4w, max c + 4w]
};

/// Centers from the most visible transition of each nuclear state, width from the envelope.
LorentzianPairGuess lorentzian_guess(const RamseyModel& model);

struct LorentzianPairFit {
  std::array<double, 2> heights;
  std::array<double, 2> centers_hz;
  std::array<double, 2> widths_hz;  // FWHM
  std::array<double, 2> areas;
  double baseline;
  double p;
  FitReport report;
};

/// h / (1 + ((f − c)/(w/2))²) per peak with one shared width plus a constant baseline,
/// fitted to Re(amplitude) over the guess window. Assumes fringes in phase at
/// t = 0. P from peak areas. Throws FitError on non-convergence.
LorentzianPairFit fit_lorentzian_pair(const Spectrum& sp, const LorentzianPairGuess& guess,
                                      Manifold manifold);

/// Parameter vector (h1, c1, h2, c2, w, b).
Eigen::VectorXd lorentzian_pair_model(std::span<const double> f, const Eigen::VectorXd& x);
Eigen::MatrixXd lorentzian_pair_jacobian(std::span<const double> f, const Eigen::VectorXd& x);

struct TimeDomainGuess {
  std::array<double, 2> frequencies_hz;
  double t2_star_s = kDefaultT2Star;
};

struct TimeDomainFit {
  std::array<double, 2> amplitudes;
  std::array<double, 2> frequencies_hz;
  std::array<double, 2> phases;
  double t2_star_s;
  double p;
  FitReport report;
};

/// (a1 cos(2πf1 t + φ1) + a2 cos(2πf2 t + φ2))·exp(−(t/T2*)²). Throws FitError on non-convergence.
TimeDomainFit fit_time_domain(const TimeSeries& s, const TimeDomainGuess& guess, Manifold manifold);

TimeDomainGuess time_domain_guess(const RamseyModel& model);

void write_time_series_csv(std::ostream& os, const TimeSeries& s);
void write_spectrum_csv(std::ostream& os, const Spectrum& sp);

nlohmann::json to_json(const LorentzianPairFit& f);
nlohmann::json to_json(const TimeDomainFit& f);

}  // namespace nvdnp
