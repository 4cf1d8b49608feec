#include "nvdnp/ramsey.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <unsupported/Eigen/FFT>

#include "nvdnp/io.hpp"

namespace nvdnp {

namespace {

double area(double height, double fwhm) { return 0.5 * std::numbers::pi * height * fwhm; }

double polarization(double up, double down) {
  const double sum = up + down;
  if (!(sum > 0.0)) throw ModelError("fitted amplitudes are both zero");
  return (up - down) / sum;
}

// P with the manifold's frequency assignment, given (frequency, weight) of both components.
double assign_polarization(Manifold m, double f0, double w0, double f1, double w1) {
  const bool first_higher = f0 >= f1;
  const double higher = first_higher ? w0 : w1;
  const double lower_w = first_higher ? w1 : w0;
  return origin_of_higher_peak(m) == NuclearSpin::Up ? polarization(higher, lower_w) : polarization(lower_w, higher);
}

std::size_t bin_of(const Spectrum& sp, double f) {
  return static_cast<std::size_t>(std::clamp(std::round(f / sp.bin_hz()), 0.0,
                                             static_cast<double>(sp.amplitude.size() - 1)));
}

double magnitude_at(const Spectrum& sp, double f) { return sp.magnitude[bin_of(sp, f)]; }

double absorption_at(const Spectrum& sp, double f) { return sp.amplitude[bin_of(sp, f)].real(); }

}  // namespace

std::array<RamseyTransition, 4> analytic_peaks(const SystemParams& p, Manifold manifold,
                                               double probe_detuning_hz) {
  if (manifold == Manifold::Zero) throw DomainError("analytic_peaks: probe manifold must be +1 or -1");
  const EigenSystem es = eigen_system(p);
  const Mat6& sx = spin_operators().s_x;
  const double line = p.d_hz + static_cast<int>(manifold) * p.gamma_e * p.b_z;
  const int lo = EigenSystem::lower(manifold);
  const int hi = EigenSystem::upper(manifold);

  std::array<RamseyTransition, 4> out{};
  int k = 0;
  for (int g : {0, 1})
    for (int e : {lo, hi}) {
      const double vis = 2.0 * std::norm(es.states[e].dot(sx * es.states[g]));
      out[k++] = {probe_detuning_hz + (es.energies[e] - line) - es.energies[g], std::min(vis, 1.0),
                  g == 0 ? NuclearSpin::Up : NuclearSpin::Down, e};
    }
  return out;
}

NuclearSpin origin_of_higher_peak(Manifold manifold) {
  if (manifold == Manifold::Zero) throw DomainError("no Ramsey assignment for m_s = 0");
  return manifold == Manifold::Minus ? NuclearSpin::Up : NuclearSpin::Down;
}

void RamseyModel::validate() const {
  if (manifold == Manifold::Zero) throw DomainError("ramsey model: manifold must be +1 or -1");
  if (!(t2_star_s > 0.0)) throw DomainError("ramsey model: T2* must be > 0");
  double sum = 0.0;
  for (const RamseyPeak& pk : peaks) {
    if (!(pk.amplitude >= 0.0 && pk.amplitude <= 1.0)) throw DomainError("ramsey model: amplitude outside [0, 1]");
    if (!(pk.frequency_hz > 0.0)) throw DomainError("ramsey model: frequencies must be positive");
    sum += pk.amplitude;
  }
  if (sum > 1.0 + 1e-12) throw DomainError("ramsey model: amplitudes sum above 1");
}

RamseyModel ramsey_model_from_populations(const SystemParams& p, Manifold manifold, double pop_up,
                                          double pop_down, double probe_detuning_hz, double t2_star_s) {
  RamseyModel m;
  m.manifold = manifold;
  m.probe_detuning_hz = probe_detuning_hz;
  m.t2_star_s = t2_star_s;
  for (const RamseyTransition& t : analytic_peaks(p, manifold, probe_detuning_hz))
    m.peaks.push_back({t.frequency_hz, (t.origin == NuclearSpin::Up ? pop_up : pop_down) * t.visibility, t.origin, t.visibility});
  m.validate();
  return m;
}

RamseyModel ramsey_model_from_state(const SystemParams& p, Manifold manifold, const DensityMatrix& rho,
                                    double probe_detuning_hz, double t2_star_s) {
  const double up = std::clamp(rho.population(basis_index(Manifold::Zero, NuclearSpin::Up)), 0.0, 1.0);
  const double down = std::clamp(rho.population(basis_index(Manifold::Zero, NuclearSpin::Down)), 0.0, 1.0);
  return ramsey_model_from_populations(p, manifold, up, down, probe_detuning_hz, t2_star_s);
}

TimeSeries synthesize_ramsey(const RamseyModel& model, double duration_s, double dt_s) {
  if (!(dt_s > 0.0) || !(duration_s > 0.0)) throw DomainError("synthesize_ramsey: dt and duration must be > 0");
  model.validate();
  const auto n = static_cast<std::size_t>(std::ceil(duration_s / dt_s - 1e-9));
  TimeSeries s;
  s.dt_s = dt_s;
  s.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = s.time(i);
    double v = 0.0;
    for (const RamseyPeak& pk : model.peaks) v += pk.amplitude * std::cos(kTwoPi * pk.frequency_hz * t);
    const double x = t / model.t2_star_s;
    s.values[i] = v * std::exp(-x * x) + model.baseline;
  }
  return s;
}

Spectrum fft_spectrum(std::span<const double> signal, double dt_s, int pad_factor) {
  if (signal.size() < 8) throw DomainError("fft_spectrum: need at least 8 samples");
  if (!(dt_s > 0.0)) throw DomainError("fft_spectrum: dt must be > 0");
  if (pad_factor < 1) throw DomainError("fft_spectrum: pad factor must be >= 1");

  const std::size_t m = signal.size() * static_cast<std::size_t>(pad_factor);
  std::vector<Complex> in(m, Complex(0.0, 0.0));
  std::copy(signal.begin(), signal.end(), in.begin());
  std::vector<Complex> out;
  Eigen::FFT<double> fft;
  fft.fwd(out, in);

  Spectrum sp;
  const std::size_t half = m / 2 + 1;
  const double bin = 1.0 / (static_cast<double>(m) * dt_s);
  sp.frequency_hz.resize(half);
  sp.amplitude.resize(half);
  sp.magnitude.resize(half);
  for (std::size_t k = 0; k < half; ++k) {
    sp.frequency_hz[k] = static_cast<double>(k) * bin;
    sp.amplitude[k] = out[k] * dt_s;
    sp.magnitude[k] = std::abs(sp.amplitude[k]);
  }
  return sp;
}

double gaussian_envelope_fwhm(double t2_star_s) {
  return 2.0 * std::sqrt(std::numbers::ln2) / (std::numbers::pi * t2_star_s);
}

namespace {

// Most visible transition from each nuclear ground state, independent of the populations.
std::array<double, 2> guess_frequencies(const RamseyModel& model) {
  std::array<const RamseyPeak*, 2> best{nullptr, nullptr};
  for (const RamseyPeak& pk : model.peaks) {
    const RamseyPeak*& b = best[pk.origin == NuclearSpin::Up ? 0 : 1];
    if (!b || pk.visibility > b->visibility) b = &pk;
  }
  if (!best[0] || !best[1]) throw DomainError("ramsey model needs peaks from both nuclear states");
  return {best[0]->frequency_hz, best[1]->frequency_hz};
}

}  // namespace

LorentzianPairGuess lorentzian_guess(const RamseyModel& model) {
  const std::array<double, 2> c = guess_frequencies(model);
  const double w = gaussian_envelope_fwhm(model.t2_star_s);
  return {c, w, {std::min(c[0], c[1]) - 4.0 * w, std::max(c[0], c[1]) + 4.0 * w}};
}

TimeDomainGuess time_domain_guess(const RamseyModel& model) {
  return {guess_frequencies(model), model.t2_star_s};
}

Eigen::VectorXd lorentzian_pair_model(std::span<const double> f, const Eigen::VectorXd& x) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i) {
    double v = x(5);
    for (int k = 0; k < 2; ++k) {
      const double u = 2.0 * (f[i] - x(2 * k + 1)) / x(4);
      v += x(2 * k) / (1.0 + u * u);
    }
    out(static_cast<Eigen::Index>(i)) = v;
  }
  return out;
}

Eigen::MatrixXd lorentzian_pair_jacobian(std::span<const double> f, const Eigen::VectorXd& x) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(f.size()), 6);
  const double w = x(4);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int k = 0; k < 2; ++k) {
      const double h = x(2 * k);
      const double u = 2.0 * (f[i] - x(2 * k + 1)) / w;
      const double d = 1.0 + u * u;
      j(r, 2 * k) = 1.0 / d;
      j(r, 2 * k + 1) = h * 2.0 * u / (d * d) * (2.0 / w);
      j(r, 4) += h * 2.0 * u * u / (w * d * d);
    }
    j(r, 5) = 1.0;
  }
  return j;
}

LorentzianPairFit fit_lorentzian_pair(const Spectrum& sp, const LorentzianPairGuess& guess, Manifold manifold) {
  if (!(guess.width_hz > 0.0)) throw DomainError("fit_lorentzian_pair: width guess must be > 0");
  if (sp.amplitude.size() < 8) throw DomainError("fit_lorentzian_pair: spectrum too short");
  const double w0 = guess.width_hz;
  double lo = guess.window_hz[0], hi = guess.window_hz[1];
  if (!(hi > lo)) {
    lo = std::min(guess.centers_hz[0], guess.centers_hz[1]) - 4.0 * w0;
    hi = std::max(guess.centers_hz[0], guess.centers_hz[1]) + 4.0 * w0;
  }

  // Absorption part: the dispersive tails in |X(f)| leak between neighbouring lines.
  std::vector<double> f;
  std::vector<double> y;
  for (std::size_t k = 0; k < sp.frequency_hz.size(); ++k)
    if (sp.frequency_hz[k] >= lo && sp.frequency_hz[k] <= hi) {
      f.push_back(sp.frequency_hz[k]);
      y.push_back(sp.amplitude[k].real());
    }
  if (f.size() < 8) throw DomainError("fit_lorentzian_pair: fewer than 8 bins in the fit window");
  // Solve in units of the peak value and the guessed width so the step test sees every parameter.
  const double top = std::max(std::abs(*std::max_element(y.begin(), y.end())), std::abs(*std::min_element(y.begin(), y.end())));
  if (!(top > 0.0)) throw DomainError("fit_lorentzian_pair: empty spectrum");
  const double mid = 0.5 * (lo + hi);
  std::vector<double> u(f.size());
  Eigen::VectorXd data(static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i) {
    u[i] = (f[i] - mid) / w0;
    data(static_cast<Eigen::Index>(i)) = y[i] / top;
  }
  Eigen::VectorXd scale(6), offset = Eigen::VectorXd::Zero(6);
  scale << top, w0, top, w0, w0, top;
  offset(1) = offset(3) = mid;

  FitProblem prob;
  prob.model = [&u](const Eigen::VectorXd& x) { return lorentzian_pair_model(u, x); };
  prob.jacobian = [&u](const Eigen::VectorXd& x) { return lorentzian_pair_jacobian(u, x); };
  prob.data = data;
  prob.init.resize(6);
  prob.bounds.resize(6);
  for (int k = 0; k < 2; ++k) {
    const double c = (guess.centers_hz[static_cast<std::size_t>(k)] - mid) / w0;
    prob.init(2 * k) = std::clamp(absorption_at(sp, guess.centers_hz[static_cast<std::size_t>(k)]) / top, 0.0, 2.0);
    prob.init(2 * k + 1) = c;
    prob.bounds[static_cast<std::size_t>(2 * k)] = {0.0, 2.0};
    prob.bounds[static_cast<std::size_t>(2 * k + 1)] = {c - 0.5, c + 0.5};
  }
  prob.init(4) = 1.0;
  prob.bounds[4] = {std::max(sp.bin_hz() / w0, 1e-3), 10.0};
  prob.init(5) = 0.0;
  prob.bounds[5] = {-1.0, 1.0};
  prob.max_evaluations = 2000;

  LorentzianPairFit fit;
  fit.report = least_squares(prob);
  FitReport& r = fit.report;
  r.params = r.params.cwiseProduct(scale) + offset;
  r.uncertainty = r.uncertainty.cwiseProduct(scale);
  r.covariance_diagonal = r.covariance_diagonal.cwiseProduct(scale.cwiseAbs2());
  r.residual_norm *= top;
  for (double& h : r.residual_history) h *= top;
  if (!r.converged)
    throw FitError("fit_lorentzian_pair: " + r.stop_reason + ", residual " + format_double(r.residual_norm), r);
  const Eigen::VectorXd& x = r.params;
  for (int k = 0; k < 2; ++k) {
    const auto s = static_cast<std::size_t>(k);
    fit.heights[s] = x(2 * k);
    fit.centers_hz[s] = x(2 * k + 1);
    fit.widths_hz[s] = x(4);
    fit.areas[s] = area(fit.heights[s], fit.widths_hz[s]);
  }
  fit.baseline = x(5);
  fit.p = assign_polarization(manifold, fit.centers_hz[0], fit.areas[0], fit.centers_hz[1], fit.areas[1]);
  return fit;
}

TimeDomainFit fit_time_domain(const TimeSeries& s, const TimeDomainGuess& guess, Manifold manifold) {
  if (s.values.size() < 8) throw DomainError("fit_time_domain: need at least 8 samples");
  if (!(s.dt_s > 0.0) || !(guess.t2_star_s > 0.0)) throw DomainError("fit_time_domain: dt and T2* must be > 0");

  // Amplitude seeds from the spectrum: |X(f)| ≈ (a/2)·∫exp(−(t/T2)²)dt = a·√π·T2/4.
  const Spectrum sp = fft_spectrum(s.values, s.dt_s);
  const double norm = std::sqrt(std::numbers::pi) * guess.t2_star_s / 4.0;
  const double span = 0.5 * gaussian_envelope_fwhm(guess.t2_star_s);

  const std::size_t n = s.values.size();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = s.time(i);

  FitProblem prob;
  prob.model = [&t](const Eigen::VectorXd& x) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double e = t[i] / x(6);
      out(static_cast<Eigen::Index>(i)) =
          (x(0) * std::cos(kTwoPi * x(1) * t[i] + x(2)) + x(3) * std::cos(kTwoPi * x(4) * t[i] + x(5))) *
          std::exp(-e * e);
    }
    return out;
  };
  prob.data = Eigen::Map<const Eigen::VectorXd>(s.values.data(), static_cast<Eigen::Index>(n));
  prob.init.resize(7);
  prob.bounds.resize(7);
  for (int k = 0; k < 2; ++k) {
    const double f = guess.frequencies_hz[static_cast<std::size_t>(k)];
    prob.init(3 * k) = std::clamp(magnitude_at(sp, f) / norm, 0.0, 2.0);
    prob.init(3 * k + 1) = f;
    prob.init(3 * k + 2) = 0.0;
    prob.bounds[static_cast<std::size_t>(3 * k)] = {0.0, 2.0};
    prob.bounds[static_cast<std::size_t>(3 * k + 1)] = {f - span, f + span};
    prob.bounds[static_cast<std::size_t>(3 * k + 2)] = {-2.0 * std::numbers::pi, 2.0 * std::numbers::pi};
  }
  prob.init(6) = guess.t2_star_s;
  prob.bounds[6] = {0.05 * guess.t2_star_s, 20.0 * guess.t2_star_s};
  prob.fd_floor = Eigen::VectorXd::Constant(7, 1e-9);
  prob.fd_floor(1) = prob.fd_floor(4) = 1.0;
  prob.fd_floor(6) = 1e-12;
  prob.max_evaluations = 3000;

  TimeDomainFit fit;
  fit.report = least_squares(prob);
  if (!fit.report.converged)
    throw FitError("fit_time_domain: " + fit.report.stop_reason + ", residual " +
                       format_double(fit.report.residual_norm),
                   fit.report);
  const Eigen::VectorXd& x = fit.report.params;
  for (int k = 0; k < 2; ++k) {
    const auto i = static_cast<std::size_t>(k);
    fit.amplitudes[i] = x(3 * k);
    fit.frequencies_hz[i] = x(3 * k + 1);
    fit.phases[i] = x(3 * k + 2);
  }
  fit.t2_star_s = x(6);
  fit.p = assign_polarization(manifold, fit.frequencies_hz[0], fit.amplitudes[0], fit.frequencies_hz[1],
                              fit.amplitudes[1]);
  return fit;
}

void write_time_series_csv(std::ostream& os, const TimeSeries& s) {
  os << "t_ns,s\n";
  for (std::size_t i = 0; i < s.values.size(); ++i)
    os << format_double(s.time(i) * 1e9) << ',' << format_double(s.values[i]) << '\n';
}

void write_spectrum_csv(std::ostream& os, const Spectrum& sp) {
  os << "f_hz,magnitude\n";
  for (std::size_t k = 0; k < sp.frequency_hz.size(); ++k)
    os << format_double(sp.frequency_hz[k]) << ',' << format_double(sp.magnitude[k]) << '\n';
}

nlohmann::json to_json(const LorentzianPairFit& f) {
  nlohmann::json j = to_json(f.report, {"h1", "c1_hz", "h2", "c2_hz", "w_hz", "baseline"});
  j["areas"] = f.areas;
  j["P"] = f.p;
  return j;
}

nlohmann::json to_json(const TimeDomainFit& f) {
  nlohmann::json j = to_json(f.report, {"a1", "f1_hz", "phi1", "a2", "f2_hz", "phi2", "t2_star_s"});
  j["P"] = f.p;
  return j;
}

}  // namespace nvdnp
