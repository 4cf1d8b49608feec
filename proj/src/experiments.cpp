#include "nvdnp/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "nvdnp/io.hpp"
#include "nvdnp/parallel.hpp"

namespace nvdnp {

PolarizationResult polarization_of_state(const DensityMatrix& rho) {
  const double up = rho.population(basis_index(Manifold::Zero, NuclearSpin::Up));
  const double down = rho.population(basis_index(Manifold::Zero, NuclearSpin::Down));
  const double sum = up + down;
  if (!(sum > 1e-12)) throw UndefinedPolarization("polarization undefined: m_s = 0 population is empty");
  return {(up - down) / sum, up, down};
}

ExperimentSetup ExperimentSetup::from_preset(const Preset& preset) {
  ExperimentSetup s;
  s.preset_name = preset.name;
  s.params = preset.params;
  s.rates = preset.rates;
  s.sequence = preset.sequence;
  return s;
}

nlohmann::json to_json(const ExperimentSetup& s) {
  return {{"preset", s.preset_name},
          {"params", to_json(s.params)},
          {"rates", to_json(s.rates)},
          {"sequence", to_json(s.sequence)},
          {"options", to_json(s.options)},
          {"reset_before_readout", s.reset_before_readout}};
}

Schedule readout_reset(const CycleTiming& timing) {
  Schedule s = chopped_laser_train(timing.laser_on_ns, timing.laser_off_ns, timing.laser_reps);
  s.label = "readout-reset";
  return s;
}

namespace {

Schedule readout_schedule(const ExperimentSetup& setup, double delta_hz, int n_cycles) {
  const SequenceParams& q = setup.sequence;
  Schedule s = standard_polarization_schedule(delta_hz, q.omega_hz, n_cycles, q.t_mw_ns, q.timing);
  if (setup.reset_before_readout) s.append(readout_reset(q.timing));
  return s;
}

// Readout train in the carrier frame of the preceding MW pulse.
DensityMatrix apply_readout(Evolver& ev, const ExperimentSetup& setup, const DensityMatrix& rho,
                            double delta_hz) {
  if (!setup.reset_before_readout) return rho;
  DensityMatrix out = rho;
  for (const PulseSegment& seg : readout_reset(setup.sequence.timing).segments)
    out = ev.propagate(out, seg, delta_hz);
  return out;
}

double extremum_abs(std::span<const double> v, std::size_t* where = nullptr) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (where) *where = best;
  return v.empty() ? 0.0 : v[best];
}

std::vector<double> inner_grid(double centre, const InnerDetuningGrid& inner) {
  if (!(inner.half_width_hz >= 0.0) || !(inner.step_hz > 0.0))
    throw ConfigError("inner detuning grid: half width must be >= 0 and step > 0");
  return make_grid(centre - inner.half_width_hz, centre + inner.half_width_hz, inner.step_hz);
}

// Positive-lobe maximum of P over the inner window; returns (P, Δ at the maximum).
// The window is centred on the positive lobe and only clips the negative one, so
// its signed maximum stands in for max |P| (the curve is odd in Δ up to Stark shifts).
std::pair<double, double> best_over_detuning(const ExperimentSetup& setup, const InnerDetuningGrid& inner) {
  const std::vector<double> grid = inner_grid(predicted_resonance(setup.params), inner);
  std::vector<double> p(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) p[i] = final_polarization(setup, grid[i]);
  const auto k = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  return {p[k], grid[k]};
}

nlohmann::json sweep_metadata(const ExperimentSetup& setup, const char* kind) {
  return {{"kind", kind}, {"setup", to_json(setup)}};
}

}  // namespace

double final_polarization(const ExperimentSetup& setup, double delta_hz) {
  Evolver ev(setup.params, setup.rates, setup.options);
  const Schedule s = readout_schedule(setup, delta_hz, setup.sequence.n_cycles);
  return polarization_of_state(ev.evolve_final(initial_mixed_state(), s)).p;
}

std::vector<double> polarization_per_cycle(const ExperimentSetup& setup, double delta_hz, int n_max) {
  if (n_max < 0) throw DomainError("polarization_per_cycle: n_max must be >= 0");
  Evolver ev(setup.params, setup.rates, setup.options);
  const SequenceParams& q = setup.sequence;
  const Schedule cycle = standard_polarization_schedule(delta_hz, q.omega_hz, 1, q.t_mw_ns, q.timing);

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_max) + 1);
  DensityMatrix rho = initial_mixed_state();
  out.push_back(polarization_of_state(apply_readout(ev, setup, rho, delta_hz)).p);
  for (int n = 1; n <= n_max; ++n) {
    for (const PulseSegment& seg : cycle.segments) rho = ev.propagate(rho, seg, delta_hz);
    out.push_back(polarization_of_state(apply_readout(ev, setup, rho, delta_hz)).p);
  }
  return out;
}

Trajectory polarization_trajectory(const ExperimentSetup& setup, double delta_hz, int n_cycles,
                                   std::int64_t interval_ns) {
  Evolver ev(setup.params, setup.rates, setup.options);
  const SequenceParams& q = setup.sequence;
  const Schedule s = standard_polarization_schedule(delta_hz, q.omega_hz, n_cycles, q.t_mw_ns, q.timing);
  return ev.evolve(initial_mixed_state(), s, {Sampling::Mode::Interval, interval_ns});
}

std::vector<double> make_grid(double min, double max, double step) {
  if (!std::isfinite(min) || !std::isfinite(max) || !std::isfinite(step))
    throw ConfigError("grid bounds must be finite");
  if (!(step > 0.0)) throw ConfigError("grid step must be > 0");
  if (max < min) throw ConfigError("grid max must be >= min");
  const double span = (max - min) / step;
  if (span > 1e7) throw ConfigError("grid has too many points");
  const auto n = static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = min + static_cast<double>(i) * step;
  return g;
}

void SweepResult::check_shape() const {
  if (axes.empty() || axes.size() > 2) throw DomainError("sweep must have one or two axes");
  const std::size_t n = rows() * cols();
  if (values.size() != n) throw DomainError("sweep values do not match the axes");
  for (const auto& [name, column] : extra)
    if (column.size() != n) throw DomainError("sweep column '" + name + "' does not match the axes");
}

double predicted_resonance(const SystemParams& p) {
  const EigenSystem es = eigen_system(p);
  const double carrier = p.d_hz + p.gamma_e * p.b_z;
  const int lo = EigenSystem::lower(Manifold::Plus);
  const int hi = EigenSystem::upper(Manifold::Plus);
  return 0.5 * ((es.energies[lo] - carrier) + (es.energies[hi] - carrier)) - es.energies[1];
}

SweepResult sweep_detuning(const ExperimentSetup& setup, std::span<const double> delta_grid, int workers) {
  SweepResult r;
  r.axes.push_back({"delta_hz", "Hz", {delta_grid.begin(), delta_grid.end()}});
  r.values.assign(delta_grid.size(), 0.0);
  parallel_for(delta_grid.size(), workers,
               [&](std::size_t, std::size_t i) { r.values[i] = final_polarization(setup, delta_grid[i]); });
  r.metadata = sweep_metadata(setup, "detuning");
  return r;
}

double resonant_detuning(const ExperimentSetup& setup, int workers) {
  const std::vector<double> grid = make_grid(0.0, 1e6, 5e3);
  const SweepResult s = sweep_detuning(setup, grid, workers);
  const auto best = std::max_element(s.values.begin(), s.values.end());
  return grid[static_cast<std::size_t>(best - s.values.begin())];
}

SweepResult sweep_repetitions(const ExperimentSetup& setup, int n_max, double delta_hz) {
  SweepResult r;
  const std::vector<double> p = polarization_per_cycle(setup, delta_hz, n_max);
  std::vector<double> n(p.size());
  for (std::size_t i = 0; i < n.size(); ++i) n[i] = static_cast<double>(i);
  r.axes.push_back({"n_cycles", "", std::move(n)});
  r.values = p;
  r.metadata = sweep_metadata(setup, "repetitions");
  r.metadata["delta_hz"] = delta_hz;
  return r;
}

SweepResult sweep_field(const ExperimentSetup& setup, std::span<const double> b_grid,
                        const InnerDetuningGrid& inner, int workers) {
  SweepResult r;
  r.axes.push_back({"b_z", "G", {b_grid.begin(), b_grid.end()}});
  r.value_name = "max_abs_P";
  r.values.assign(b_grid.size(), 0.0);
  std::vector<double> signed_p(b_grid.size()), at(b_grid.size());
  parallel_for(b_grid.size(), workers, [&](std::size_t, std::size_t i) {
    ExperimentSetup s = setup;
    s.params.b_z = b_grid[i];
    const auto [p, delta] = best_over_detuning(s, inner);
    r.values[i] = std::max(p, 0.0);
    signed_p[i] = p;
    at[i] = delta;
  });
  r.extra.emplace_back("P_at_max", std::move(signed_p));
  r.extra.emplace_back("delta_at_max_hz", std::move(at));
  r.metadata = sweep_metadata(setup, "field");
  r.metadata["inner_grid"] = {{"half_width_hz", inner.half_width_hz}, {"step_hz", inner.step_hz}};
  return r;
}

SweepResult sweep_ani_detuning(const ExperimentSetup& setup, std::span<const double> ani_grid,
                               std::span<const double> delta_grid, int workers) {
  SweepResult r;
  r.axes.push_back({"a_ani_hz", "Hz", {ani_grid.begin(), ani_grid.end()}});
  r.axes.push_back({"delta_hz", "Hz", {delta_grid.begin(), delta_grid.end()}});
  const std::size_t cols = delta_grid.size();
  r.values.assign(ani_grid.size() * cols, 0.0);
  parallel_for(r.values.size(), workers, [&](std::size_t, std::size_t k) {
    ExperimentSetup s = setup;
    s.params.a_ani = ani_grid[k / cols];
    r.values[k] = final_polarization(s, delta_grid[k % cols]);
  });
  r.metadata = sweep_metadata(setup, "ani-detuning");
  return r;
}

SweepResult max_trace(const SweepResult& sweep, int keep_axis) {
  sweep.check_shape();
  if (sweep.axes.size() != 2) throw DomainError("max_trace needs a two-axis sweep");
  if (keep_axis != 0 && keep_axis != 1) throw DomainError("max_trace: keep_axis must be 0 or 1");

  const auto keep = static_cast<std::size_t>(keep_axis);
  const SweepAxis& kept = sweep.axes[keep];
  const SweepAxis& reduced = sweep.axes[1 - keep];
  SweepResult r;
  r.axes.push_back(kept);
  r.value_name = sweep.value_name;
  std::vector<double> arg(kept.values.size());
  std::vector<double> line(reduced.values.size());
  for (std::size_t i = 0; i < kept.values.size(); ++i) {
    for (std::size_t j = 0; j < line.size(); ++j) line[j] = keep == 0 ? sweep.at(i, j) : sweep.at(j, i);
    std::size_t k = 0;
    r.values.push_back(extremum_abs(line, &k));
    arg[i] = reduced.values[k];
  }
  r.extra.emplace_back(reduced.name + "_at_max", std::move(arg));
  r.metadata = sweep.metadata;
  r.metadata["reduced_axis"] = reduced.name;
  return r;
}

SweepResult sweep_field_ani(const ExperimentSetup& setup, std::span<const double> b_grid,
                            std::span<const double> ani_grid, const InnerDetuningGrid& inner,
                            int workers) {
  SweepResult r;
  r.axes.push_back({"b_z", "G", {b_grid.begin(), b_grid.end()}});
  r.axes.push_back({"a_ani_hz", "Hz", {ani_grid.begin(), ani_grid.end()}});
  r.value_name = "max_abs_P";
  const std::size_t cols = ani_grid.size();
  r.values.assign(b_grid.size() * cols, 0.0);
  parallel_for(r.values.size(), workers, [&](std::size_t, std::size_t k) {
    ExperimentSetup s = setup;
    s.params.b_z = b_grid[k / cols];
    s.params.a_ani = ani_grid[k % cols];
    r.values[k] = std::max(best_over_detuning(s, inner).first, 0.0);
  });
  r.metadata = sweep_metadata(setup, "field-ani");
  r.metadata["inner_grid"] = {{"half_width_hz", inner.half_width_hz}, {"step_hz", inner.step_hz}};
  return r;
}

void write_sweep_csv(std::ostream& os, const SweepResult& sweep) {
  sweep.check_shape();
  for (const SweepAxis& a : sweep.axes) os << a.name << ',';
  os << sweep.value_name;
  for (const auto& [name, column] : sweep.extra) os << ',' << name;
  os << '\n';
  for (std::size_t i = 0; i < sweep.rows(); ++i)
    for (std::size_t j = 0; j < sweep.cols(); ++j) {
      const std::size_t k = i * sweep.cols() + j;
      os << format_double(sweep.axes[0].values[i]) << ',';
      if (sweep.axes.size() == 2) os << format_double(sweep.axes[1].values[j]) << ',';
      os << format_double(sweep.values[k]);
      for (const auto& [name, column] : sweep.extra) os << ',' << format_double(column[k]);
      os << '\n';
    }
}

}  // namespace nvdnp
