#include "nvdnp/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nvdnp/fitting.hpp"
#include "nvdnp/io.hpp"
#include "nvdnp/parallel.hpp"
#include "nvdnp/ramsey.hpp"

namespace nvdnp::cli {

namespace {

class IoError : public Error {
 public:
  using Error::Error;
};

template <typename T>
T read(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

AxisSpec axis_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("axis must be an object with min, max, step");
  return {read<double>(j, "min"), read<double>(j, "max"), read<double>(j, "step")};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* default_preset(const std::string& sub) {
  if (sub == "sweep-n") return "table-a1-n";
  if (sub == "sweep-field") return "table-a1-bz";
  if (sub == "sweep-ani" || sub == "sweep-field-ani") return "table-a1-fig4";
  return "table-a1-fit";
}

RunConfig from_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.setup = ExperimentSetup::from_preset(find_preset(name));
  return c;
}

// Options shared by all simulation subcommands.
struct Flags {
  std::string preset;
  std::string config;
  std::string out;
  std::optional<int> workers;
  std::optional<double> min, max, step;
  std::optional<double> delta;
  std::optional<int> n;
  std::optional<bool> reset;

  // sweep-ani / sweep-field-ani
  std::vector<double> ani;
  std::optional<double> ani_min, ani_max, ani_step;
  std::optional<double> inner_half_width;
  std::optional<double> inner_step;

  // ramsey
  int manifold = -1;
  double duration = 4e-6;
  double dt = 10e-9;
  double t2 = kDefaultT2Star;
  double probe = kDefaultProbeDetuning;
  std::vector<double> populations;

  // fit-curve
  std::string data;
  double init_f_rel = 0.0;
  double init_azz = 600e3;
  double init_ani = 100e3;
  int max_evaluations = 400;

  // trajectory
  std::int64_t interval_ns = 10;

  bool json = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--preset", f.preset, "named parameter set (see list-presets)");
  app->add_option("--config", f.config, "JSON run config");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--reset", f.reset, "apply the readout laser train before reading P (default true)");
}

void add_axis(CLI::App* app, Flags& f, const std::string& unit) {
  app->add_option("--min", f.min, "axis minimum (" + unit + ")");
  app->add_option("--max", f.max, "axis maximum (" + unit + ")");
  app->add_option("--step", f.step, "axis step (" + unit + ")");
}

RunConfig resolve(const std::string& sub, const Flags& f) {
  RunConfig c;
  std::optional<nlohmann::json> doc;
  if (!f.config.empty()) {
    try {
      doc = nlohmann::json::parse(slurp(f.config));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  const bool inline_params = doc && doc->contains("params");
  if (!f.preset.empty() && inline_params) throw ConfigError("give either --preset or inline params, not both");

  std::string name = f.preset;
  if (name.empty() && doc && doc->contains("preset")) name = read<std::string>(*doc, "preset");
  if (name.empty() && !inline_params) name = default_preset(sub);
  c = name.empty() ? RunConfig{} : from_preset(name);
  if (doc) {
    nlohmann::json d = *doc;
    if (!f.preset.empty()) d["preset"] = f.preset;
    c = config_from_json(d, c);
  }

  if (f.workers) c.workers = *f.workers;
  if (f.delta) c.delta_hz = *f.delta;
  if (f.n) c.n_max = *f.n;
  if (f.reset) c.setup.reset_before_readout = *f.reset;

  if (!f.out.empty()) {
    c.out_dir = f.out;
  } else if (c.out_dir.empty()) {
    const char* root = std::getenv(kOutRootEnv);
    c.out_dir = std::filesystem::path(root && *root ? root : "nvdnp-out") / sub;
  }
  return c;
}

// Resolved axes go back into the config so meta.json can replay the run.
AxisSpec axis(RunConfig& c, const Flags& f, const std::string& name, AxisSpec fallback) {
  AxisSpec a = fallback;
  if (auto it = c.axes.find(name); it != c.axes.end()) a = it->second;
  if (f.min) a.min = *f.min;
  if (f.max) a.max = *f.max;
  if (f.step) a.step = *f.step;
  c.axes[name] = a;
  return a;
}

std::vector<double> grid(const AxisSpec& a) { return make_grid(a.min, a.max, a.step); }

class Output {
 public:
  Output(std::string sub, const RunConfig& c) : sub_(std::move(sub)), config_(c) {
    std::error_code ec;
    std::filesystem::create_directories(c.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + c.out_dir.string() + "': " + ec.message());
  }

  void file(const std::string& name, const std::string& content) {
    const std::filesystem::path p = config_.out_dir / name;
    std::ofstream os(p, std::ios::binary);
    os << content;
    if (!os) throw IoError("cannot write '" + p.string() + "'");
    hashes_[name] = git_blob_hash(content);
  }

  void finish(nlohmann::json extra = nlohmann::json::object()) {
    nlohmann::json meta = {{"schema", kConfigSchema},
                           {"subcommand", sub_},
                           {"config", to_json(config_)},
                           {"files", hashes_}};
    for (auto& [k, v] : extra.items()) meta[k] = v;
    const std::string text = meta.dump(2) + "\n";
    const std::filesystem::path p = config_.out_dir / "meta.json";
    std::ofstream os(p, std::ios::binary);
    os << text;
    if (!os) throw IoError("cannot write '" + p.string() + "'");
  }

 private:
  std::string sub_;
  const RunConfig& config_;
  nlohmann::json hashes_ = nlohmann::json::object();
};

std::string csv(const SweepResult& s) {
  std::ostringstream os;
  write_sweep_csv(os, s);
  return os.str();
}

const char* kPlotHeader = "set datafile separator ','\nset key autotitle columnhead\n";

double resolve_delta(const RunConfig& c) {
  return c.delta_hz ? *c.delta_hz : resonant_detuning(c.setup, c.workers);
}

int cmd_sweep_detuning(RunConfig& c, const Flags& f, std::ostream& out) {
  const std::vector<double> g = grid(axis(c, f, "delta_hz", {-1e6, 1e6, 5e3}));
  const SweepResult s = sweep_detuning(c.setup, g, c.workers);
  Output o("sweep-detuning", c);
  o.file("sweep.csv", csv(s));
  o.file("plot.gp", std::string(kPlotHeader) +
                        "set xlabel 'detuning (kHz)'\nset ylabel 'P'\nset yrange [-1:1]\n"
                        "plot 'sweep.csv' using ($1/1e3):2 with linespoints pt 7 ps 0.4 title 'P'\n");
  o.finish();
  out << "wrote " << (c.out_dir / "sweep.csv").string() << '\n';
  return kExitOk;
}

int cmd_sweep_n(RunConfig& c, const Flags&, std::ostream& out) {
  const double delta = resolve_delta(c);
  const int n_max = c.n_max.value_or(20);
  const SweepResult s = sweep_repetitions(c.setup, n_max, delta);
  Output o("sweep-n", c);
  o.file("sweep.csv", csv(s));
  o.file("plot.gp", std::string(kPlotHeader) +
                        "set xlabel 'N'\nset ylabel 'P'\n"
                        "plot 'sweep.csv' using 1:2 with linespoints pt 7 title 'P'\n");
  o.finish({{"delta_hz", delta}});
  out << "wrote " << (c.out_dir / "sweep.csv").string() << '\n';
  return kExitOk;
}

InnerDetuningGrid inner(RunConfig& c, const Flags& f) {
  InnerDetuningGrid g = c.inner.value_or(InnerDetuningGrid{});
  if (f.inner_half_width) g.half_width_hz = *f.inner_half_width;
  if (f.inner_step) g.step_hz = *f.inner_step;
  c.inner = g;
  return g;
}

int cmd_sweep_field(RunConfig& c, const Flags& f, std::ostream& out) {
  const std::vector<double> g = grid(axis(c, f, "b_z", {300.0, 1000.0, 10.0}));
  const SweepResult s = sweep_field(c.setup, g, inner(c, f), c.workers);
  Output o("sweep-field", c);
  o.file("sweep.csv", csv(s));
  o.file("plot.gp", std::string(kPlotHeader) +
                        "set xlabel 'B_z (G)'\nset ylabel 'max |P|'\nset yrange [0:1]\n"
                        "plot 'sweep.csv' using 1:2 with linespoints pt 7 title 'max |P|'\n");
  o.finish();
  out << "wrote " << (c.out_dir / "sweep.csv").string() << '\n';
  return kExitOk;
}

// Explicit lists (flag, then config) win over the a_ani_hz axis.
std::vector<double> ani_values(RunConfig& c, const Flags& f, AxisSpec fallback) {
  if (!f.ani.empty()) c.a_ani_values = f.ani;
  if (!c.a_ani_values.empty()) {
    c.axes.erase("a_ani_hz");
    return c.a_ani_values;
  }
  AxisSpec a = fallback;
  if (auto it = c.axes.find("a_ani_hz"); it != c.axes.end()) a = it->second;
  if (f.ani_min) a.min = *f.ani_min;
  if (f.ani_max) a.max = *f.ani_max;
  if (f.ani_step) a.step = *f.ani_step;
  c.axes["a_ani_hz"] = a;
  return grid(a);
}

int cmd_sweep_ani(RunConfig& c, const Flags& f, std::ostream& out) {
  const std::vector<double> d = grid(axis(c, f, "delta_hz", {-1e6, 1e6, 5e3}));
  const std::vector<double> a =
      f.ani.empty() && c.a_ani_values.empty() && !c.axes.contains("a_ani_hz") && !f.ani_min && !f.ani_max &&
              !f.ani_step
          ? (c.a_ani_values = {0.0, 50e3, 100e3, 200e3, 400e3})
          : ani_values(c, f, {0.0, 400e3, 50e3});
  const SweepResult s = sweep_ani_detuning(c.setup, a, d, c.workers);
  Output o("sweep-ani", c);
  o.file("sweep.csv", csv(s));
  o.file("max.csv", csv(max_trace(s, 0)));
  std::string values;
  for (double v : a) values += (values.empty() ? "" : " ") + format_double(v);
  o.file("plot.gp", std::string(kPlotHeader) +
                        "set multiplot layout 1,2\n"
                        "set xlabel 'detuning (kHz)'\nset ylabel 'P'\nset yrange [-1:1]\n"
                        "plot for [v in \"" + values +
                        "\"] 'sweep.csv' using ($2/1e3):($1 == v+0 ? $3 : 1/0) with lines title 'A_ani='.v\n"
                        "set xlabel 'A_ani (kHz)'\nset ylabel 'max |P|'\n"
                        "plot 'max.csv' using ($1/1e3):(abs($2)) with linespoints pt 7 title 'max |P|'\n"
                        "unset multiplot\n");
  o.finish();
  out << "wrote " << (c.out_dir / "sweep.csv").string() << '\n';
  return kExitOk;
}

int cmd_sweep_field_ani(RunConfig& c, const Flags& f, std::ostream& out) {
  const std::vector<double> b = grid(axis(c, f, "b_z", {400.0, 900.0, 10.0}));
  const std::vector<double> a = ani_values(c, f, {0.0, 400e3, 50e3});
  const SweepResult s = sweep_field_ani(c.setup, b, a, inner(c, f), c.workers);
  Output o("sweep-field-ani", c);
  o.file("sweep.csv", csv(s));
  o.file("plot.gp", std::string(kPlotHeader) +
                        "set xlabel 'B_z (G)'\nset ylabel 'A_ani (kHz)'\nset cblabel 'max |P|'\n"
                        "set view map\nset cbrange [0:1]\n"
                        "splot 'sweep.csv' using 1:($2/1e3):3 with image notitle\n");
  o.finish();
  out << "wrote " << (c.out_dir / "sweep.csv").string() << '\n';
  return kExitOk;
}

Manifold manifold_of(int m) {
  if (m == 1) return Manifold::Plus;
  if (m == -1) return Manifold::Minus;
  throw ConfigError("--manifold must be +1 or -1");
}

int cmd_ramsey(RunConfig& c, const Flags& f, std::ostream& out) {
  const Manifold m = manifold_of(f.manifold);
  nlohmann::json extra = nlohmann::json::object();
  RamseyModel model;
  double p_state = 0.0;
  if (!f.populations.empty()) {
    if (f.populations.size() != 2) throw ConfigError("--populations takes two values: up,down");
    model = ramsey_model_from_populations(c.setup.params, m, f.populations[0], f.populations[1], f.probe, f.t2);
    p_state = (f.populations[0] - f.populations[1]) / (f.populations[0] + f.populations[1]);
  } else {
    const double delta = resolve_delta(c);
    Evolver ev(c.setup.params, c.setup.rates, c.setup.options);
    const SequenceParams& q = c.setup.sequence;
    Schedule s = standard_polarization_schedule(delta, q.omega_hz, q.n_cycles, q.t_mw_ns, q.timing);
    if (c.setup.reset_before_readout) s.append(readout_reset(q.timing));
    const DensityMatrix rho = ev.evolve_final(initial_mixed_state(), s);
    model = ramsey_model_from_state(c.setup.params, m, rho, f.probe, f.t2);
    p_state = polarization_of_state(rho).p;
    extra["delta_hz"] = delta;
  }

  const TimeSeries ts = synthesize_ramsey(model, f.duration, f.dt);
  const Spectrum sp = fft_spectrum(ts.values, ts.dt_s);
  const LorentzianPairFit lf = fit_lorentzian_pair(sp, lorentzian_guess(model), m);
  const TimeDomainFit tf = fit_time_domain(ts, time_domain_guess(model), m);

  nlohmann::json peaks = nlohmann::json::array();
  for (const RamseyPeak& pk : model.peaks)
    peaks.push_back({{"frequency_hz", pk.frequency_hz},
                     {"amplitude", pk.amplitude},
                     {"visibility", pk.visibility},
                     {"origin", pk.origin == NuclearSpin::Up ? "up" : "down"}});
  const nlohmann::json fits = {{"P_state", p_state},
                               {"peaks", peaks},
                               {"lorentzian", to_json(lf)},
                               {"time_domain", to_json(tf)}};

  Output o("ramsey", c);
  std::ostringstream sig, spec;
  write_time_series_csv(sig, ts);
  write_spectrum_csv(spec, sp);
  o.file("signal.csv", sig.str());
  o.file("spectrum.csv", spec.str());
  o.file("fit.json", fits.dump(2) + "\n");
  o.file("plot.gp", std::string(kPlotHeader) +
                        "set multiplot layout 2,1\n"
                        "set xlabel 't (ns)'\nset ylabel 'signal'\n"
                        "plot 'signal.csv' using 1:2 with lines title 'Ramsey'\n"
                        "set xlabel 'f (MHz)'\nset ylabel '|FFT|'\n"
                        "plot 'spectrum.csv' using ($1/1e6):2 with lines title 'FFT'\n"
                        "unset multiplot\n");
  extra["manifold"] = f.manifold;
  extra["probe_detuning_hz"] = f.probe;
  o.finish(extra);
  out << "P_state=" << format_double(p_state) << " P_lorentzian=" << format_double(lf.p)
      << " P_time_domain=" << format_double(tf.p) << '\n';
  return kExitOk;
}

std::vector<CurvePoint> read_curve(const std::filesystem::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("fit data '" + p.string() + "' is empty");
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
  }
  const auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ConfigError("fit data needs a '" + name + "' column");
  };
  const std::size_t cd = col("delta_hz");
  const std::size_t cp = col("P");
  std::vector<CurvePoint> pts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (cells.size() != header.size()) throw ConfigError("fit data: ragged row '" + line + "'");
    try {
      pts.push_back({std::stod(cells[cd]), std::stod(cells[cp])});
    } catch (const std::exception&) {
      throw ConfigError("fit data: bad number in row '" + line + "'");
    }
  }
  return pts;
}

int cmd_fit_curve(RunConfig& c, const Flags& f, std::ostream& out) {
  if (f.data.empty()) throw ConfigError("fit-curve needs --data <csv>");
  const std::vector<CurvePoint> data = read_curve(f.data);
  if (data.size() < 10) throw ConfigError("fit-curve needs at least 10 data points");
  CurveFitOptions opt;
  opt.f_rel_hz = f.init_f_rel;
  opt.a_zz_magnitude_hz = f.init_azz;
  opt.a_ani_hz = f.init_ani;
  opt.max_evaluations = f.max_evaluations;
  opt.workers = c.workers;
  const CurveFit fit = fit_polarization_curve(data, c.setup, opt);

  ExperimentSetup best = c.setup;
  best.params.a_zz = fit.a_zz_hz;
  best.params.a_ani = fit.a_ani_hz;
  SweepResult s;
  s.axes.push_back({"delta_hz", "Hz", {}});
  std::vector<double> model(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    s.axes[0].values.push_back(data[i].delta_hz);
    s.values.push_back(data[i].p);
  }
  parallel_for(data.size(), c.workers, [&](std::size_t, std::size_t i) {
    model[i] = final_polarization(best, data[i].delta_hz - fit.f_rel_hz);
  });
  s.extra.emplace_back("P_model", std::move(model));

  Output o("fit-curve", c);
  o.file("fit.json", to_json(fit).dump(2) + "\n");
  o.file("fit.csv", csv(s));
  o.file("plot.gp", std::string(kPlotHeader) +
                        "set xlabel 'detuning (kHz)'\nset ylabel 'P'\n"
                        "plot 'fit.csv' using ($1/1e3):2 with points pt 7 title 'data', "
                        "'' using ($1/1e3):3 with lines title 'fit'\n");
  o.finish({{"data", f.data}, {"data_hash", git_blob_hash(slurp(f.data))}});
  out << "f_rel_hz=" << format_double(fit.f_rel_hz) << " a_zz_hz=" << format_double(fit.a_zz_hz)
      << " a_ani_hz=" << format_double(fit.a_ani_hz) << " converged=" << (fit.report.converged ? 1 : 0)
      << '\n';
  if (!fit.report.converged) throw FitError("fit-curve: " + fit.report.stop_reason, fit.report);
  return kExitOk;
}

int cmd_trajectory(RunConfig& c, const Flags& f, std::ostream& out) {
  const double delta = resolve_delta(c);
  const int n = c.n_max.value_or(c.setup.sequence.n_cycles);
  if (f.interval_ns <= 0) throw ConfigError("--interval must be > 0");
  const Trajectory t = polarization_trajectory(c.setup, delta, n, f.interval_ns);
  std::ostringstream os;
  write_trajectory_csv(os, t);
  Output o("trajectory", c);
  o.file("trajectory.csv", os.str());
  o.file("plot.gp", std::string(kPlotHeader) +
                        "set xlabel 't (us)'\nset ylabel 'P'\n"
                        "plot 'trajectory.csv' using ($1/1e3):'P' with lines title 'P(t)'\n");
  o.finish({{"delta_hz", delta}, {"n_cycles", n}});
  out << "wrote " << (c.out_dir / "trajectory.csv").string() << '\n';
  return kExitOk;
}

std::string preset_cell(const Preset& p, const std::string& field, const std::string& value) {
  for (const std::string& s : p.swept)
    if (s == field) return "swept";
  return value;
}

std::string khz(double hz) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g kHz", hz / 1e3);
  return buf;
}

void list_presets(std::ostream& out, bool json) {
  if (json) {
    nlohmann::json all = nlohmann::json::array();
    for (const Preset& p : presets()) all.push_back(to_json(p));
    out << all.dump(2) << '\n';
    return;
  }
  struct Row {
    std::string label;
    std::string field;
    std::function<std::string(const Preset&)> value;
  };
  const std::vector<Row> rows = {
      {"t_gl", "", [](const Preset& p) { return std::to_string(p.t_gl_ns) + " ns"; }},
      {"t_mw", "t_mw", [](const Preset& p) { return format_double(p.sequence.t_mw_ns * 1e-3) + " us"; }},
      {"Omega", "omega", [](const Preset& p) { return khz(p.sequence.omega_hz); }},
      {"Gamma_gl", "", [](const Preset& p) { return format_double(p.rates.gamma_gl / 1e6) + " MHz"; }},
      {"D", "", [](const Preset& p) { return format_double(p.params.d_hz / 1e9) + " GHz"; }},
      {"gamma_e", "", [](const Preset& p) { return format_double(p.params.gamma_e / 1e6) + " MHz/G"; }},
      {"gamma_c", "", [](const Preset& p) { return format_double(p.params.gamma_c / 1e3) + " kHz/G"; }},
      {"Gamma_i^D", "",
       [](const Preset& p) {
         std::string s;
         for (double g : p.rates.gamma_dephasing) s += (s.empty() ? "" : "/") + format_double(g);
         return s;
       }},
      {"Gamma_12(21)^gl", "", [](const Preset& p) { return format_double(p.rates.gamma_nuclear_gl); }},
      {"n_th", "", [](const Preset& p) { return format_double(p.rates.n_th); }},
      {"|A_zz|", "a_zz", [](const Preset& p) { return khz(std::abs(p.params.a_zz)); }},
      {"A_zz sign", "", [](const Preset& p) { return std::string(p.params.a_zz < 0 ? "negative" : "positive"); }},
      {"A_ani", "a_ani", [](const Preset& p) { return khz(p.params.a_ani); }},
      {"B_z", "b_z", [](const Preset& p) { return format_double(p.params.b_z) + " G"; }},
      {"N", "n_cycles", [](const Preset& p) { return std::to_string(p.sequence.n_cycles); }},
  };

  const std::vector<Preset>& all = presets();
  std::vector<std::size_t> width(all.size() + 1, 0);
  std::vector<std::vector<std::string>> table;
  table.push_back({""});
  for (const Preset& p : all) table.back().push_back(p.name);
  for (const Row& r : rows) {
    std::vector<std::string> line{r.label};
    for (const Preset& p : all) line.push_back(r.field.empty() ? r.value(p) : preset_cell(p, r.field, r.value(p)));
    table.push_back(std::move(line));
  }
  for (const auto& line : table)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  for (const auto& line : table) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      out << line[i];
      if (i + 1 < line.size()) out << std::string(width[i] - line[i].size() + 2, ' ');
    }
    out << '\n';
  }
  out << '\n';
  for (const Preset& p : all) out << p.name << ": " << p.notes << '\n';
  out << "Swept fields show the preset's default when run without an axis override.\n";
}

std::string escape(const std::string& s) { return nlohmann::json(s).dump(); }

int fail(std::ostream& err, int code, const char* kind, const std::string& message) {
  err << "{\"error\":\"" << kind << "\",\"exit\":" << code << ",\"message\":" << escape(message) << "}\n";
  return code;
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j, const RunConfig& base) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!j.contains("schema")) throw ConfigError("config needs a 'schema' field");
  const int schema = read<int>(j, "schema");
  if (schema != kConfigSchema)
    throw ConfigError("unsupported config schema " + std::to_string(schema) + " (expected " +
                      std::to_string(kConfigSchema) + ")");
  static const std::set<std::string> known = {"schema", "preset", "params", "rates", "sequence", "options",
                                               "reset_before_readout", "delta_hz", "n_max", "axes", "a_ani_values",
                                               "inner_delta_hz", "out", "workers"};
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ConfigError("unknown config field '" + k + "'");
  if (j.contains("preset") && j.contains("params"))
    throw ConfigError("config must give exactly one of 'preset' or inline 'params'");

  RunConfig c = base;
  if (j.contains("preset")) {
    const std::string name = read<std::string>(j, "preset");
    if (name != base.preset) {
      const RunConfig fresh = from_preset(name);
      c.preset = fresh.preset;
      c.setup = fresh.setup;
    }
  }
  if (j.contains("params")) {
    c.preset.clear();
    c.setup.preset_name.clear();
    c.setup.params = system_params_from_json(j.at("params"), base.setup.params);
  }
  if (j.contains("rates")) c.setup.rates = rates_from_json(j.at("rates"), c.setup.rates);
  if (j.contains("sequence")) c.setup.sequence = sequence_from_json(j.at("sequence"), c.setup.sequence);
  if (j.contains("options")) c.setup.options = options_from_json(j.at("options"), c.setup.options);
  if (j.contains("reset_before_readout")) c.setup.reset_before_readout = read<bool>(j, "reset_before_readout");
  if (j.contains("delta_hz")) c.delta_hz = read<double>(j, "delta_hz");
  if (j.contains("n_max")) c.n_max = read<int>(j, "n_max");
  if (j.contains("workers")) c.workers = read<int>(j, "workers");
  if (j.contains("out")) c.out_dir = read<std::string>(j, "out");
  if (j.contains("axes")) {
    if (!j.at("axes").is_object()) throw ConfigError("'axes' must be an object");
    for (const auto& [name, a] : j.at("axes").items()) c.axes[name] = axis_from_json(a);
  }
  if (j.contains("a_ani_values")) c.a_ani_values = read<std::vector<double>>(j, "a_ani_values");
  if (j.contains("inner_delta_hz")) {
    const nlohmann::json& g = j.at("inner_delta_hz");
    if (!g.is_object()) throw ConfigError("'inner_delta_hz' must be an object");
    for (const auto& [k, v] : g.items())
      if (k != "half_width" && k != "step") throw ConfigError("unknown field 'inner_delta_hz." + k + "'");
    InnerDetuningGrid inner;
    if (g.contains("half_width")) inner.half_width_hz = read<double>(g, "half_width");
    if (g.contains("step")) inner.step_hz = read<double>(g, "step");
    c.inner = inner;
  }
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json axes = nlohmann::json::object();
  for (const auto& [name, a] : c.axes) axes[name] = {{"min", a.min}, {"max", a.max}, {"step", a.step}};
  nlohmann::json j = {{"schema", c.schema},
                      {"params", to_json(c.setup.params)},
                      {"rates", to_json(c.setup.rates)},
                      {"sequence", to_json(c.setup.sequence)},
                      {"options", to_json(c.setup.options)},
                      {"reset_before_readout", c.setup.reset_before_readout},
                      {"axes", axes}};
  if (!c.preset.empty()) j["based_on_preset"] = c.preset;
  if (c.delta_hz) j["delta_hz"] = *c.delta_hz;
  if (c.n_max) j["n_max"] = *c.n_max;
  if (!c.a_ani_values.empty()) j["a_ani_values"] = c.a_ani_values;
  if (c.inner) j["inner_delta_hz"] = {{"half_width", c.inner->half_width_hz}, {"step", c.inner->step_hz}};
  return j;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"NV-13C dynamic nuclear polarization simulator"};
  app.require_subcommand(1);
  Flags f;

  CLI::App* lp = app.add_subcommand("list-presets", "print the built-in parameter sets");
  lp->add_flag("--json", f.json, "print JSON instead of a table");

  CLI::App* sd = app.add_subcommand("sweep-detuning", "P(final) versus MW detuning");
  add_common(sd, f);
  add_axis(sd, f, "Hz");

  CLI::App* sn = app.add_subcommand("sweep-n", "P versus number of cycles");
  add_common(sn, f);
  sn->add_option("--n", f.n, "largest cycle count")->check(CLI::NonNegativeNumber);
  sn->add_option("--delta", f.delta, "MW detuning (Hz); default: positive-lobe resonance");

  CLI::App* sf = app.add_subcommand("sweep-field", "max over detuning of |P| versus B_z");
  add_common(sf, f);
  add_axis(sf, f, "G");
  sf->add_option("--inner-half-width", f.inner_half_width, "detuning window half width (Hz)");
  sf->add_option("--inner-step", f.inner_step, "detuning window step (Hz)");

  CLI::App* sa = app.add_subcommand("sweep-ani", "P versus detuning for several A_ani");
  add_common(sa, f);
  add_axis(sa, f, "Hz");
  sa->add_option("--ani", f.ani, "A_ani values (Hz)")->delimiter(',');
  sa->add_option("--ani-min", f.ani_min, "A_ani minimum (Hz)");
  sa->add_option("--ani-max", f.ani_max, "A_ani maximum (Hz)");
  sa->add_option("--ani-step", f.ani_step, "A_ani step (Hz)");

  CLI::App* sfa = app.add_subcommand("sweep-field-ani", "max over detuning of |P| on a (B_z, A_ani) grid");
  add_common(sfa, f);
  add_axis(sfa, f, "G");
  sfa->add_option("--ani", f.ani, "A_ani values (Hz)")->delimiter(',');
  sfa->add_option("--ani-min", f.ani_min, "A_ani minimum (Hz)");
  sfa->add_option("--ani-max", f.ani_max, "A_ani maximum (Hz)");
  sfa->add_option("--ani-step", f.ani_step, "A_ani step (Hz)");
  sfa->add_option("--inner-half-width", f.inner_half_width, "detuning window half width (Hz)");
  sfa->add_option("--inner-step", f.inner_step, "detuning window step (Hz)");

  CLI::App* ra = app.add_subcommand("ramsey", "synthesize and analyse Ramsey fringes of the polarized state");
  add_common(ra, f);
  ra->add_option("--manifold", f.manifold, "probed electron manifold, +1 or -1");
  ra->add_option("--delta", f.delta, "polarization MW detuning (Hz); default: positive-lobe resonance");
  ra->add_option("--populations", f.populations, "skip simulation: up,down nuclear populations")->delimiter(',');
  ra->add_option("--duration", f.duration, "record length (s)");
  ra->add_option("--dt", f.dt, "sample spacing (s)");
  ra->add_option("--t2", f.t2, "T2* (s)");
  ra->add_option("--probe", f.probe, "probe detuning (Hz)");

  CLI::App* fc = app.add_subcommand("fit-curve", "fit A_zz, A_ani and f_rel to a P(detuning) curve");
  add_common(fc, f);
  fc->add_option("--data", f.data, "CSV with delta_hz and P columns")->required();
  fc->add_option("--init-f-rel", f.init_f_rel, "initial f_rel (Hz)");
  fc->add_option("--init-azz", f.init_azz, "initial |A_zz| (Hz)");
  fc->add_option("--init-ani", f.init_ani, "initial A_ani (Hz)");
  fc->add_option("--max-evaluations", f.max_evaluations, "model evaluation budget");

  CLI::App* tr = app.add_subcommand("trajectory", "density matrix versus time through the sequence");
  add_common(tr, f);
  tr->add_option("--delta", f.delta, "MW detuning (Hz); default: positive-lobe resonance");
  tr->add_option("--n", f.n, "number of cycles")->check(CLI::NonNegativeNumber);
  tr->add_option("--interval", f.interval_ns, "sampling interval (ns)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, kExitConfig, "usage", e.what());
  }

  try {
    if (lp->parsed()) {
      list_presets(out, f.json);
      return kExitOk;
    }
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    RunConfig c = resolve(name, f);
    if (sub == sd) return cmd_sweep_detuning(c, f, out);
    if (sub == sn) return cmd_sweep_n(c, f, out);
    if (sub == sf) return cmd_sweep_field(c, f, out);
    if (sub == sa) return cmd_sweep_ani(c, f, out);
    if (sub == sfa) return cmd_sweep_field_ani(c, f, out);
    if (sub == ra) return cmd_ramsey(c, f, out);
    if (sub == fc) return cmd_fit_curve(c, f, out);
    if (sub == tr) return cmd_trajectory(c, f, out);
    return fail(err, kExitConfig, "usage", "unknown subcommand");
  } catch (const ConfigError& e) {
    return fail(err, kExitConfig, "config", e.what());
  } catch (const IoError& e) {
    return fail(err, kExitConfig, "io", e.what());
  } catch (const FitError& e) {
    return fail(err, kExitFit, "fit", std::string(e.what()) + " (residual " +
                                          format_double(e.report().residual_norm) + ")");
  } catch (const std::exception& e) {
    return fail(err, kExitNumerical, "numerical", e.what());
  }
}

}  // namespace nvdnp::cli
