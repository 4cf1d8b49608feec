#include "nvdnp/presets.hpp"

namespace nvdnp {

namespace {

constexpr char kSignNote[] =
    "A_zz stored negative: the table lists magnitudes, and only A_zz < 0 puts "
    "A_zz + gamma_c*B_z near zero at 520 G. phi = 0 (not reported).";

std::vector<Preset> build_presets() {
  Preset fit;
  fit.name = "table-a1-fit";
  fit.column = "Fitting P vs f_mw";
  fit.notes = std::string("A_zz/A_ani are outputs of this column's fit; the preset holds the fitted values. ") + kSignNote;

  Preset n = fit;
  n.name = "table-a1-n";
  n.column = "P vs N";
  n.swept = {"n_cycles"};
  n.notes = kSignNote;

  Preset bz = fit;
  bz.name = "table-a1-bz";
  bz.column = "P vs B_z";
  bz.swept = {"b_z"};
  bz.notes = kSignNote;

  Preset fig4 = fit;
  fig4.name = "table-a1-fig4";
  fig4.column = "P vs B_z and A_ani";
  fig4.params.a_zz = -625e3;
  fig4.sequence.t_mw_ns = 20000;
  fig4.sequence.omega_hz = 25e3;
  fig4.sequence.n_cycles = 10;
  fig4.swept = {"a_ani", "b_z"};
  fig4.notes = std::string("A_ani default is the fitted 215.3535 kHz. ") + kSignNote;

  return {fit, n, bz, fig4};
}

template <typename T>
T read(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = build_presets();
  return all;
}

const Preset& find_preset(const std::string& name) {
  for (const Preset& p : presets())
    if (p.name == name) return p;
  throw ConfigError("unknown preset '" + name + "'");
}

nlohmann::json to_json(const SystemParams& p) {
  return {{"d_hz", p.d_hz},       {"gamma_e", p.gamma_e}, {"gamma_c", p.gamma_c}, {"b_z", p.b_z},
          {"a_zz", p.a_zz},       {"a_ani", p.a_ani},     {"phi", p.phi}};
}

nlohmann::json to_json(const RelaxationRates& r) {
  return {{"gamma_gl", r.gamma_gl},
          {"n_th", r.n_th},
          {"gamma_dephasing", r.gamma_dephasing},
          {"gamma_nuclear_gl", r.gamma_nuclear_gl}};
}

nlohmann::json to_json(const SequenceParams& s) {
  return {{"t_mw_ns", s.t_mw_ns},
          {"omega_hz", s.omega_hz},
          {"n_cycles", s.n_cycles},
          {"laser_on_ns", s.timing.laser_on_ns},
          {"laser_off_ns", s.timing.laser_off_ns},
          {"laser_reps", s.timing.laser_reps},
          {"rest_ns", s.timing.rest_ns}};
}

nlohmann::json to_json(const ModelOptions& o) {
  const char* optical = o.optical == OpticalChannels::DrivenManifold  ? "driven"
                        : o.optical == OpticalChannels::LowerManifold ? "lower"
                                                                      : "both";
  return {{"restrict_to_driven_subspace", o.restrict_to_driven_subspace}, {"optical_channels", optical}};
}

nlohmann::json to_json(const Preset& p) {
  return {{"name", p.name},           {"column", p.column},       {"params", to_json(p.params)},
          {"rates", to_json(p.rates)}, {"sequence", to_json(p.sequence)}, {"t_gl_ns", p.t_gl_ns},
          {"swept", p.swept},         {"notes", p.notes}};
}

SystemParams system_params_from_json(const nlohmann::json& j, const SystemParams& base) {
  if (!j.is_object()) throw ConfigError("params must be an object");
  SystemParams p;
  p.d_hz = read(j, "d_hz", base.d_hz);
  p.gamma_e = read(j, "gamma_e", base.gamma_e);
  p.gamma_c = read(j, "gamma_c", base.gamma_c);
  p.b_z = read(j, "b_z", base.b_z);
  p.a_zz = read(j, "a_zz", base.a_zz);
  p.a_ani = read(j, "a_ani", base.a_ani);
  p.phi = read(j, "phi", base.phi);
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

RelaxationRates rates_from_json(const nlohmann::json& j, const RelaxationRates& base) {
  if (!j.is_object()) throw ConfigError("rates must be an object");
  RelaxationRates r;
  r.gamma_gl = read(j, "gamma_gl", base.gamma_gl);
  r.n_th = read(j, "n_th", base.n_th);
  r.gamma_dephasing = read(j, "gamma_dephasing", base.gamma_dephasing);
  r.gamma_nuclear_gl = read(j, "gamma_nuclear_gl", base.gamma_nuclear_gl);
  try {
    r.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return r;
}

SequenceParams sequence_from_json(const nlohmann::json& j, const SequenceParams& base) {
  if (!j.is_object()) throw ConfigError("sequence must be an object");
  SequenceParams s;
  s.t_mw_ns = read(j, "t_mw_ns", base.t_mw_ns);
  s.omega_hz = read(j, "omega_hz", base.omega_hz);
  s.n_cycles = read(j, "n_cycles", base.n_cycles);
  s.timing.laser_on_ns = read(j, "laser_on_ns", base.timing.laser_on_ns);
  s.timing.laser_off_ns = read(j, "laser_off_ns", base.timing.laser_off_ns);
  s.timing.laser_reps = read(j, "laser_reps", base.timing.laser_reps);
  s.timing.rest_ns = read(j, "rest_ns", base.timing.rest_ns);
  if (s.t_mw_ns < 0 || s.omega_hz < 0 || s.n_cycles < 0 || s.timing.laser_on_ns <= 0 ||
      s.timing.laser_off_ns < 0 || s.timing.laser_reps < 0 || s.timing.rest_ns < 0)
    throw ConfigError("sequence: durations, omega and counts must be non-negative (laser_on_ns > 0)");
  return s;
}

ModelOptions options_from_json(const nlohmann::json& j, const ModelOptions& base) {
  if (!j.is_object()) throw ConfigError("options must be an object");
  ModelOptions o = base;
  o.restrict_to_driven_subspace = read(j, "restrict_to_driven_subspace", base.restrict_to_driven_subspace);
  if (j.contains("optical_channels")) {
    const std::string v = read<std::string>(j, "optical_channels", "driven");
    if (v == "driven")
      o.optical = OpticalChannels::DrivenManifold;
    else if (v == "lower")
      o.optical = OpticalChannels::LowerManifold;
    else if (v == "both")
      o.optical = OpticalChannels::BothManifolds;
    else
      throw ConfigError("optical_channels must be driven|lower|both, got '" + v + "'");
  }
  return o;
}

}  // namespace nvdnp
