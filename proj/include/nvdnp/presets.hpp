#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "nvdnp/lindblad.hpp"
#include "nvdnp/pulse_schedule.hpp"
#include "nvdnp/spin_core.hpp"

namespace nvdnp {

/// Knobs of the standard polarization sequence.
struct SequenceParams {
  std::int64_t t_mw_ns = 1700;
  double omega_hz = 294.1176e3;
  int n_cycles = 6;
  CycleTiming timing;

  bool operator==(const SequenceParams&) const = default;
};

/// One column of the published coefficient table.
struct Preset {
  std::string name;
  std::string column;
  SystemParams params;
  RelaxationRates rates;
  SequenceParams sequence;
  std::int64_t t_gl_ns = 300;  // listed aggregate laser time; recorded, not simulated
  std::vector<std::string> swept;  // fields the column leaves open; values here are defaults
  std::string notes;
};

const std::vector<Preset>& presets();

/// Throws ConfigError for an unknown name.
const Preset& find_preset(const std::string& name);

nlohmann::json to_json(const SystemParams& p);
nlohmann::json to_json(const RelaxationRates& r);
nlohmann::json to_json(const SequenceParams& s);
nlohmann::json to_json(const ModelOptions& o);
nlohmann::json to_json(const Preset& p);

// Missing keys keep the values of `base`. Throw ConfigError on type errors.
SystemParams system_params_from_json(const nlohmann::json& j, const SystemParams& base = {});
RelaxationRates rates_from_json(const nlohmann::json& j, const RelaxationRates& base = {});
SequenceParams sequence_from_json(const nlohmann::json& j, const SequenceParams& base = {});
ModelOptions options_from_json(const nlohmann::json& j, const ModelOptions& base = {});

}  // namespace nvdnp
