#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "nvdnp/experiments.hpp"

namespace nvdnp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitFit = 4;

inline constexpr int kConfigSchema = 1;

/// Environment variable naming the default output root.
inline constexpr char kOutRootEnv[] = "NVDNP_OUT_ROOT";

struct AxisSpec {
  double min;
  double max;
  double step;
};

/// Resolved run configuration: preset defaults, then the config file, then flags.
struct RunConfig {
  int schema = kConfigSchema;
  std::string preset;  // empty for inline params
  ExperimentSetup setup;
  std::optional<double> delta_hz;
  std::optional<int> n_max;
  std::map<std::string, AxisSpec> axes;
  std::vector<double> a_ani_values;  // overrides the a_ani_hz axis
  std::optional<InnerDetuningGrid> inner;
  std::filesystem::path out_dir;
  int workers = 1;
};

/// Parses a config document over `base`. Exactly one of "preset" or inline
/// "params" may appear. Throws ConfigError.
RunConfig config_from_json(const nlohmann::json& j, const RunConfig& base);

nlohmann::json to_json(const RunConfig& c);

/// Runs the tool on argv-style arguments (argv[0] is the program name).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nvdnp::cli
