#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace nvdnp {

/// Microwave drive on the m_s = 0 ↔ +1 transition.
struct MicrowaveDrive {
  double detuning_hz = 0.0;  // Δ
  double rabi_hz = 0.0;      // Ω

  bool operator==(const MicrowaveDrive&) const = default;
};

/// Piecewise-constant control interval. Time is integer nanoseconds.
struct PulseSegment {
  std::int64_t duration_ns = 0;
  bool laser_on = false;
  std::optional<MicrowaveDrive> mw;

  bool mw_on() const { return mw.has_value(); }

  bool operator==(const PulseSegment&) const = default;
};

struct Schedule {
  std::string label;
  std::vector<PulseSegment> segments;

  std::int64_t total_duration_ns() const;
  void append(const Schedule& other);

  bool operator==(const Schedule&) const = default;
};

/// Timings of one polarization cycle: chopped laser train, rest, MW, rest.
struct CycleTiming {
  std::int64_t laser_on_ns = 30;
  std::int64_t laser_off_ns = 60;
  int laser_reps = 17;
  std::int64_t rest_ns = 100;

  bool operator==(const CycleTiming&) const = default;
};

/// `reps` × (laser on, laser off). Requires on_ns > 0, off_ns >= 0, reps >= 0.
Schedule chopped_laser_train(std::int64_t on_ns, std::int64_t off_ns, int reps);

/// n_cycles × [laser train; rest; MW(t_mw_ns, Δ, Ω); rest].
Schedule standard_polarization_schedule(double delta_hz, double omega_hz, int n_cycles,
                                        std::int64_t t_mw_ns, const CycleTiming& timing = {});

enum class WarningKind { Overlap, ZeroDuration, PiPulseMismatch };

struct ScheduleWarning {
  WarningKind kind;
  std::size_t segment;
  std::string message;
};

/// Relative tolerance of the Ω·t_mw = 1/2 check.
inline constexpr double kPiPulseTolerance = 1e-4;

std::vector<ScheduleWarning> validate(const Schedule& s);

// JSON: {label, segments:[{duration_ns, laser, mw:{delta_hz, omega_hz}|null}]}
nlohmann::json schedule_to_json(const Schedule& s);
Schedule schedule_from_json(const nlohmann::json& j);

}  // namespace nvdnp
