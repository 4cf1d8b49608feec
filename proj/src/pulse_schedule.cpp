#include "nvdnp/pulse_schedule.hpp"

#include <cmath>
#include <numeric>

#include "nvdnp/types.hpp"

namespace nvdnp {

std::int64_t Schedule::total_duration_ns() const {
  return std::accumulate(segments.begin(), segments.end(), std::int64_t{0},
                         [](std::int64_t acc, const PulseSegment& s) { return acc + s.duration_ns; });
}

void Schedule::append(const Schedule& other) {
  segments.insert(segments.end(), other.segments.begin(), other.segments.end());
}

Schedule chopped_laser_train(std::int64_t on_ns, std::int64_t off_ns, int reps) {
  if (on_ns <= 0) throw DomainError("chopped_laser_train: on_ns must be > 0");
  if (off_ns < 0) throw DomainError("chopped_laser_train: off_ns must be >= 0");
  if (reps < 0) throw DomainError("chopped_laser_train: reps must be >= 0");

  Schedule s;
  s.label = "chopped-laser";
  s.segments.reserve(2 * static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    s.segments.push_back({on_ns, true, std::nullopt});
    s.segments.push_back({off_ns, false, std::nullopt});
  }
  return s;
}

Schedule standard_polarization_schedule(double delta_hz, double omega_hz, int n_cycles,
                                        std::int64_t t_mw_ns, const CycleTiming& timing) {
  if (n_cycles < 0) throw DomainError("standard_polarization_schedule: n_cycles must be >= 0");
  if (t_mw_ns < 0) throw DomainError("standard_polarization_schedule: t_mw_ns must be >= 0");
  if (omega_hz < 0.0) throw DomainError("standard_polarization_schedule: omega must be >= 0");

  Schedule cycle = chopped_laser_train(timing.laser_on_ns, timing.laser_off_ns, timing.laser_reps);
  cycle.segments.push_back({timing.rest_ns, false, std::nullopt});
  cycle.segments.push_back({t_mw_ns, false, MicrowaveDrive{delta_hz, omega_hz}});
  cycle.segments.push_back({timing.rest_ns, false, std::nullopt});

  Schedule s;
  s.label = "polarization N=" + std::to_string(n_cycles);
  for (int n = 0; n < n_cycles; ++n) s.append(cycle);
  return s;
}

std::vector<ScheduleWarning> validate(const Schedule& s) {
  std::vector<ScheduleWarning> out;
  for (std::size_t i = 0; i < s.segments.size(); ++i) {
    const PulseSegment& seg = s.segments[i];
    const std::string where = "segment " + std::to_string(i);
    if (seg.laser_on && seg.mw_on())
      out.push_back({WarningKind::Overlap, i, where + ": laser and microwave overlap"});
    if (seg.duration_ns == 0)
      out.push_back({WarningKind::ZeroDuration, i, where + ": zero duration"});
    if (seg.mw_on() && seg.mw->rabi_hz > 0.0) {
      const double area = seg.mw->rabi_hz * static_cast<double>(seg.duration_ns) * 1e-9;
      if (std::abs(area - 0.5) > kPiPulseTolerance * 0.5)
        out.push_back({WarningKind::PiPulseMismatch, i,
                       where + ": Omega*t_mw = " + std::to_string(area) + " (pi pulse expects 0.5)"});
    }
  }
  return out;
}

nlohmann::json schedule_to_json(const Schedule& s) {
  nlohmann::json segments = nlohmann::json::array();
  for (const PulseSegment& seg : s.segments) {
    nlohmann::json js = {{"duration_ns", seg.duration_ns}, {"laser", seg.laser_on}};
    if (seg.mw)
      js["mw"] = {{"delta_hz", seg.mw->detuning_hz}, {"omega_hz", seg.mw->rabi_hz}};
    else
      js["mw"] = nullptr;
    segments.push_back(std::move(js));
  }
  return {{"label", s.label}, {"segments", std::move(segments)}};
}

Schedule schedule_from_json(const nlohmann::json& j) {
  try {
    Schedule s;
    s.label = j.value("label", std::string{});
    for (const auto& js : j.at("segments")) {
      PulseSegment seg;
      seg.duration_ns = js.at("duration_ns").get<std::int64_t>();
      seg.laser_on = js.at("laser").get<bool>();
      if (js.contains("mw") && !js.at("mw").is_null()) {
        const auto& mw = js.at("mw");
        seg.mw = MicrowaveDrive{mw.at("delta_hz").get<double>(), mw.at("omega_hz").get<double>()};
      }
      if (seg.duration_ns < 0) throw ConfigError("schedule: negative segment duration");
      if (seg.mw && seg.mw->rabi_hz < 0.0) throw ConfigError("schedule: negative omega_hz");
      s.segments.push_back(seg);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schedule json: ") + e.what());
  }
}

}  // namespace nvdnp
