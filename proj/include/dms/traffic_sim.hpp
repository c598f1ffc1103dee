#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dms/common.hpp"
#include "dms/road_geometry.hpp"

namespace dms {

enum class Mode { dms_ph, dms_lateral, no_dms };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::dms_ph: return "dms_ph";
    case Mode::dms_lateral: return "dms_lateral";
    case Mode::no_dms: return "no_dms";
  }
  return "?";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "dms_ph") return Mode::dms_ph;
  if (s == "dms_lateral") return Mode::dms_lateral;
  if (s == "no_dms") return Mode::no_dms;
  return std::nullopt;
}

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class SimulationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpeedClass {
  double v_max{};
  double accel{};
};

// Defaults reproduce the octagon experiment: 23 vehicles, 20000 s, two speed
// classes, 30 s intent period, three lanes.
struct SimConfig {
  int n_vehicles{23};
  double duration{20000.0};
  double dt{0.1};
  std::vector<SpeedClass> speed_classes{{22.0, 3.5}, {36.0, 7.0}};
  double intent_period{30.0};
  double tv_dist_thresh{100.0};
  Mode mode{Mode::dms_ph};
  double brake_delta{3.0};
  double brake_hold{0.0};  // seconds the braked speed stays as a ceiling; 0 = one-shot
  double headway_window{10.0};
  std::uint64_t rng_seed{1};
  double bsm_rate{10.0};
  double channel_loss_prob{0.0};

  double straight_len{80.0};
  double arc_radius{40.0};
  int lane_count{3};
  double lane_width{3.5};

  double reaction_time{1.0};
  double decel{4.5};
  double krauss_sigma{0.0};
  double min_gap{2.5};
  double vehicle_length{5.0};

  double lane_change_duration{3.0};
  double intent_timeout{10.0};

  std::int64_t ticks(double seconds) const { return std::llround(seconds / dt); }
  std::int64_t total_ticks() const { return ticks(duration); }
  std::uint64_t timestamp_ms(std::int64_t tick) const {
    return static_cast<std::uint64_t>(std::llround(static_cast<double>(tick) * dt * 1000.0));
  }

  void validate() const {
    auto multiple_of_dt = [&](double v) {
      const double k = v / dt;
      return std::abs(k - std::round(k)) < 1e-9 * std::max(1.0, std::abs(k));
    };
    if (n_vehicles < 2) throw ConfigError("simulation.n_vehicles", "must be >= 2");
    if (!(dt > 0.0)) throw ConfigError("simulation.dt", "must be > 0");
    if (!(duration > 0.0) || !multiple_of_dt(duration)) {
      throw ConfigError("simulation.duration", "must be a positive multiple of dt");
    }
    if (speed_classes.empty()) throw ConfigError("simulation.speed_classes", "must not be empty");
    for (const auto& c : speed_classes) {
      if (!(c.v_max > 0.0) || !(c.accel > 0.0)) {
        throw ConfigError("simulation.speed_classes", "v_max and accel must be > 0");
      }
    }
    if (!(intent_period > 0.0) || !multiple_of_dt(intent_period)) {
      throw ConfigError("simulation.intent_period", "must be a positive multiple of dt");
    }
    if (!(tv_dist_thresh > 0.0)) throw ConfigError("matrix.thresholds", "must be > 0");
    if (!(brake_delta >= 0.0)) throw ConfigError("simulation.brake_delta", "must be >= 0");
    if (!(brake_hold >= 0.0)) throw ConfigError("simulation.brake_hold", "must be >= 0");
    if (!(headway_window > 0.0)) throw ConfigError("simulation.headway_window", "must be > 0");
    if (!(bsm_rate > 0.0) || !multiple_of_dt(1.0 / bsm_rate)) {
      throw ConfigError("simulation.bsm_rate", "period must be a positive multiple of dt");
    }
    if (!(channel_loss_prob >= 0.0 && channel_loss_prob <= 1.0)) {
      throw ConfigError("simulation.channel_loss_prob", "must be in [0, 1]");
    }
    if (!(straight_len > 0.0)) throw ConfigError("track.straight_len", "must be > 0");
    if (lane_count < 1) throw ConfigError("track.lane_count", "must be >= 1");
    if (!(lane_width > 0.0)) throw ConfigError("track.lane_width", "must be > 0");
    if (!(arc_radius > lane_count * lane_width)) {
      throw ConfigError("track.arc_radius", "must exceed lane_count * lane_width");
    }
    if (!(reaction_time > 0.0)) throw ConfigError("krauss.reaction_time", "must be > 0");
    if (!(decel > 0.0)) throw ConfigError("krauss.decel", "must be > 0");
    if (!(krauss_sigma >= 0.0 && krauss_sigma <= 1.0)) {
      throw ConfigError("krauss.sigma", "must be in [0, 1]");
    }
    if (!(min_gap >= 0.0)) throw ConfigError("krauss.min_gap", "must be >= 0");
    if (!(vehicle_length > 0.0)) throw ConfigError("krauss.vehicle_length", "must be > 0");
    if (!(lane_change_duration > 0.0) || !multiple_of_dt(lane_change_duration)) {
      throw ConfigError("simulation.lane_change_duration", "must be a positive multiple of dt");
    }
    if (!(intent_timeout >= 0.0)) throw ConfigError("simulation.intent_timeout", "must be >= 0");
  }
};

struct VehicleState {
  VehicleId id{};
  TrackPosition pos{};
  double speed{};  // along the occupied lane path
  double accel_cap{};
  double decel_cap{};
  double v_max{};
  double heading{};
  double yaw_rate{};
  double accel{};  // applied over the last tick
  TurnSignal turn_signal{TurnSignal::off};
  double length{5.0};
  WorldPose pose{};
};

enum class ManeuverStatus { pending, executing, done, aborted };

struct LaneChangeManeuver {
  VehicleId vehicle_id{};
  int from_lane{};
  int to_lane{};
  double requested_at{};
  double start_time{};
  double duration{};
  double elapsed{};
  ManeuverStatus status{ManeuverStatus::pending};
};

struct World {
  std::vector<VehicleState> vehicles;  // indexed by id
  VehicleId hv_id{0};
  std::optional<LaneChangeManeuver> maneuver;
  std::int64_t tick{0};
  bool next_middle_left{true};
  std::mt19937_64 rng;
  std::vector<double> brake_cap;
  std::vector<std::int64_t> brake_until;

  const VehicleState& hv() const { return vehicles[hv_id]; }
  VehicleState& hv() { return vehicles[hv_id]; }
};

struct StepEvents {
  bool maneuver_started{false};
  std::optional<LaneChangeManeuver> completed;
  std::optional<LaneChangeManeuver> aborted;
};

inline double krauss_safe_speed(double v_leader, double v_follower, double gap, double decel_cap,
                                double reaction_time) {
  const double v = v_leader + (gap - v_leader * reaction_time) /
                                  ((v_leader + v_follower) / (2.0 * decel_cap) + reaction_time);
  return std::max(0.0, v);
}

inline VehicleState apply_brake_reaction(VehicleState tv, double brake_delta) {
  tv.speed = std::max(0.0, tv.speed - brake_delta);
  return tv;
}

inline double total_offset(const TrackSpec& track, const TrackPosition& p) {
  return p.lane * track.lane_width() + p.lateral_offset;
}

// Moves s forward by a path distance measured at a fixed offset from lane 0.
inline double advance_along(const TrackSpec& track, double s, double offset, double distance) {
  const auto& segs = track.segments();
  double remaining = distance;
  double sw = track.wrap_s(s);
  for (std::size_t guard = 0; guard < 4 * segs.size() + 4; ++guard) {
    const std::size_t i = track.segment_index(sw);
    const double scale = 1.0 + segs[i].curvature * offset;
    const double seg_end = track.segment_start_s(i) + segs[i].length;
    const double avail = (seg_end - sw) * scale;
    if (remaining <= avail) return track.wrap_s(sw + remaining / scale);
    remaining -= avail;
    if (!track.closed() && i + 1 == segs.size()) return track.total_length();
    sw = track.wrap_s(seg_end);
  }
  return track.wrap_s(sw);
}

inline bool occupies(const World& w, std::size_t i, int lane) {
  const VehicleState& v = w.vehicles[i];
  if (v.pos.lane == lane) return true;
  return i == w.hv_id && w.maneuver && w.maneuver->status == ManeuverStatus::executing &&
         w.maneuver->to_lane == lane;
}

struct Neighbor {
  std::size_t index{};
  double bumper_gap{};  // physical, along the lane
};

inline std::optional<Neighbor> find_leader(const World& w, const TrackSpec& track, std::size_t i,
                                           int lane) {
  const double s_i = w.vehicles[i].pos.s;
  std::optional<std::size_t> best;
  double best_gap = INFINITY;
  for (std::size_t j = 0; j < w.vehicles.size(); ++j) {
    if (j == i || !occupies(w, j, lane)) continue;
    const double g = longitudinal_gap(track, w.vehicles[j].pos.s, s_i);
    if (g < best_gap) {
      best_gap = g;
      best = j;
    }
  }
  if (!best) return std::nullopt;
  const double offset = lane * track.lane_width();
  return Neighbor{*best, lane_distance(track, s_i, w.vehicles[*best].pos.s, offset) -
                             w.vehicles[*best].length};
}

inline std::optional<Neighbor> find_follower(const World& w, const TrackSpec& track,
                                             std::size_t i, int lane) {
  const double s_i = w.vehicles[i].pos.s;
  std::optional<std::size_t> best;
  double best_gap = INFINITY;
  for (std::size_t j = 0; j < w.vehicles.size(); ++j) {
    if (j == i || !occupies(w, j, lane)) continue;
    const double g = longitudinal_gap(track, s_i, w.vehicles[j].pos.s);
    if (g < best_gap) {
      best_gap = g;
      best = j;
    }
  }
  if (!best) return std::nullopt;
  const double offset = lane * track.lane_width();
  return Neighbor{*best, lane_distance(track, w.vehicles[*best].pos.s, s_i, offset) -
                             w.vehicles[i].length};
}

// Uniform spacing in s, lanes round-robin, speed classes alternating by id.
inline World init_world(const TrackSpec& track, const SimConfig& cfg) {
  World w;
  w.rng.seed(cfg.rng_seed);
  const double spacing = track.total_length() / cfg.n_vehicles;
  for (int i = 0; i < cfg.n_vehicles; ++i) {
    const SpeedClass& cls = cfg.speed_classes[static_cast<std::size_t>(i) % cfg.speed_classes.size()];
    VehicleState v;
    v.id = static_cast<VehicleId>(i);
    v.pos = {track.wrap_s(i * spacing), i % track.lane_count(), 0.0};
    v.speed = cls.v_max;
    v.accel_cap = cls.accel;
    v.decel_cap = cfg.decel;
    v.v_max = cls.v_max;
    v.length = cfg.vehicle_length;
    v.pose = to_world(track, v.pos);
    v.heading = v.pose.heading;
    const double off = total_offset(track, v.pos);
    v.yaw_rate = v.speed * track.curvature_at(v.pos.s) / track.path_scale(v.pos.s, off);
    w.vehicles.push_back(v);
  }
  w.brake_cap.assign(w.vehicles.size(), INFINITY);
  w.brake_until.assign(w.vehicles.size(), 0);
  return w;
}

inline bool is_intent_boundary(const SimConfig& cfg, std::int64_t tick) {
  const std::int64_t period = cfg.ticks(cfg.intent_period);
  return tick > 0 && tick % period == 0;
}

// Raises the HV turn signal at each intent-period boundary. Middle lanes
// alternate left/right; edge lanes are forced toward the interior.
inline std::optional<Direction> schedule_intent(World& w, const TrackSpec& track,
                                                const SimConfig& cfg) {
  if (!is_intent_boundary(cfg, w.tick)) return std::nullopt;
  if (w.maneuver && (w.maneuver->status == ManeuverStatus::pending ||
                     w.maneuver->status == ManeuverStatus::executing)) {
    return std::nullopt;
  }
  VehicleState& hv = w.hv();
  const int lanes = track.lane_count();
  if (lanes < 2) return std::nullopt;
  Direction dir;
  if (hv.pos.lane == 0) {
    dir = Direction::right;
  } else if (hv.pos.lane == lanes - 1) {
    dir = Direction::left;
  } else {
    dir = w.next_middle_left ? Direction::left : Direction::right;
    w.next_middle_left = !w.next_middle_left;
  }
  hv.turn_signal = to_signal(dir);
  LaneChangeManeuver m;
  m.vehicle_id = hv.id;
  m.from_lane = hv.pos.lane;
  m.to_lane = hv.pos.lane + (dir == Direction::left ? -1 : 1);
  m.requested_at = static_cast<double>(w.tick) * cfg.dt;
  m.duration = cfg.lane_change_duration;
  w.maneuver = m;
  return dir;
}

// Linear lateral profile; returns the change in offset over this tick.
inline double execute_lane_change(VehicleState& v, LaneChangeManeuver& m, double dt,
                                  double lane_width) {
  const double before = v.pos.lane * lane_width + v.pos.lateral_offset;
  m.elapsed += dt;
  const double sign = m.to_lane > m.from_lane ? 1.0 : -1.0;
  if (m.elapsed >= m.duration - 1e-9) {
    v.pos.lane = m.to_lane;
    v.pos.lateral_offset = 0.0;
    m.status = ManeuverStatus::done;
    v.turn_signal = TurnSignal::off;
  } else {
    v.pos.lateral_offset = sign * lane_width * (m.elapsed / m.duration);
  }
  return v.pos.lane * lane_width + v.pos.lateral_offset - before;
}

inline bool lane_change_feasible(const World& w, const TrackSpec& track, const SimConfig& cfg,
                                 int target_lane) {
  const std::size_t h = w.hv_id;
  const double s_h = w.vehicles[h].pos.s;
  const double offset = target_lane * track.lane_width();
  std::optional<std::size_t> ahead, behind;
  double best_ahead = INFINITY, best_behind = INFINITY;
  for (std::size_t j = 0; j < w.vehicles.size(); ++j) {
    if (j == h || w.vehicles[j].pos.lane != target_lane) continue;
    const double ga = longitudinal_gap(track, w.vehicles[j].pos.s, s_h);
    const double gb = longitudinal_gap(track, s_h, w.vehicles[j].pos.s);
    if (ga < best_ahead) best_ahead = ga, ahead = j;
    if (gb < best_behind) best_behind = gb, behind = j;
  }
  if (ahead) {
    const double g = lane_distance(track, s_h, w.vehicles[*ahead].pos.s, offset) -
                     w.vehicles[*ahead].length;
    if (g < cfg.min_gap) return false;
  }
  if (behind) {
    const double g = lane_distance(track, w.vehicles[*behind].pos.s, s_h, offset) -
                     w.vehicles[h].length;
    if (g < cfg.min_gap) return false;
  }
  return true;
}

inline void check_integrity(const World& w, const TrackSpec& track) {
  std::vector<std::pair<double, std::size_t>> lane;
  for (int l = 0; l < track.lane_count(); ++l) {
    lane.clear();
    for (std::size_t i = 0; i < w.vehicles.size(); ++i) {
      if (occupies(w, i, l)) lane.emplace_back(w.vehicles[i].pos.s, i);
    }
    if (lane.size() < 2) continue;
    std::sort(lane.begin(), lane.end());
    for (std::size_t k = 0; k < lane.size(); ++k) {
      const auto& f = lane[k];
      const auto& ld = lane[(k + 1) % lane.size()];
      const double gap = lane_distance(track, f.first, ld.first, l * track.lane_width()) -
                         w.vehicles[ld.second].length;
      const bool coincident = f.first == ld.first;
      if (gap < -1e-9 || coincident) {
        throw SimulationFault("negative gap " + std::to_string(gap) + " m between vehicle " +
                              std::to_string(f.second) + " and leader " +
                              std::to_string(ld.second) + " in lane " + std::to_string(l) +
                              " at tick " + std::to_string(w.tick));
      }
    }
  }
}

// One fixed-size tick: Krauss speeds from the current state, then positions,
// lane-change progress, heading and yaw rate.
inline StepEvents step(World& w, const TrackSpec& track, const SimConfig& cfg) {
  StepEvents ev;
  const double dt = cfg.dt;
  const double now = static_cast<double>(w.tick) * dt;

  if (w.maneuver && w.maneuver->status == ManeuverStatus::pending) {
    if (lane_change_feasible(w, track, cfg, w.maneuver->to_lane)) {
      w.maneuver->status = ManeuverStatus::executing;
      w.maneuver->start_time = now;
      ev.maneuver_started = true;
    } else if (now - w.maneuver->requested_at >= cfg.intent_timeout - 1e-9) {
      w.maneuver->status = ManeuverStatus::aborted;
      w.hv().turn_signal = TurnSignal::off;
      ev.aborted = w.maneuver;
      w.maneuver.reset();
    }
  }

  const std::size_t n = w.vehicles.size();
  std::vector<double> v_new(n);
  for (std::size_t i = 0; i < n; ++i) {
    const VehicleState& v = w.vehicles[i];
    double vd = std::min(v.v_max, v.speed + v.accel_cap * dt);
    auto follow = [&](int lane) {
      if (auto ld = find_leader(w, track, i, lane)) {
        const double g = std::max(0.0, ld->bumper_gap - cfg.min_gap);
        vd = std::min(vd, krauss_safe_speed(w.vehicles[ld->index].speed, v.speed, g, v.decel_cap,
                                            cfg.reaction_time));
      }
    };
    follow(v.pos.lane);
    if (i == w.hv_id && w.maneuver && w.maneuver->status == ManeuverStatus::executing) {
      follow(w.maneuver->to_lane);
    }
    if (w.tick < w.brake_until[i]) vd = std::min(vd, w.brake_cap[i]);
    if (cfg.krauss_sigma > 0.0) {
      vd -= cfg.krauss_sigma * v.accel_cap * dt * uniform01(w.rng);
    }
    v_new[i] = std::max(0.0, vd);
  }

  for (std::size_t i = 0; i < n; ++i) {
    VehicleState& v = w.vehicles[i];
    const double off = total_offset(track, v.pos);
    v.pos.s = advance_along(track, v.pos.s, off, v_new[i] * dt);
    double lateral_delta = 0.0;
    if (i == w.hv_id && w.maneuver && w.maneuver->status == ManeuverStatus::executing) {
      lateral_delta = execute_lane_change(v, *w.maneuver, dt, track.lane_width());
      if (w.maneuver->status == ManeuverStatus::done) {
        ev.completed = w.maneuver;
        w.maneuver.reset();
      }
    }
    v.accel = (v_new[i] - v.speed) / dt;
    v.speed = v_new[i];
    const WorldPose road = track.pose_at(v.pos.s, total_offset(track, v.pos));
    double heading = road.heading;
    if (lateral_delta != 0.0) {
      // Moving toward higher lane index is a rightward (clockwise) deviation.
      heading = normalize_heading(heading + std::atan2(-lateral_delta / dt, v.speed));
    }
    v.yaw_rate = wrap_pi(heading - v.heading) / dt;
    v.heading = heading;
    v.pose = {road.x, road.y, heading};
  }

  ++w.tick;
  check_integrity(w, track);
  return ev;
}

inline void write_truth_header(std::ostream& os) {
  os << "t,id,s,lane,lateral_offset,speed,yaw_rate,turn_signal\n";
}

inline void write_truth_rows(std::ostream& os, const World& w, double t) {
  for (const auto& v : w.vehicles) {
    os << format_double(t) << ',' << v.id << ',' << format_double(v.pos.s) << ',' << v.pos.lane
       << ',' << format_double(v.pos.lateral_offset) << ',' << format_double(v.speed) << ','
       << format_double(v.yaw_rate) << ',' << to_string(v.turn_signal) << '\n';
  }
}

}  // namespace dms
