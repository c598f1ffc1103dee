#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dms/common.hpp"
#include "dms/path_history.hpp"
#include "dms/road_geometry.hpp"
#include "dms/v2x_messaging.hpp"

namespace dms {

enum class RecognitionMethod { path_history, lateral_only };

inline const char* to_string(RecognitionMethod m) {
  return m == RecognitionMethod::path_history ? "path_history" : "lateral_only";
}

struct DmsConfig {
  double tv_dist_thresh{100.0};
  RecognitionMethod recognition_method{RecognitionMethod::path_history};
  double lane_width{3.5};
  // Offsets further than this fraction of a lane from an integer are skipped.
  double ambiguity_fraction{0.35};
  LaneShiftParams lane_shift{};
};

struct Candidate {
  VehicleId id{};
  double gap{};  // longitudinal distance behind the HV
  double x{};
  double y{};
};

enum class OffsetStatus { ok, ambiguous, no_coverage };

inline const char* to_string(OffsetStatus s) {
  switch (s) {
    case OffsetStatus::ok: return "ok";
    case OffsetStatus::ambiguous: return "ambiguous";
    case OffsetStatus::no_coverage: return "no_coverage";
  }
  return "?";
}

// Lane difference of a candidate relative to the HV's current lane, positive = left.
struct LaneOffsetEstimate {
  OffsetStatus status{OffsetStatus::ok};
  double raw_lanes{};  // measured lateral distance in lane widths
  int rounded{};
  int lane_shift{};  // HV lane changes subtracted (path-history method only)
  int offset{};
};

struct CandidateDiagnostic {
  VehicleId id{};
  double gap{};
  LaneOffsetEstimate estimate{};
};

struct RecognitionResult {
  std::optional<VehicleId> tv_id;
  std::size_t candidates_considered{};
  std::vector<CandidateDiagnostic> candidates;
};

// Edge-triggered on the HV turn signal: one intent per activation.
class ApplicationDetector {
 public:
  std::optional<LaneChangeIntent> detect(const LocalObjectMap& map, bool maneuver_executing,
                                         std::uint64_t now_ms) {
    const auto& own = map.own_state();
    if (!own || own->turn_signal == TurnSignal::off) {
      latched_ = TurnSignal::off;
      return std::nullopt;
    }
    if (maneuver_executing || own->turn_signal == latched_) return std::nullopt;
    latched_ = own->turn_signal;
    const Direction dir = own->turn_signal == TurnSignal::left ? Direction::left : Direction::right;
    return LaneChangeIntent{own->sender_id, dir, now_ms};
  }

 private:
  TurnSignal latched_{TurnSignal::off};
};

inline LaneOffsetEstimate round_lane_offset(double lateral_m, double lane_width,
                                            double ambiguity_fraction) {
  LaneOffsetEstimate e;
  e.raw_lanes = lateral_m / lane_width;
  e.rounded = static_cast<int>(std::round(e.raw_lanes));
  e.offset = e.rounded;
  if (std::abs(e.raw_lanes - e.rounded) > ambiguity_fraction) e.status = OffsetStatus::ambiguous;
  return e;
}

// Slack on the threshold comparison so projection round-off cannot drop a vehicle exactly at it.
constexpr double kGapTolerance = 1e-9;

// Trailing vehicles up to `thresh` behind the HV by arc length along the track, nearest first.
inline std::vector<Candidate> find_trailing(const LocalObjectMap& map, const TrackSpec& track,
                                            double thresh) {
  std::vector<Candidate> out;
  const auto& hv = map.own_state();
  if (!hv) return out;
  const double s_hv = project_to_track(track, hv->x, hv->y).s;
  for (const auto& [id, entry] : map.entries()) {
    if (id == hv->sender_id) continue;
    double s;
    try {
      s = project_to_track(track, entry.bsm.x, entry.bsm.y).s;
    } catch (const OffRoadError&) {
      continue;
    }
    const double gap = longitudinal_gap(track, s_hv, s);
    if (gap > 0.0 && gap <= thresh + kGapTolerance) out.push_back({id, gap, entry.bsm.x, entry.bsm.y});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) { return a.gap < b.gap; });
  return out;
}

// Candidate lies behind the oldest history point by more than one sample step.
inline bool beyond_coverage(const PathHistoryBuffer& ph, std::size_t idx, double x, double y) {
  if (idx != 0) return false;
  double slack = ph.min_sample_spacing();
  if (ph.size() > 1) slack = std::max(slack, std::hypot(ph[1].x - ph[0].x, ph[1].y - ph[0].y));
  return along_offset_at(ph, 0, x, y) < -slack;
}

// Trailing vehicles measured along the HV path history; used when no map is available.
inline std::vector<Candidate> find_trailing_ph(const LocalObjectMap& map,
                                               const PathHistoryBuffer& ph, double thresh) {
  std::vector<Candidate> out;
  const auto& hv = map.own_state();
  if (!hv || ph.empty()) return out;
  for (const auto& [id, entry] : map.entries()) {
    if (id == hv->sender_id) continue;
    const std::size_t idx = closest_point(ph, entry.bsm.x, entry.bsm.y);
    if (beyond_coverage(ph, idx, entry.bsm.x, entry.bsm.y)) continue;
    const double gap = path_length_since(ph, idx) - along_offset_at(ph, idx, entry.bsm.x, entry.bsm.y);
    if (gap > 0.0 && gap <= thresh + kGapTolerance) out.push_back({id, gap, entry.bsm.x, entry.bsm.y});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) { return a.gap < b.gap; });
  return out;
}

// Lateral distance from the closest history point, corrected by HV lane changes since then.
inline LaneOffsetEstimate lane_offset_ph(const PathHistoryBuffer& ph, double x, double y,
                                         double lane_width, double ambiguity_fraction = 0.35,
                                         const LaneShiftParams& params = {}) {
  if (ph.empty()) return {OffsetStatus::no_coverage, 0.0, 0, 0, 0};
  const std::size_t idx = closest_point(ph, x, y);
  if (beyond_coverage(ph, idx, x, y)) return {OffsetStatus::no_coverage, 0.0, 0, 0, 0};
  LaneOffsetEstimate e =
      round_lane_offset(lateral_offset_at(ph, idx, x, y), lane_width, ambiguity_fraction);
  e.lane_shift = lane_shift_since(ph, idx, lane_width, params);
  e.offset = e.rounded - e.lane_shift;
  return e;
}

// Baseline: lateral distance from the HV's current heading ray only.
inline LaneOffsetEstimate lane_offset_lateral(const WorldPose& hv, double x, double y,
                                              double lane_width, double ambiguity_fraction = 0.35) {
  const double lateral = std::cos(hv.heading) * (y - hv.y) - std::sin(hv.heading) * (x - hv.x);
  return round_lane_offset(lateral, lane_width, ambiguity_fraction);
}

// Nearest candidate whose offset is exactly one lane toward the intent; ties keep input order.
inline std::optional<VehicleId> select_tv(std::span<const CandidateDiagnostic> candidates,
                                          Direction direction) {
  const int want = direction == Direction::left ? 1 : -1;
  const CandidateDiagnostic* best = nullptr;
  for (const auto& c : candidates) {
    if (c.estimate.status != OffsetStatus::ok || c.estimate.offset != want) continue;
    if (!best || c.gap < best->gap) best = &c;
  }
  return best ? std::optional<VehicleId>(best->id) : std::nullopt;
}

inline RecognitionResult recognize_tv(std::span<const Candidate> candidates,
                                      const LaneChangeIntent& intent, const DmsConfig& cfg,
                                      const PathHistoryBuffer& ph, const WorldPose& hv_pose) {
  RecognitionResult r;
  r.candidates_considered = candidates.size();
  for (const auto& c : candidates) {
    LaneOffsetEstimate e =
        cfg.recognition_method == RecognitionMethod::path_history
            ? lane_offset_ph(ph, c.x, c.y, cfg.lane_width, cfg.ambiguity_fraction, cfg.lane_shift)
            : lane_offset_lateral(hv_pose, c.x, c.y, cfg.lane_width, cfg.ambiguity_fraction);
    r.candidates.push_back({c.id, c.gap, e});
  }
  r.tv_id = select_tv(r.candidates, intent.direction);
  return r;
}

// Same selection with lane offsets supplied by the caller, one per candidate.
inline RecognitionResult recognize_tv(std::span<const Candidate> candidates,
                                      std::span<const int> offsets, const LaneChangeIntent& intent) {
  if (offsets.size() != candidates.size()) throw std::invalid_argument("one offset per candidate");
  RecognitionResult r;
  r.candidates_considered = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    LaneOffsetEstimate e;
    e.raw_lanes = offsets[i];
    e.rounded = e.offset = offsets[i];
    r.candidates.push_back({candidates[i].id, candidates[i].gap, e});
  }
  r.tv_id = select_tv(r.candidates, intent.direction);
  return r;
}

inline Dim issue_dim(const LaneChangeIntent& intent, VehicleId tv_id, std::uint64_t now_ms) {
  if (tv_id == intent.hv_id) throw std::invalid_argument("DIM target must differ from sender");
  return Dim{intent.hv_id, tv_id, AppType::lane_change, intent.direction, now_ms};
}

// HV-side DMS context: object map, path history, detection latch.
class DriverMessenger {
 public:
  struct Decision {
    LaneChangeIntent intent;
    RecognitionResult recognition;
    std::optional<Dim> dim;
  };

  DriverMessenger(DmsConfig cfg, PathHistoryBuffer ph, std::uint64_t staleness_ms = 1000)
      : cfg_(cfg), ph_(std::move(ph)), map_(staleness_ms) {}

  void on_own_state(const Bsm& hv) {
    map_.set_own_state(hv);
    ph_.append({hv.x, hv.y, hv.heading, hv.speed, hv.yaw_rate, hv.timestamp_ms});
  }

  void on_bsm(const Bsm& b, std::uint64_t now_ms) { map_.update(b, now_ms); }

  // Runs detection on the current map; recognition and DIM issue happen once per intent.
  // With a track, trailing distance is arc length; without, it is measured along the path history.
  std::optional<Decision> tick(std::uint64_t now_ms, bool maneuver_executing,
                               const TrackSpec* track) {
    map_.expire_stale(now_ms);
    auto intent = detector_.detect(map_, maneuver_executing, now_ms);
    if (!intent) return std::nullopt;
    return recognize(*intent, now_ms, track);
  }

  Decision recognize(const LaneChangeIntent& intent, std::uint64_t now_ms, const TrackSpec* track) {
    map_.expire_stale(now_ms);
    const Bsm& hv = *map_.own_state();
    const auto candidates = track ? find_trailing(map_, *track, cfg_.tv_dist_thresh)
                                  : find_trailing_ph(map_, ph_, cfg_.tv_dist_thresh);
    Decision d{intent, recognize_tv(candidates, intent, cfg_, ph_, {hv.x, hv.y, hv.heading}), {}};
    if (d.recognition.tv_id) d.dim = issue_dim(intent, *d.recognition.tv_id, now_ms);
    return d;
  }

  const LocalObjectMap& map() const { return map_; }
  const PathHistoryBuffer& path_history() const { return ph_; }
  const DmsConfig& config() const { return cfg_; }

 private:
  DmsConfig cfg_;
  PathHistoryBuffer ph_;
  LocalObjectMap map_;
  ApplicationDetector detector_;
};

}  // namespace dms
