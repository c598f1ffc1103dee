#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dms/common.hpp"
#include "dms/dms_core.hpp"
#include "dms/road_geometry.hpp"
#include "dms/traffic_sim.hpp"

namespace dms {

enum class Outcome { TP = 0, FP = 1, TN = 2, FN = 3 };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::TP: return "TP";
    case Outcome::FP: return "FP";
    case Outcome::TN: return "TN";
    case Outcome::FN: return "FN";
  }
  return "?";
}

// A prediction naming the wrong vehicle is a false positive (alerting the wrong car),
// never FP and FN together, so every intent has exactly one outcome.
inline Outcome classify(std::optional<VehicleId> predicted, std::optional<VehicleId> truth) {
  if (predicted) return truth && *truth == *predicted ? Outcome::TP : Outcome::FP;
  return truth ? Outcome::FN : Outcome::TN;
}

// Nearest trailing vehicle in the true adjacent lane, read from simulator state only.
inline std::optional<VehicleId> ground_truth_tv(const World& truth, const TrackSpec& track,
                                                Direction direction, double thresh) {
  const VehicleState& hv = truth.hv();
  const int target = hv.pos.lane + (direction == Direction::left ? -1 : 1);
  if (target < 0 || target >= track.lane_count()) return std::nullopt;
  std::optional<VehicleId> best;
  double best_gap = INFINITY;
  for (const auto& v : truth.vehicles) {
    if (v.id == hv.id || v.pos.lane != target) continue;
    const double gap = longitudinal_gap(track, hv.pos.s, v.pos.s);
    if (gap > 0.0 && gap <= thresh && gap < best_gap) {
      best_gap = gap;
      best = v.id;
    }
  }
  return best;
}

struct EventRecord {
  double t{};
  std::string method;
  double thresh{};
  Direction direction{Direction::left};
  std::optional<Outcome> outcome;  // unset when no ground truth is available
  std::optional<VehicleId> predicted;
  std::optional<VehicleId> truth;
};

struct HeadwayRecord {
  int scenario{};
  int window{};
  double t{};
  double initial_distance{};  // HV-to-TV gap when the intent was raised
  VehicleId tv_id{};
  double space_headway{};
  double time_headway{};
};

constexpr double kTimeHeadwayCap = 99.0;
constexpr double kMinHeadwaySpeed = 0.1;

struct HeadwaySample {
  double space{};
  double time{};
};

inline HeadwaySample headway_from(double gap, double tv_speed) {
  const double space = std::max(0.0, gap);
  if (tv_speed < kMinHeadwaySpeed) return {space, space == 0.0 ? 0.0 : kTimeHeadwayCap};
  return {space, space / tv_speed};
}

// Bumper gap from TV to HV along the HV's lane.
inline HeadwaySample measure_headway(const World& w, const TrackSpec& track, std::size_t tv) {
  const VehicleState& hv = w.hv();
  const VehicleState& f = w.vehicles[tv];
  const double gap =
      lane_distance(track, f.pos.s, hv.pos.s, total_offset(track, hv.pos)) - hv.length;
  return headway_from(gap, f.speed);
}

// Opens a window at each completed HV lane change and samples it every tick.
class HeadwayRecorder {
 public:
  HeadwayRecorder(double window_s, int scenario) : window_s_(window_s), scenario_(scenario) {}

  void on_intent(const World& w) {
    intent_s_.clear();
    for (const auto& v : w.vehicles) intent_s_.push_back(v.pos.s);
  }

  void on_completed(const World& w, const TrackSpec& track, double t) {
    open_.reset();
    auto tv = find_follower(w, track, w.hv_id, w.hv().pos.lane);
    if (!tv) return;
    Window win;
    win.tv = tv->index;
    win.lane = w.hv().pos.lane;
    win.start = t;
    win.index = windows_++;
    win.initial_distance =
        intent_s_.empty() ? longitudinal_gap(track, w.hv().pos.s, w.vehicles[tv->index].pos.s)
                          : longitudinal_gap(track, intent_s_[w.hv_id], intent_s_[tv->index]);
    open_ = win;
  }

  // Call after each step with the post-step time; samples (start, start + window].
  void sample(const World& w, const TrackSpec& track, double t) {
    if (!open_) return;
    if (t - open_->start > window_s_ + 1e-9 || w.hv().pos.lane != open_->lane ||
        (w.maneuver && w.maneuver->status == ManeuverStatus::executing)) {
      open_.reset();
      return;
    }
    const HeadwaySample h = measure_headway(w, track, open_->tv);
    records_.push_back({scenario_, open_->index, t, open_->initial_distance,
                        static_cast<VehicleId>(open_->tv), h.space, h.time});
  }

  const std::vector<HeadwayRecord>& records() const { return records_; }
  int windows() const { return windows_; }

 private:
  struct Window {
    std::size_t tv{};
    int lane{};
    double start{};
    int index{};
    double initial_distance{};
  };
  double window_s_;
  int scenario_;
  int windows_{0};
  std::vector<double> intent_s_;
  std::optional<Window> open_;
  std::vector<HeadwayRecord> records_;
};

constexpr double kHeadwayBinWidth = 10.0;

struct HeadwayBin {
  double sum_space{};
  double sum_time{};
  std::size_t n{};
  double mean_space() const { return n ? sum_space / static_cast<double>(n) : 0.0; }
  double mean_time() const { return n ? sum_time / static_cast<double>(n) : 0.0; }
};

struct ExperimentResult {
  std::string mode;
  double thresh{};
  std::uint64_t seed{};
  std::array<std::size_t, 4> counts{};  // indexed by Outcome
  std::size_t intents{};
  int windows{};
  HeadwayBin headway;                        // all samples
  std::map<int, HeadwayBin> bins;            // keyed by floor(initial_distance / 10 m)
  std::size_t lane_changes{};
  std::size_t aborted{};
  std::size_t dims_sent{};

  std::size_t count(Outcome o) const { return counts[static_cast<std::size_t>(o)]; }
  double percent(Outcome o) const {
    return intents ? 100.0 * static_cast<double>(count(o)) / static_cast<double>(intents) : 0.0;
  }
};

inline int headway_bin(double initial_distance) {
  return static_cast<int>(std::floor(initial_distance / kHeadwayBinWidth));
}

inline ExperimentResult aggregate(std::span<const EventRecord> events,
                                  std::span<const HeadwayRecord> headway) {
  ExperimentResult r;
  for (const auto& e : events) {
    if (!e.outcome) continue;
    ++r.counts[static_cast<std::size_t>(*e.outcome)];
    ++r.intents;
  }
  int max_window = -1;
  for (const auto& h : headway) {
    r.headway.sum_space += h.space_headway;
    r.headway.sum_time += h.time_headway;
    ++r.headway.n;
    HeadwayBin& b = r.bins[headway_bin(h.initial_distance)];
    b.sum_space += h.space_headway;
    b.sum_time += h.time_headway;
    ++b.n;
    max_window = std::max(max_window, h.window);
  }
  r.windows = max_window + 1;
  return r;
}

inline void write_events_csv(std::ostream& os, std::span<const EventRecord> events) {
  os << "t,method,thresh,direction,outcome,predicted,truth\n";
  for (const auto& e : events) {
    os << format_double(e.t) << ',' << e.method << ',' << format_double(e.thresh) << ','
       << to_string(e.direction) << ',' << (e.outcome ? to_string(*e.outcome) : "") << ',';
    if (e.predicted) os << *e.predicted;
    os << ',';
    if (e.truth) os << *e.truth;
    os << '\n';
  }
}

inline void write_headway_csv(std::ostream& os, std::span<const HeadwayRecord> headway) {
  os << "scenario,window,t,initial_distance,tv_id,space_headway,time_headway\n";
  for (const auto& h : headway) {
    os << h.scenario << ',' << h.window << ',' << format_double(h.t) << ','
       << format_double(h.initial_distance) << ',' << h.tv_id << ','
       << format_double(h.space_headway) << ',' << format_double(h.time_headway) << '\n';
  }
}

struct DiagnosticRecord {
  double t{};
  std::string method;
  double thresh{};
  RecognitionResult recognition;
};

// Per-candidate detail is packed as id:gap:raw:rounded:shift:status separated by ';'.
inline void write_diagnostics_csv(std::ostream& os, std::span<const DiagnosticRecord> diags) {
  os << "t,method,thresh,candidate_count,chosen_tv,candidates\n";
  for (const auto& d : diags) {
    os << format_double(d.t) << ',' << d.method << ',' << format_double(d.thresh) << ','
       << d.recognition.candidates_considered << ',';
    if (d.recognition.tv_id) os << *d.recognition.tv_id;
    os << ',';
    bool first = true;
    for (const auto& c : d.recognition.candidates) {
      if (!first) os << ';';
      first = false;
      os << c.id << ':' << format_double(c.gap) << ':' << format_double(c.estimate.raw_lanes) << ':'
         << c.estimate.rounded << ':' << c.estimate.lane_shift << ':' << to_string(c.estimate.status);
    }
    os << '\n';
  }
}

}  // namespace dms
