#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace dms {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double normalize_heading(double h) {
  double r = std::fmod(h, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

// Wraps an angle difference into [-pi, pi).
inline double wrap_pi(double a) {
  double r = std::fmod(a + kPi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r - kPi;
}

struct WorldPose {
  double x{};
  double y{};
  double heading{};  // [0, 2pi)
};

enum class SegmentKind { straight, arc };

struct SegmentSpec {
  SegmentKind kind{SegmentKind::straight};
  double length{};     // along the lane-0 centerline
  double curvature{};  // 1/m, positive = left turn
  WorldPose start_pose{};
};

// s is measured along the lane-0 centerline. lateral_offset is relative to the
// lane centerline, positive toward higher lane index (to the right of travel).
struct TrackPosition {
  double s{};
  int lane{};
  double lateral_offset{};
};

class OffRoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrackSpec {
 public:
  TrackSpec() = default;

  // Chains segments from start_pose; each entry's start_pose is recomputed.
  TrackSpec(std::vector<SegmentSpec> segments, WorldPose start_pose, int lane_count,
            double lane_width, bool closed)
      : segments_(std::move(segments)), lane_count_(lane_count), lane_width_(lane_width),
        closed_(closed) {
    if (segments_.empty()) throw std::invalid_argument("track needs at least one segment");
    if (lane_count_ < 1) throw std::invalid_argument("lane_count must be >= 1");
    if (!(lane_width_ > 0.0)) throw std::invalid_argument("lane_width must be > 0");
    WorldPose pose = start_pose;
    pose.heading = normalize_heading(pose.heading);
    double s = 0.0;
    double turn = 0.0;
    for (auto& seg : segments_) {
      if (!(seg.length > 0.0)) throw std::invalid_argument("segment length must be > 0");
      if ((seg.kind == SegmentKind::straight) != (seg.curvature == 0.0)) {
        throw std::invalid_argument("straight segments must have zero curvature");
      }
      seg.start_pose = pose;
      start_s_.push_back(s);
      start_turn_.push_back(turn);
      pose = point_on(seg, seg.length, 0.0);
      s += seg.length;
      turn += seg.curvature * seg.length;
    }
    total_length_ = s;
    total_turn_ = turn;
    end_pose_ = pose;
  }

  const std::vector<SegmentSpec>& segments() const { return segments_; }
  int lane_count() const { return lane_count_; }
  double lane_width() const { return lane_width_; }
  double total_length() const { return total_length_; }
  bool closed() const { return closed_; }
  // Pose reached at the end of the last segment; equals the start pose on a closed loop.
  const WorldPose& end_pose() const { return end_pose_; }
  double segment_start_s(std::size_t i) const { return start_s_[i]; }
  double total_turn() const { return total_turn_; }

  double wrap_s(double s) const {
    if (!closed_) return std::clamp(s, 0.0, total_length_);
    double r = std::fmod(s, total_length_);
    if (r < 0.0) r += total_length_;
    if (r >= total_length_) r = 0.0;
    return r;
  }

  std::size_t segment_index(double s) const {
    auto it = std::upper_bound(start_s_.begin(), start_s_.end(), s);
    return it == start_s_.begin() ? 0 : static_cast<std::size_t>(it - start_s_.begin() - 1);
  }

  double curvature_at(double s) const { return segments_[segment_index(wrap_s(s))].curvature; }

  // Heading accumulated along the lane-0 centerline from s = 0, not wrapped.
  double turning_at(double s) const {
    const double sw = wrap_s(s);
    const std::size_t i = segment_index(sw);
    return start_turn_[i] + segments_[i].curvature * (sw - start_s_[i]);
  }

  // Pose at s with a signed offset from the lane-0 centerline (positive = right).
  WorldPose pose_at(double s, double offset) const {
    const double sw = wrap_s(s);
    const std::size_t i = segment_index(sw);
    return point_on(segments_[i], sw - start_s_[i], offset);
  }

  // Ratio of path length at the given offset to lane-0 arc length at s.
  double path_scale(double s, double offset) const { return 1.0 + curvature_at(s) * offset; }

  static WorldPose point_on(const SegmentSpec& seg, double u, double offset) {
    const double h0 = seg.start_pose.heading;
    double x, y, h;
    if (seg.kind == SegmentKind::straight) {
      x = seg.start_pose.x + u * std::cos(h0);
      y = seg.start_pose.y + u * std::sin(h0);
      h = h0;
    } else {
      const double r = 1.0 / seg.curvature;
      const double cx = seg.start_pose.x - r * std::sin(h0);
      const double cy = seg.start_pose.y + r * std::cos(h0);
      h = h0 + seg.curvature * u;
      x = cx + r * std::sin(h);
      y = cy - r * std::cos(h);
    }
    return {x + offset * std::sin(h), y - offset * std::cos(h), normalize_heading(h)};
  }

 private:
  std::vector<SegmentSpec> segments_;
  std::vector<double> start_s_;
  std::vector<double> start_turn_;
  int lane_count_{1};
  double lane_width_{3.5};
  double total_length_{0.0};
  double total_turn_{0.0};
  bool closed_{true};
  WorldPose end_pose_{};
};

// Eight straights alternating with eight 45 degree left arcs (counterclockwise ring).
inline TrackSpec build_octagon_track(double straight_len, double arc_radius, int lane_count,
                                     double lane_width) {
  if (!(straight_len > 0.0) || !(arc_radius > 0.0) || !(lane_width > 0.0) || lane_count < 1) {
    throw std::invalid_argument("octagon dimensions must be positive");
  }
  if (!(arc_radius > lane_count * lane_width)) {
    throw std::invalid_argument("arc_radius " + std::to_string(arc_radius) +
                                " too small for " + std::to_string(lane_count) + " lanes");
  }
  std::vector<SegmentSpec> segs;
  const double arc_len = arc_radius * kPi / 4.0;
  for (int i = 0; i < 8; ++i) {
    segs.push_back({SegmentKind::straight, straight_len, 0.0, {}});
    segs.push_back({SegmentKind::arc, arc_len, 1.0 / arc_radius, {}});
  }
  return TrackSpec(std::move(segs), {0.0, 0.0, 0.0}, lane_count, lane_width, true);
}

// Open road of alternating left/right arcs; used for the curved replay benchmark.
inline TrackSpec build_serpentine_road(double arc_radius, double sweep, int arc_count,
                                       int lane_count, double lane_width) {
  if (!(arc_radius > 0.0) || !(sweep > 0.0) || arc_count < 1) {
    throw std::invalid_argument("serpentine dimensions must be positive");
  }
  if (!(arc_radius > lane_count * lane_width)) {
    throw std::invalid_argument("arc_radius too small for lane_count");
  }
  std::vector<SegmentSpec> segs;
  for (int i = 0; i < arc_count; ++i) {
    const double k = (i % 2 == 0 ? 1.0 : -1.0) / arc_radius;
    segs.push_back({SegmentKind::arc, arc_radius * sweep, k, {}});
  }
  // Start heading tilted so the road meanders around the x axis.
  return TrackSpec(std::move(segs), {0.0, 0.0, normalize_heading(-sweep / 2.0)}, lane_count,
                   lane_width, false);
}

inline WorldPose to_world(const TrackSpec& track, const TrackPosition& pos) {
  if (pos.lane < 0 || pos.lane >= track.lane_count()) {
    throw std::out_of_range("lane " + std::to_string(pos.lane) + " out of range");
  }
  return track.pose_at(pos.s, pos.lane * track.lane_width() + pos.lateral_offset);
}

// Nearest track position to (x, y). Exact lane midlines resolve to the lower lane.
inline TrackPosition project_to_track(const TrackSpec& track, double x, double y) {
  double best_dist = INFINITY;
  double best_s = 0.0;
  double best_offset = 0.0;
  const auto& segs = track.segments();
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const SegmentSpec& seg = segs[i];
    const double h0 = seg.start_pose.heading;
    double u;
    if (seg.kind == SegmentKind::straight) {
      u = (x - seg.start_pose.x) * std::cos(h0) + (y - seg.start_pose.y) * std::sin(h0);
    } else {
      const double r = 1.0 / seg.curvature;
      const double vx = x - (seg.start_pose.x - r * std::sin(h0));
      const double vy = y - (seg.start_pose.y + r * std::cos(h0));
      const double h = std::atan2(seg.curvature * vx, -seg.curvature * vy);
      const double h_mid = h0 + seg.curvature * seg.length / 2.0;
      u = wrap_pi(h - h_mid) / seg.curvature + seg.length / 2.0;
    }
    u = std::clamp(u, 0.0, seg.length);
    const WorldPose q = TrackSpec::point_on(seg, u, 0.0);
    const double dx = x - q.x;
    const double dy = y - q.y;
    const double dist = std::hypot(dx, dy);
    if (dist < best_dist) {
      best_dist = dist;
      best_s = track.segment_start_s(i) + u;
      best_offset = dx * std::sin(q.heading) - dy * std::cos(q.heading);
    }
  }
  const double w = track.lane_width();
  const int lane = std::clamp(static_cast<int>(std::ceil(best_offset / w - 0.5)), 0,
                              track.lane_count() - 1);
  const double lateral = best_offset - lane * w;
  // Off-centerline distance includes any along-track residual past an open end.
  const double along = std::sqrt(std::max(0.0, best_dist * best_dist - best_offset * best_offset));
  if (std::hypot(along, lateral) > track.lane_count() * w + 5.0) {
    throw OffRoadError("pose (" + std::to_string(x) + ", " + std::to_string(y) + ") is off-road");
  }
  return {track.wrap_s(best_s), lane, lateral};
}

inline TrackPosition project_to_track(const TrackSpec& track, const WorldPose& pose) {
  return project_to_track(track, pose.x, pose.y);
}

// Forward arc length from follower to leader along the driving direction.
inline double longitudinal_gap(const TrackSpec& track, double s_lead, double s_follow) {
  if (!track.closed()) return s_lead - s_follow;
  double d = std::fmod(s_lead - s_follow, track.total_length());
  if (d < 0.0) d += track.total_length();
  return d;
}

// Forward path length from s_from to s_to along a path offset from lane 0.
inline double lane_distance(const TrackSpec& track, double s_from, double s_to, double offset) {
  const double ds = longitudinal_gap(track, s_to, s_from);
  double dturn = track.turning_at(s_to) - track.turning_at(s_from);
  if (track.closed() && track.wrap_s(s_to) < track.wrap_s(s_from)) dturn += track.total_turn();
  return ds + offset * dturn;
}

}  // namespace dms
