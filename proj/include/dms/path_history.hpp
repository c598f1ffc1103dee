#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "dms/common.hpp"
#include "dms/road_geometry.hpp"

namespace dms {

struct PathHistoryPoint {
  double x{};
  double y{};
  double heading{};
  double speed{};
  double yaw_rate{};
  std::uint64_t timestamp_ms{};
};

// Bounded record of the HV's recent poses, oldest first.
class PathHistoryBuffer {
 public:
  explicit PathHistoryBuffer(double max_path_length = 300.0, double min_sample_spacing = 1.0)
      : max_path_length_(max_path_length), min_sample_spacing_(min_sample_spacing) {
    if (!(max_path_length > 0.0) || !(min_sample_spacing >= 0.0)) {
      throw std::invalid_argument("path history limits must be positive");
    }
  }

  // Returns true when the point was kept. Points closer than min_sample_spacing
  // to the newest kept point are skipped; the oldest points are trimmed so the
  // chord length stays within max_path_length.
  bool append(const PathHistoryPoint& p) {
    if (!points_.empty() && p.timestamp_ms <= points_.back().timestamp_ms) {
      throw std::invalid_argument("path history timestamps must increase");
    }
    if (!points_.empty()) {
      const double d = std::hypot(p.x - points_.back().x, p.y - points_.back().y);
      if (d < min_sample_spacing_) return false;
      chord_length_ += d;
    }
    points_.push_back(p);
    while (chord_length_ > max_path_length_ && points_.size() > 1) {
      chord_length_ -= std::hypot(points_[1].x - points_[0].x, points_[1].y - points_[0].y);
      points_.pop_front();
    }
    return true;
  }

  void clear() {
    points_.clear();
    chord_length_ = 0.0;
  }

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  const PathHistoryPoint& operator[](std::size_t i) const { return points_[i]; }
  const PathHistoryPoint& newest() const { return points_.back(); }
  const std::deque<PathHistoryPoint>& points() const { return points_; }
  double chord_length() const { return chord_length_; }
  double max_path_length() const { return max_path_length_; }
  double min_sample_spacing() const { return min_sample_spacing_; }

 private:
  std::deque<PathHistoryPoint> points_;
  double chord_length_{0.0};
  double max_path_length_;
  double min_sample_spacing_;
};

inline bool append_sample(PathHistoryBuffer& buf, const PathHistoryPoint& p) { return buf.append(p); }

// Index of the history point nearest to (x, y); ties go to the newer point.
inline std::size_t closest_point(const PathHistoryBuffer& buf, double x, double y) {
  if (buf.empty()) throw std::invalid_argument("closest_point on empty path history");
  std::size_t best = 0;
  double best_d2 = INFINITY;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double dx = buf[i].x - x;
    const double dy = buf[i].y - y;
    const double d2 = dx * dx + dy * dy;
    if (d2 <= best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

// Signed perpendicular distance from the point's heading ray; positive = left.
inline double lateral_offset_at(const PathHistoryBuffer& buf, std::size_t index, double x,
                                double y) {
  const PathHistoryPoint& p = buf[index];
  return std::cos(p.heading) * (y - p.y) - std::sin(p.heading) * (x - p.x);
}

// Signed distance along the point's heading; positive = ahead of the point.
inline double along_offset_at(const PathHistoryBuffer& buf, std::size_t index, double x, double y) {
  const PathHistoryPoint& p = buf[index];
  return std::cos(p.heading) * (x - p.x) + std::sin(p.heading) * (y - p.y);
}

// Chord length travelled from point `from` to the newest point.
inline double path_length_since(const PathHistoryBuffer& buf, std::size_t from) {
  double len = 0.0;
  for (std::size_t i = from + 1; i < buf.size(); ++i) {
    len += std::hypot(buf[i].x - buf[i - 1].x, buf[i].y - buf[i - 1].y);
  }
  return len;
}

struct LaneShiftParams {
  int yaw_window{7};              // points around each point used to estimate road yaw
  double release_fraction{0.35};  // excursion ends when lateral speed falls to this share of its peak
  double min_excursion{0.1};      // m/s; smaller lateral speeds are treated as noise
};

struct LaneShiftResult {
  int shift{};       // net lane changes, positive = leftward
  double lateral{};  // m of lateral displacement relative to the road
};

// Integrates the HV's lateral motion relative to the road since `from`.
//
// Curvature comes from heading differences between stored points. Road curvature
// at a point is bracketed by the medians of the rates just before and just after
// it; the part of the rate outside that bracket is a heading jump, which is
// what a lane change leaves at its start and end. A curvature change falls
// inside the bracket and contributes nothing, and so does a speed change on
// a curve since curvature does not depend on speed.
//
// The state is lateral speed u relative to the road: a jump moves the heading
// deviation atan(u / v) and u is re-derived from it, while between jumps u is
// held, so slow heading drift from speed changes mid-maneuver is absorbed.
// When u swings back (sign change, or most of the way to zero) the excursion
// is over and u is cleared, so leftover bias cannot drift. The net shift is the
// accumulated displacement in whole lanes.
inline LaneShiftResult integrate_lane_shift(const PathHistoryBuffer& buf, std::size_t from,
                                            double lane_width, const LaneShiftParams& params = {}) {
  if (!(lane_width > 0.0)) throw std::invalid_argument("lane_width must be > 0");
  LaneShiftResult out;
  const std::size_t n = buf.size();
  if (n < 2 || from + 1 >= n) return out;

  // Heading change per metre between neighbouring points.
  std::vector<double> rate(n, 0.0), span(n, 0.0), step(n, 0.0);
  for (std::size_t k = 1; k < n; ++k) {
    step[k] = static_cast<double>(buf[k].timestamp_ms - buf[k - 1].timestamp_ms) / 1000.0;
    span[k] = std::hypot(buf[k].x - buf[k - 1].x, buf[k].y - buf[k - 1].y);
    rate[k] = span[k] > 0.0 ? wrap_pi(buf[k].heading - buf[k - 1].heading) / span[k] : 0.0;
  }

  const std::size_t side = static_cast<std::size_t>(std::max(1, params.yaw_window / 2));
  std::vector<double> tmp;
  auto median = [&](std::size_t lo, std::size_t hi) {  // rates in [lo, hi)
    tmp.assign(rate.begin() + static_cast<std::ptrdiff_t>(lo),
               rate.begin() + static_cast<std::ptrdiff_t>(hi));
    auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
    std::nth_element(tmp.begin(), mid, tmp.end());
    return *mid;
  };

  double u = 0.0;
  double peak = 0.0;
  for (std::size_t k = from + 1; k < n; ++k) {
    const std::size_t lo = k > side ? k - side : 1;
    const std::size_t hi = std::min(n, k + 1 + side);
    const bool has_before = lo < k, has_after = k + 1 < hi;
    double road_lo = rate[k], road_hi = rate[k];
    if (has_before || has_after) {
      const double before = has_before ? median(lo, k) : median(k + 1, hi);
      const double after = has_after ? median(k + 1, hi) : before;
      road_lo = std::min(before, after);
      road_hi = std::max(before, after);
    }
    const double jump = (rate[k] - std::clamp(rate[k], road_lo, road_hi)) * span[k];
    const double v = buf[k].speed;
    if (jump != 0.0 && v > 0.0) {
      const double dev = std::atan2(u, v) + jump;
      u = v * std::tan(std::clamp(dev, -1.0, 1.0));
    }
    out.lateral += u * step[k];

    if (std::abs(u) > std::abs(peak)) peak = u;
    // A jump can straddle two points; only judge the excursion once the heading has settled.
    const bool settled = std::abs(jump) < 1e-4;
    if (settled && (std::abs(peak) < params.min_excursion || u * peak < 0.0 ||
                    std::abs(u) <= params.release_fraction * std::abs(peak))) {
      u = 0.0;
      peak = 0.0;
    }
  }
  out.shift = static_cast<int>(std::round(out.lateral / lane_width));
  return out;
}

inline int lane_shift_since(const PathHistoryBuffer& buf, std::size_t from, double lane_width,
                            const LaneShiftParams& params = {}) {
  return integrate_lane_shift(buf, from, lane_width, params).shift;
}

inline void write_path_history_csv(std::ostream& os, const PathHistoryBuffer& buf) {
  os << "timestamp_ms,x,y,heading,speed,yaw_rate\n";
  for (const auto& p : buf.points()) {
    os << p.timestamp_ms << ',' << format_double(p.x) << ',' << format_double(p.y) << ','
       << format_double(p.heading) << ',' << format_double(p.speed) << ','
       << format_double(p.yaw_rate) << '\n';
  }
}

}  // namespace dms
