#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dms/path_history.hpp"
#include "synthetic_drive.hpp"

using namespace dms;

namespace {

PathHistoryPoint pt(double x, double y, double h, std::uint64_t ms, double v = 10.0) {
  return {x, y, h, v, 0.0, ms};
}

dms::TrackSpec straight(double len = 5000.0) {
  return dms::TrackSpec({{SegmentKind::straight, len, 0.0, {}}}, {0, 0, 0}, 3, 3.5, false);
}

PathHistoryBuffer transform(const PathHistoryBuffer& in, double angle, double dx, double dy,
                            bool mirror = false) {
  PathHistoryBuffer out(in.max_path_length(), in.min_sample_spacing());
  const double c = std::cos(angle), s = std::sin(angle);
  for (const auto& p : in.points()) {
    PathHistoryPoint q = p;
    const double y = mirror ? -p.y : p.y;
    const double h = mirror ? -p.heading : p.heading;
    q.x = c * p.x - s * y + dx;
    q.y = s * p.x + c * y + dy;
    q.heading = normalize_heading(h + angle);
    q.yaw_rate = mirror ? -p.yaw_rate : p.yaw_rate;
    out.append(q);
  }
  return out;
}

int shift_of(const synth::Drive& d) {
  const auto buf = synth::to_buffer(synth::sample(d));
  return lane_shift_since(buf, 0, d.lane_width);
}

}  // namespace

TEST(PathHistoryBuffer, SkipsPointsCloserThanSpacing) {
  PathHistoryBuffer b(100.0, 1.0);
  EXPECT_TRUE(b.append(pt(0, 0, 0, 0)));
  EXPECT_FALSE(b.append(pt(0.5, 0, 0, 100)));
  EXPECT_TRUE(b.append(pt(1.0, 0, 0, 200)));
  EXPECT_EQ(b.size(), 2u);
  EXPECT_DOUBLE_EQ(b.chord_length(), 1.0);
}

TEST(PathHistoryBuffer, TrimsOldestToMaxLength) {
  PathHistoryBuffer b(10.0, 1.0);
  for (int i = 0; i <= 25; ++i) b.append(pt(i, 0, 0, static_cast<std::uint64_t>(i) * 100));
  EXPECT_LE(b.chord_length(), 10.0 + 1e-12);
  EXPECT_DOUBLE_EQ(b.newest().x, 25.0);
  EXPECT_DOUBLE_EQ(b[0].x, 15.0);
  EXPECT_NEAR(path_length_since(b, 0), b.chord_length(), 1e-12);
}

TEST(PathHistoryBuffer, RejectsNonIncreasingTimestamps) {
  PathHistoryBuffer b;
  b.append(pt(0, 0, 0, 100));
  EXPECT_THROW(b.append(pt(5, 0, 0, 100)), std::invalid_argument);
  EXPECT_THROW(PathHistoryBuffer(0.0, 1.0), std::invalid_argument);
}

TEST(PathHistory, ClosestPointTieGoesToNewer) {
  PathHistoryBuffer b(100.0, 1.0);
  b.append(pt(0, 0, 0, 0));
  b.append(pt(2, 0, 0, 100));
  EXPECT_EQ(closest_point(b, 1.0, 3.0), 1u);
  EXPECT_EQ(closest_point(b, -1.0, 0.0), 0u);
  EXPECT_THROW(closest_point(PathHistoryBuffer{}, 0, 0), std::invalid_argument);
}

TEST(PathHistory, OffsetsFollowPointHeading) {
  PathHistoryBuffer b(100.0, 1.0);
  b.append(pt(10, 5, kPi / 2, 0));
  // Heading north: west is left.
  EXPECT_NEAR(lateral_offset_at(b, 0, 7.0, 9.0), 3.0, 1e-12);
  EXPECT_NEAR(along_offset_at(b, 0, 7.0, 9.0), 4.0, 1e-12);
  EXPECT_NEAR(lateral_offset_at(b, 0, 12.0, 1.0), -2.0, 1e-12);
}

TEST(PathHistory, CsvHasHeaderAndRows) {
  PathHistoryBuffer b;
  b.append(pt(0, 0, 0, 0));
  b.append(pt(3, 4, 0.5, 100));
  std::ostringstream os;
  write_path_history_csv(os, b);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("timestamp_ms,x,y,heading,speed,yaw_rate\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
}

TEST(LaneShift, StraightConstantSpeedCases) {
  synth::Drive d;
  d.road = straight();
  d.start_offset = 3.5;
  d.speed = [](double) { return 20.0; };
  EXPECT_EQ(shift_of(d), 0);
  d.maneuvers = {{10.0, 3.0, 1}};
  EXPECT_EQ(shift_of(d), 1);
  d.maneuvers = {{10.0, 3.0, -1}};
  EXPECT_EQ(shift_of(d), -1);
  d.maneuvers = {{5.0, 3.0, 1}, {15.0, 3.0, -1}};
  EXPECT_EQ(shift_of(d), 0);
  d.start_offset = 7.0;
  d.maneuvers = {{5.0, 3.0, 1}, {15.0, 3.0, 1}};
  EXPECT_EQ(shift_of(d), 2);
}

TEST(LaneShift, LateralDisplacementMatchesManeuver) {
  synth::Drive d;
  d.road = straight();
  d.start_offset = 3.5;
  d.speed = [](double t) { return 15.0 + 3.0 * std::sin(t / 4.0); };
  d.maneuvers = {{10.0, 4.0, 1}};
  const auto r = integrate_lane_shift(synth::to_buffer(synth::sample(d)), 0, 3.5);
  EXPECT_NEAR(r.lateral, 3.5, 0.35);
}

TEST(LaneShift, ShiftSinceLaterIndexExcludesEarlierManeuver) {
  synth::Drive d;
  d.road = synth::circle(80.0);
  d.start_offset = 3.5;
  d.speed = [](double) { return 18.0; };
  d.maneuvers = {{5.0, 3.0, 1}};
  const auto buf = synth::to_buffer(synth::sample(d));
  EXPECT_EQ(lane_shift_since(buf, 0, 3.5), 1);
  // Points recorded from t = 15 s on are all after the maneuver.
  std::size_t from = 0;
  while (buf[from].timestamp_ms < 15000) ++from;
  EXPECT_EQ(lane_shift_since(buf, from, 3.5), 0);
  EXPECT_EQ(lane_shift_since(buf, buf.size() - 1, 3.5), 0);
}

TEST(LaneShift, CirclesOfAnyRadiusGiveZero) {
  for (double r : {20.0, 25.0, 40.0, 80.0, 200.0, 1000.0}) {
    synth::Drive d;
    d.road = synth::circle(r);
    d.speed = [](double) { return 20.0; };
    d.duration = 60.0;
    // Keep the window within 300 m of driving, as the path history would.
    auto pts = synth::sample(d);
    PathHistoryBuffer buf(300.0, 1.0);
    for (const auto& p : pts) buf.append(p);
    EXPECT_EQ(lane_shift_since(buf, 0, 3.5), 0) << "R=" << r;
  }
}

TEST(LaneShift, MirrorNegatesAndRigidMotionPreserves) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    synth::Drive d;
    d.road = i % 2 ? straight() : synth::circle(40.0 + i);
    d.start_offset = 3.5;
    d.speed = synth::random_speed(rng);
    d.maneuvers = {{8.0, 3.0, i % 3 == 0 ? -1 : 1}};
    const auto buf = synth::to_buffer(synth::sample(d));
    const int s = lane_shift_since(buf, 0, 3.5);
    EXPECT_EQ(lane_shift_since(transform(buf, 0.0, 0.0, 0.0, true), 0, 3.5), -s);
    const double a = 1.1 + i;
    const auto moved = transform(buf, a, 500.0, -250.0);
    EXPECT_EQ(lane_shift_since(moved, 0, 3.5), s);
    const double qx = buf[10].x + 1.0, qy = buf[10].y + 4.0;
    const double mx = std::cos(a) * qx - std::sin(a) * qy + 500.0;
    const double my = std::sin(a) * qx + std::cos(a) * qy - 250.0;
    const std::size_t idx = closest_point(buf, qx, qy);
    ASSERT_EQ(closest_point(moved, mx, my), idx);
    EXPECT_NEAR(lateral_offset_at(moved, idx, mx, my), lateral_offset_at(buf, idx, qx, qy), 1e-9);
  }
}

TEST(LaneShift, TangentHeadingsAsFromSimulator) {
  // Heading = road tangent plus the lateral-velocity angle, as the simulator reports it.
  const dms::TrackSpec road = synth::circle(40.0);
  PathHistoryBuffer buf(300.0, 1.0);
  double s = 0.0;
  const double v = 22.0, dt = 0.1;
  for (int k = 0; k < 150; ++k) {
    const double t = k * dt;
    const double f = std::clamp((t - 4.0) / 3.0, 0.0, 1.0);
    const double off = 3.5 - 3.5 * f;
    const double dd = (t > 4.0 && t <= 7.0) ? -3.5 / 3.0 : 0.0;
    const WorldPose p = road.pose_at(s, off);
    buf.append({p.x, p.y, normalize_heading(p.heading + std::atan2(-dd, v)), v, 0.0,
                static_cast<std::uint64_t>(k) * 100});
    s += v * dt / road.path_scale(s, off);
  }
  EXPECT_EQ(lane_shift_since(buf, 0, 3.5), 1);
}

TEST(LaneShift, RejectsBadLaneWidth) {
  PathHistoryBuffer b;
  EXPECT_THROW(lane_shift_since(b, 0, 0.0), std::invalid_argument);
  EXPECT_EQ(lane_shift_since(b, 0, 3.5), 0);
}
