#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dms/dms_core.hpp"
#include "synthetic_drive.hpp"

using namespace dms;

namespace {

Bsm bsm_at(VehicleId id, std::uint64_t ms, const WorldPose& p, double speed = 20.0,
           TurnSignal sig = TurnSignal::off) {
  return Bsm{id, ms, p.x, p.y, p.heading, speed, 0.0, 0.0, sig};
}

TrackSpec straight_road() {
  return TrackSpec({{SegmentKind::straight, 3000.0, 0.0, {}}}, {0, 0, 0}, 3, 3.5, false);
}

// HV drives lane 1 of `road` at constant speed; returns the messenger and the HV's final s.
struct Drive {
  DriverMessenger dm;
  double s_end;
};

Drive drive_hv(const TrackSpec& road, RecognitionMethod method, double thresh, double seconds,
               double v = 20.0) {
  DriverMessenger dm(DmsConfig{thresh, method, 3.5, 0.35, {}}, PathHistoryBuffer(300.0, 1.0));
  double s = 0.0;
  const double off = 3.5;
  const int n = static_cast<int>(seconds * 10.0);
  for (int k = 0; k <= n; ++k) {
    dm.on_own_state(bsm_at(0, static_cast<std::uint64_t>(k) * 100, road.pose_at(s, off), v));
    if (k < n) s += v * 0.1 / road.path_scale(s, off);
  }
  return {std::move(dm), s};
}

// Track position `dist` metres behind s_end along the lane at `off`.
WorldPose behind(const TrackSpec& road, double s_end, double dist, double off) {
  return road.pose_at(road.wrap_s(s_end - dist / road.path_scale(s_end, off)), off);
}

}  // namespace

TEST(Detector, EdgeTriggeredOnTurnSignal) {
  LocalObjectMap m;
  ApplicationDetector det;
  EXPECT_FALSE(det.detect(m, false, 0));
  m.set_own_state(bsm_at(0, 0, {}, 20.0, TurnSignal::left));
  auto i = det.detect(m, false, 100);
  ASSERT_TRUE(i);
  EXPECT_EQ(i->direction, Direction::left);
  EXPECT_EQ(i->detected_at_ms, 100u);
  EXPECT_FALSE(det.detect(m, false, 200));
  m.set_own_state(bsm_at(0, 300, {}, 20.0, TurnSignal::right));
  i = det.detect(m, false, 300);
  ASSERT_TRUE(i);
  EXPECT_EQ(i->direction, Direction::right);
  m.set_own_state(bsm_at(0, 400, {}, 20.0, TurnSignal::off));
  EXPECT_FALSE(det.detect(m, false, 400));
  m.set_own_state(bsm_at(0, 500, {}, 20.0, TurnSignal::right));
  EXPECT_FALSE(det.detect(m, true, 500));
  EXPECT_TRUE(det.detect(m, false, 600));
}

TEST(RoundLaneOffset, HalfAwayFromZeroAndAmbiguity) {
  EXPECT_EQ(round_lane_offset(1.75, 3.5, 0.5).rounded, 1);
  EXPECT_EQ(round_lane_offset(-1.75, 3.5, 0.5).rounded, -1);
  EXPECT_EQ(round_lane_offset(3.5 * 1.3, 3.5, 0.35).status, OffsetStatus::ok);
  EXPECT_EQ(round_lane_offset(3.5 * 1.4, 3.5, 0.35).status, OffsetStatus::ambiguous);
  EXPECT_EQ(round_lane_offset(-3.5 * 0.36, 3.5, 0.35).status, OffsetStatus::ambiguous);
}

TEST(FindTrailing, OctagonGapsAndThreshold) {
  const TrackSpec t = build_octagon_track(80.0, 40.0, 3, 3.5);
  const double L = t.total_length();
  LocalObjectMap m;
  m.set_own_state(bsm_at(0, 0, to_world(t, {100.0, 1, 0.0})));
  m.update(bsm_at(1, 0, to_world(t, {60.0, 0, 0.0})), 0);       // 40 m behind
  m.update(bsm_at(2, 0, to_world(t, {0.0, 2, 0.0})), 0);        // exactly at the threshold
  m.update(bsm_at(3, 0, to_world(t, {150.0, 1, 0.0})), 0);      // ahead
  m.update(bsm_at(4, 0, to_world(t, {L - 0.5, 1, 0.0})), 0);    // 100.5 m behind
  m.update(bsm_at(5, 0, to_world(t, {100.0, 0, 0.0})), 0);      // alongside
  const auto c = find_trailing(m, t, 100.0);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].id, 1u);
  EXPECT_NEAR(c[0].gap, 40.0, 1e-9);
  EXPECT_EQ(c[1].id, 2u);
  EXPECT_NEAR(c[1].gap, 100.0, 1e-9);
}

TEST(FindTrailing, PathHistoryGapMatchesDistanceOnStraight) {
  auto [dm, s_end] = drive_hv(straight_road(), RecognitionMethod::path_history, 100.0, 10.0);
  LocalObjectMap m = dm.map();
  const TrackSpec road = straight_road();
  m.update(bsm_at(1, 1000, road.pose_at(s_end - 37.0, 0.0)), 1000);
  m.update(bsm_at(2, 1000, road.pose_at(s_end - 150.0, 7.0)), 1000);
  m.update(bsm_at(3, 1000, road.pose_at(s_end + 10.0, 7.0)), 1000);
  const auto c = find_trailing_ph(m, dm.path_history(), 100.0);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].id, 1u);
  EXPECT_NEAR(c[0].gap, 37.0, 1e-6);
}

TEST(LaneOffset, ArcSameLaneCarIsNotAdjacentWithPathHistory) {
  const TrackSpec road = synth::circle(40.0);
  auto [dm, s_end] = drive_hv(road, RecognitionMethod::path_history, 100.0, 15.0);
  const WorldPose same = behind(road, s_end, 80.0, 3.5);
  const WorldPose inner = behind(road, s_end, 80.0, 0.0);
  const auto& ph = dm.path_history();
  const auto e_same = lane_offset_ph(ph, same.x, same.y, 3.5);
  EXPECT_EQ(e_same.status, OffsetStatus::ok);
  EXPECT_EQ(e_same.offset, 0);
  const auto e_inner = lane_offset_ph(ph, inner.x, inner.y, 3.5);
  EXPECT_EQ(e_inner.status, OffsetStatus::ok);
  EXPECT_EQ(e_inner.offset, 1);
  // Measured from the HV heading alone, the same-lane car 80 m back on the arc looks several lanes off.
  const Bsm& hv = *dm.map().own_state();
  const auto lat = lane_offset_lateral({hv.x, hv.y, hv.heading}, same.x, same.y, 3.5);
  EXPECT_TRUE(lat.status != OffsetStatus::ok || lat.offset != 0);
}

TEST(LaneOffset, NoCoverageBehindOldestPoint) {
  auto [dm, s_end] = drive_hv(straight_road(), RecognitionMethod::path_history, 100.0, 5.0);
  const WorldPose far = straight_road().pose_at(0.0, 0.0);
  const auto& ph = dm.path_history();
  // The HV started at s = 0 so a car 100 m before that is beyond the history.
  EXPECT_EQ(lane_offset_ph(ph, far.x - 100.0, far.y, 3.5).status, OffsetStatus::no_coverage);
  EXPECT_EQ(lane_offset_ph(PathHistoryBuffer{}, 0.0, 0.0, 3.5).status, OffsetStatus::no_coverage);
  (void)s_end;
}

TEST(LaneOffset, PathHistoryCorrectsForHvLaneChange) {
  // HV moves from lane 1 to lane 0; a car that stayed in lane 1 behind is now one lane right.
  const TrackSpec road = synth::circle(60.0);
  DriverMessenger dm(DmsConfig{}, PathHistoryBuffer(300.0, 1.0));
  double s = 0.0;
  const double v = 20.0;
  for (int k = 0; k <= 150; ++k) {
    const double t = k * 0.1;
    const double f = std::clamp((t - 8.0) / 3.0, 0.0, 1.0);
    const double off = 3.5 * (1.0 - f);
    const double dd = (t > 8.0 && t <= 11.0) ? -3.5 / 3.0 : 0.0;
    WorldPose p = road.pose_at(s, off);
    p.heading = normalize_heading(p.heading + std::atan2(-dd, v));
    dm.on_own_state(bsm_at(0, static_cast<std::uint64_t>(k) * 100, p, v));
    s += v * 0.1 / road.path_scale(s, off);
  }
  // 150 m back the HV was still in lane 1.
  const WorldPose car = behind(road, s, 150.0, 3.5);
  const auto e = lane_offset_ph(dm.path_history(), car.x, car.y, 3.5);
  EXPECT_EQ(e.rounded, 0);
  EXPECT_EQ(e.lane_shift, 1);
  EXPECT_EQ(e.offset, -1);
}

TEST(Recognize, MatchesBruteForceOracle) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> count(0, 8), off(-2, 2), dir(0, 1);
  std::uniform_int_distribution<int> gap_int(1, 20);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = count(rng);
    std::vector<Candidate> cands;
    std::vector<int> offsets;
    for (int i = 0; i < n; ++i) {
      cands.push_back({static_cast<VehicleId>(i + 1), 5.0 * gap_int(rng), 0.0, 0.0});
      offsets.push_back(off(rng));
    }
    const Direction d = dir(rng) ? Direction::left : Direction::right;
    const int want = d == Direction::left ? 1 : -1;
    std::optional<VehicleId> expect;
    double best = INFINITY;
    for (int i = 0; i < n; ++i) {
      if (offsets[i] == want && cands[i].gap < best) {
        best = cands[i].gap;
        expect = cands[i].id;
      }
    }
    const auto r = recognize_tv(cands, offsets, LaneChangeIntent{0, d, 0});
    ASSERT_EQ(r.tv_id, expect) << "trial " << trial;
    ASSERT_EQ(r.candidates_considered, static_cast<std::size_t>(n));
  }
}

TEST(Recognize, StraightRoadMethodsAgreeWithTrueLanes) {
  const TrackSpec road = straight_road();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> back(3.0, 95.0), wobble(-0.5, 0.5);
  std::uniform_int_distribution<int> lane(0, 2);
  auto ph_run = drive_hv(road, RecognitionMethod::path_history, 100.0, 10.0);
  const Bsm hv = *ph_run.dm.map().own_state();
  DmsConfig lat_cfg{100.0, RecognitionMethod::lateral_only, 3.5, 0.35, {}};
  for (int i = 0; i < 500; ++i) {
    const int l = lane(rng);
    const WorldPose p = road.pose_at(ph_run.s_end - back(rng), 3.5 * l + wobble(rng));
    const int truth = 1 - l;
    const std::vector<Candidate> c{{1, 10.0, p.x, p.y}};
    const LaneChangeIntent intent{0, Direction::left, 0};
    const auto a = recognize_tv(c, intent, ph_run.dm.config(), ph_run.dm.path_history(),
                                {hv.x, hv.y, hv.heading});
    const auto b = recognize_tv(c, intent, lat_cfg, ph_run.dm.path_history(),
                                {hv.x, hv.y, hv.heading});
    ASSERT_EQ(a.candidates[0].estimate.offset, truth);
    ASSERT_EQ(b.candidates[0].estimate.offset, truth);
    ASSERT_EQ(a.tv_id.has_value(), truth == 1);
  }
}

TEST(Messenger, OneDimPerIntentOnCurve) {
  const TrackSpec road = synth::circle(40.0);
  auto [dm, s] = drive_hv(road, RecognitionMethod::path_history, 100.0, 15.0);
  const double v = 20.0;
  std::uint64_t ms = 15100;
  int decisions = 0;
  std::optional<Dim> dim;
  for (int k = 0; k < 30; ++k, ms += 100) {
    s += v * 0.1 / road.path_scale(s, 3.5);
    const TurnSignal sig = k < 10 ? TurnSignal::left : TurnSignal::off;
    dm.on_own_state(bsm_at(0, ms, road.pose_at(s, 3.5), v, sig));
    dm.on_bsm(bsm_at(1, ms, behind(road, s, 30.0, 3.5)), ms);  // same lane, closer
    dm.on_bsm(bsm_at(2, ms, behind(road, s, 80.0, 0.0)), ms);  // inner lane
    dm.on_bsm(bsm_at(3, ms, behind(road, s, 120.0, 0.0)), ms); // beyond threshold
    if (auto d = dm.tick(ms, false, &road)) {
      ++decisions;
      EXPECT_EQ(d->recognition.candidates_considered, 2u);
      dim = d->dim;
    }
  }
  EXPECT_EQ(decisions, 1);
  ASSERT_TRUE(dim);
  EXPECT_EQ(dim->sender_id, 0u);
  EXPECT_EQ(dim->target_id, 2u);
  EXPECT_EQ(dim->app_type, AppType::lane_change);
  EXPECT_EQ(dim->direction, Direction::left);
}

TEST(Messenger, RigidMotionLeavesReplayRecognitionUnchanged) {
  const TrackSpec road = synth::circle(50.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> back(5.0, 140.0), ang(-kPi, kPi), shift(-1e3, 1e3);
  for (int trial = 0; trial < 40; ++trial) {
    const double a = ang(rng), dx = shift(rng), dy = shift(rng);
    auto move = [&](Bsm b) {
      const double x = b.x, y = b.y;
      b.x = std::cos(a) * x - std::sin(a) * y + dx;
      b.y = std::sin(a) * x + std::cos(a) * y + dy;
      b.heading = normalize_heading(b.heading + a);
      return b;
    };
    DriverMessenger plain(DmsConfig{150.0, RecognitionMethod::path_history, 3.5, 0.35, {}},
                          PathHistoryBuffer(300.0, 1.0));
    DriverMessenger moved = plain;
    double s = 0.0;
    std::uint64_t ms = 0;
    for (int k = 0; k <= 150; ++k, ms += 100) {
      const Bsm hv = bsm_at(0, ms, road.pose_at(s, 3.5));
      plain.on_own_state(hv);
      moved.on_own_state(move(hv));
      s += 2.0 / road.path_scale(s, 3.5);
    }
    ms -= 100;
    for (VehicleId id = 1; id <= 4; ++id) {
      const Bsm b = bsm_at(id, ms, behind(road, s, back(rng), 3.5 * static_cast<double>(id % 3)));
      plain.on_bsm(b, ms);
      moved.on_bsm(move(b), ms);
    }
    const LaneChangeIntent intent{0, trial % 2 ? Direction::left : Direction::right, ms};
    const auto r1 = plain.recognize(intent, ms, nullptr).recognition;
    const auto r2 = moved.recognize(intent, ms, nullptr).recognition;
    ASSERT_EQ(r1.tv_id, r2.tv_id);
    ASSERT_EQ(r1.candidates.size(), r2.candidates.size());
    for (std::size_t i = 0; i < r1.candidates.size(); ++i) {
      EXPECT_EQ(r1.candidates[i].id, r2.candidates[i].id);
      EXPECT_NEAR(r1.candidates[i].gap, r2.candidates[i].gap, 1e-6);
      EXPECT_EQ(r1.candidates[i].estimate.offset, r2.candidates[i].estimate.offset);
    }
  }
}

TEST(IssueDim, RejectsSelfTarget) {
  const LaneChangeIntent intent{7, Direction::right, 5};
  EXPECT_THROW(issue_dim(intent, 7, 5), std::invalid_argument);
  const Dim d = issue_dim(intent, 3, 9);
  EXPECT_EQ(d.target_id, 3u);
  EXPECT_EQ(d.timestamp_ms, 9u);
}
