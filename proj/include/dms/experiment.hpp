#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dms/common.hpp"
#include "dms/dms_core.hpp"
#include "dms/metrics.hpp"
#include "dms/path_history.hpp"
#include "dms/road_geometry.hpp"
#include "dms/traffic_sim.hpp"
#include "dms/v2x_messaging.hpp"

namespace dms {

using json = nlohmann::json;

struct DmsSettings {
  double ambiguity_fraction{0.35};
  LaneShiftParams lane_shift{};
  double ph_max_length{300.0};
  double ph_min_spacing{1.0};
  std::uint64_t staleness_ms{1000};
};

struct ExperimentConfig {
  SimConfig sim;
  DmsSettings dms;
  std::vector<double> thresholds{50.0, 75.0, 100.0, 150.0};
  std::vector<Mode> modes{Mode::dms_ph, Mode::dms_lateral, Mode::no_dms};

  void validate() const {
    if (thresholds.empty()) throw ConfigError("matrix.thresholds", "must not be empty");
    if (modes.empty()) throw ConfigError("matrix.modes", "must not be empty");
    for (double t : thresholds) {
      if (!(t > 0.0)) throw ConfigError("matrix.thresholds", "must be > 0");
    }
    std::set<Mode> seen(modes.begin(), modes.end());
    if (seen.size() != modes.size()) throw ConfigError("matrix.modes", "duplicate mode");
    std::set<double> tseen(thresholds.begin(), thresholds.end());
    if (tseen.size() != thresholds.size()) throw ConfigError("matrix.thresholds", "duplicate threshold");
    if (!(dms.ambiguity_fraction > 0.0 && dms.ambiguity_fraction <= 0.5)) {
      throw ConfigError("dms.ambiguity_fraction", "must be in (0, 0.5]");
    }
    if (!(dms.lane_shift.release_fraction >= 0.0 && dms.lane_shift.release_fraction < 1.0)) {
      throw ConfigError("dms.lane_shift_release", "must be in [0, 1)");
    }
    if (!(dms.lane_shift.min_excursion >= 0.0)) throw ConfigError("dms.lane_shift_min_speed", "must be >= 0");
    if (dms.lane_shift.yaw_window < 1 || dms.lane_shift.yaw_window % 2 == 0) {
      throw ConfigError("dms.yaw_window", "must be a positive odd count");
    }
    if (!(dms.ph_max_length > 0.0)) throw ConfigError("dms.ph_max_length", "must be > 0");
    if (!(dms.ph_min_spacing >= 0.0)) throw ConfigError("dms.ph_min_spacing", "must be >= 0");
    SimConfig probe = sim;
    probe.tv_dist_thresh = thresholds.front();
    probe.validate();
  }
};

namespace detail {

// Walks one config section, rejecting keys it does not know.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) return;
    node_ = &root.at(name_);
    if (!node_->is_object()) throw ConfigError(name_, "must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    known_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    const json& v = node_->at(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(path(key), "expected a number");
        out = v.get<double>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(path(key), "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.get<std::int64_t>() < 0) throw ConfigError(path(key), "must be >= 0");
        }
        out = v.get<T>();
      } else {
        out = v.get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError(path(key), e.what());
    }
  }

  const json* raw(const char* key) {
    known_.insert(key);
    if (!node_ || !node_->contains(key)) return nullptr;
    return &node_->at(key);
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [k, _] : node_->items()) {
      if (!known_.count(k)) throw ConfigError(path(k), "unknown key");
    }
  }

  std::string path(const std::string& key) const { return name_ + "." + key; }

 private:
  std::string name_;
  const json* node_{nullptr};
  std::set<std::string> known_;
};

}  // namespace detail

inline ExperimentConfig parse_config(const json& root) {
  if (!root.is_object()) throw ConfigError("config", "top level must be an object");
  static const std::set<std::string> sections{"simulation", "track", "krauss", "dms", "matrix"};
  for (const auto& [k, _] : root.items()) {
    if (!sections.count(k)) throw ConfigError(k, "unknown section");
  }
  ExperimentConfig c;
  SimConfig& s = c.sim;

  detail::Section sim(root, "simulation");
  sim.read("n_vehicles", s.n_vehicles);
  sim.read("duration", s.duration);
  sim.read("dt", s.dt);
  sim.read("intent_period", s.intent_period);
  sim.read("brake_delta", s.brake_delta);
  sim.read("brake_hold", s.brake_hold);
  sim.read("headway_window", s.headway_window);
  sim.read("seed", s.rng_seed);
  sim.read("bsm_rate", s.bsm_rate);
  sim.read("channel_loss_prob", s.channel_loss_prob);
  sim.read("lane_change_duration", s.lane_change_duration);
  sim.read("intent_timeout", s.intent_timeout);
  if (const json* sc = sim.raw("speed_classes")) {
    if (!sc->is_array()) throw ConfigError("simulation.speed_classes", "expected an array");
    s.speed_classes.clear();
    for (const auto& e : *sc) {
      if (!e.is_object() || !e.contains("v_max") || !e.contains("accel") || e.size() != 2 ||
          !e.at("v_max").is_number() || !e.at("accel").is_number()) {
        throw ConfigError("simulation.speed_classes", "entries need numeric v_max and accel only");
      }
      s.speed_classes.push_back({e.at("v_max").get<double>(), e.at("accel").get<double>()});
    }
  }
  sim.finish();

  detail::Section track(root, "track");
  track.read("straight_len", s.straight_len);
  track.read("arc_radius", s.arc_radius);
  track.read("lane_count", s.lane_count);
  track.read("lane_width", s.lane_width);
  track.finish();

  detail::Section krauss(root, "krauss");
  krauss.read("reaction_time", s.reaction_time);
  krauss.read("decel", s.decel);
  krauss.read("sigma", s.krauss_sigma);
  krauss.read("min_gap", s.min_gap);
  krauss.read("vehicle_length", s.vehicle_length);
  krauss.finish();

  detail::Section dms(root, "dms");
  dms.read("ambiguity_fraction", c.dms.ambiguity_fraction);
  dms.read("lane_shift_release", c.dms.lane_shift.release_fraction);
  dms.read("lane_shift_min_speed", c.dms.lane_shift.min_excursion);
  dms.read("yaw_window", c.dms.lane_shift.yaw_window);
  dms.read("ph_max_length", c.dms.ph_max_length);
  dms.read("ph_min_spacing", c.dms.ph_min_spacing);
  dms.read("staleness_ms", c.dms.staleness_ms);
  dms.finish();

  detail::Section matrix(root, "matrix");
  if (const json* t = matrix.raw("thresholds")) {
    if (!t->is_array()) throw ConfigError("matrix.thresholds", "expected an array");
    c.thresholds.clear();
    for (const auto& e : *t) {
      if (!e.is_number()) throw ConfigError("matrix.thresholds", "expected numbers");
      c.thresholds.push_back(e.get<double>());
    }
  }
  if (const json* m = matrix.raw("modes")) {
    if (!m->is_array()) throw ConfigError("matrix.modes", "expected an array");
    c.modes.clear();
    for (const auto& e : *m) {
      auto mode = e.is_string() ? parse_mode(e.get<std::string>()) : std::nullopt;
      if (!mode) throw ConfigError("matrix.modes", "unknown mode " + e.dump());
      c.modes.push_back(*mode);
    }
  }
  matrix.finish();

  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config", "cannot open " + path);
  json root;
  try {
    root = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", e.what());
  }
  return parse_config(root);
}

inline json config_to_json(const ExperimentConfig& c) {
  const SimConfig& s = c.sim;
  json classes = json::array();
  for (const auto& sc : s.speed_classes) classes.push_back({{"v_max", sc.v_max}, {"accel", sc.accel}});
  json modes = json::array();
  for (Mode m : c.modes) modes.push_back(to_string(m));
  return {
      {"simulation",
       {{"n_vehicles", s.n_vehicles}, {"duration", s.duration}, {"dt", s.dt},
        {"speed_classes", classes}, {"intent_period", s.intent_period},
        {"brake_delta", s.brake_delta}, {"brake_hold", s.brake_hold},
        {"headway_window", s.headway_window}, {"seed", s.rng_seed}, {"bsm_rate", s.bsm_rate},
        {"channel_loss_prob", s.channel_loss_prob},
        {"lane_change_duration", s.lane_change_duration}, {"intent_timeout", s.intent_timeout}}},
      {"track",
       {{"straight_len", s.straight_len}, {"arc_radius", s.arc_radius},
        {"lane_count", s.lane_count}, {"lane_width", s.lane_width}}},
      {"krauss",
       {{"reaction_time", s.reaction_time}, {"decel", s.decel}, {"sigma", s.krauss_sigma},
        {"min_gap", s.min_gap}, {"vehicle_length", s.vehicle_length}}},
      {"dms",
       {{"ambiguity_fraction", c.dms.ambiguity_fraction},
        {"lane_shift_release", c.dms.lane_shift.release_fraction},
        {"lane_shift_min_speed", c.dms.lane_shift.min_excursion},
        {"yaw_window", c.dms.lane_shift.yaw_window}, {"ph_max_length", c.dms.ph_max_length},
        {"ph_min_spacing", c.dms.ph_min_spacing}, {"staleness_ms", c.dms.staleness_ms}}},
      {"matrix", {{"thresholds", c.thresholds}, {"modes", modes}}},
  };
}

inline TrackSpec build_track(const SimConfig& s) {
  return build_octagon_track(s.straight_len, s.arc_radius, s.lane_count, s.lane_width);
}

inline Bsm make_bsm(const VehicleState& v, std::uint64_t ms) {
  return Bsm{v.id, ms, v.pose.x, v.pose.y, v.heading, v.speed, v.yaw_rate, v.accel, v.turn_signal};
}

struct RunOutput {
  ExperimentResult result;
  std::vector<EventRecord> events;
  std::vector<HeadwayRecord> headway;
  std::vector<DiagnosticRecord> diagnostics;
};

inline RecognitionMethod method_for(Mode m) {
  return m == Mode::dms_lateral ? RecognitionMethod::lateral_only : RecognitionMethod::path_history;
}

// One closed-loop scenario on the octagon: traffic, BSMs to the HV, DMS, TV reaction, metrics.
inline RunOutput run_scenario(const ExperimentConfig& cfg, double thresh, Mode mode,
                              std::uint64_t seed, int scenario = 0) {
  SimConfig sim = cfg.sim;
  sim.tv_dist_thresh = thresh;
  sim.mode = mode;
  sim.rng_seed = seed;
  sim.validate();
  const TrackSpec track = build_track(sim);

  World w = init_world(track, sim);
  Channel channel(sim.channel_loss_prob, seed * 0x9E3779B97F4A7C15ull + 1);
  DmsConfig dcfg{thresh, method_for(mode), sim.lane_width, cfg.dms.ambiguity_fraction,
                 cfg.dms.lane_shift};
  DriverMessenger messenger(dcfg, PathHistoryBuffer(cfg.dms.ph_max_length, cfg.dms.ph_min_spacing),
                            cfg.dms.staleness_ms);
  HeadwayRecorder recorder(sim.headway_window, scenario);
  const std::int64_t bsm_every = sim.ticks(1.0 / sim.bsm_rate);
  const std::int64_t total = sim.total_ticks();

  RunOutput out;
  ExperimentResult& res = out.result;
  std::vector<Bsm> bsms(w.vehicles.size());

  for (std::int64_t tick = 0; tick < total; ++tick) {
    const double t = static_cast<double>(tick) * sim.dt;
    const std::uint64_t ms = sim.timestamp_ms(tick);
    const auto intent_dir = schedule_intent(w, track, sim);
    if (intent_dir) recorder.on_intent(w);

    std::optional<VehicleId> predicted;
    if (mode != Mode::no_dms) {
      if (tick % bsm_every == 0) {
        for (std::size_t i = 0; i < w.vehicles.size(); ++i) bsms[i] = make_bsm(w.vehicles[i], ms);
        messenger.on_own_state(bsms[w.hv_id]);
        for (std::size_t i = 0; i < bsms.size(); ++i) {
          if (i != w.hv_id && channel.deliver()) messenger.on_bsm(bsms[i], ms);
        }
      }
      const bool executing = w.maneuver && w.maneuver->status == ManeuverStatus::executing;
      if (auto d = messenger.tick(ms, executing, &track)) {
        predicted = d->recognition.tv_id;
        out.diagnostics.push_back({t, to_string(mode), thresh, d->recognition});
        if (d->dim && channel.deliver()) {
          ++res.dims_sent;
          const VehicleId target = d->dim->target_id;
          w.vehicles[target] = apply_brake_reaction(w.vehicles[target], sim.brake_delta);
          if (sim.brake_hold > 0.0) {
            w.brake_cap[target] = w.vehicles[target].speed;
            w.brake_until[target] = w.tick + sim.ticks(sim.brake_hold);
          }
        }
      }
    }

    if (intent_dir) {
      const auto truth = ground_truth_tv(w, track, *intent_dir, thresh);
      out.events.push_back(
          {t, to_string(mode), thresh, *intent_dir, classify(predicted, truth), predicted, truth});
    }

    const StepEvents ev = step(w, track, sim);
    const double t_next = static_cast<double>(w.tick) * sim.dt;
    if (ev.aborted) ++res.aborted;
    if (ev.completed) {
      ++res.lane_changes;
      recorder.on_completed(w, track, t_next);
    }
    recorder.sample(w, track, t_next);
  }

  out.headway = recorder.records();
  ExperimentResult agg = aggregate(out.events, out.headway);
  agg.lane_changes = res.lane_changes;
  agg.aborted = res.aborted;
  agg.dims_sent = res.dims_sent;
  agg.windows = recorder.windows();
  agg.mode = to_string(mode);
  agg.thresh = thresh;
  agg.seed = seed;
  out.result = agg;
  return out;
}

inline json result_to_json(const ExperimentResult& r) {
  json counts, percent;
  for (Outcome o : {Outcome::TP, Outcome::FP, Outcome::TN, Outcome::FN}) {
    counts[to_string(o)] = r.count(o);
    percent[to_string(o)] = r.percent(o);
  }
  json bins = json::array();
  for (const auto& [b, hb] : r.bins) {
    bins.push_back({{"bin_start_m", b * kHeadwayBinWidth},
                    {"mean_space_headway", hb.mean_space()},
                    {"mean_time_headway", hb.mean_time()},
                    {"samples", hb.n}});
  }
  return {{"mode", r.mode},
          {"threshold", r.thresh},
          {"seed", r.seed},
          {"intents", r.intents},
          {"counts", counts},
          {"percent", percent},
          {"lane_changes", r.lane_changes},
          {"aborted_lane_changes", r.aborted},
          {"dims_delivered", r.dims_sent},
          {"headway",
           {{"windows", r.windows},
            {"samples", r.headway.n},
            {"mean_space_headway", r.headway.mean_space()},
            {"mean_time_headway", r.headway.mean_time()},
            {"bins", bins}}}};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + p.string());
}

// Writes events.csv, headway.csv, diagnostics.csv and result.json into dir.
inline void emit_results(const RunOutput& run, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream ev, hw, dg;
  write_events_csv(ev, run.events);
  write_headway_csv(hw, run.headway);
  write_diagnostics_csv(dg, run.diagnostics);
  write_text(dir / "events.csv", ev.str());
  write_text(dir / "headway.csv", hw.str());
  write_text(dir / "diagnostics.csv", dg.str());
  write_text(dir / "result.json", result_to_json(run.result).dump(2) + "\n");
}

inline std::string run_dir_name(std::size_t index, Mode mode, double thresh) {
  std::ostringstream os;
  os << "run_" << (index < 10 ? "0" : "") << index << '_' << to_string(mode) << '_'
     << format_double(thresh);
  return os.str();
}

struct MatrixRun {
  std::size_t index{};
  double thresh{};
  Mode mode{};
  std::uint64_t seed{};
};

// Thresholds outer, modes inner; seed = base seed + run index.
inline std::vector<MatrixRun> matrix_runs(const ExperimentConfig& cfg) {
  std::vector<MatrixRun> runs;
  for (double t : cfg.thresholds) {
    for (Mode m : cfg.modes) {
      const std::size_t i = runs.size();
      runs.push_back({i, t, m, cfg.sim.rng_seed + i});
    }
  }
  return runs;
}

inline json matrix_summary(const ExperimentConfig& cfg, std::span<const RunOutput> outputs) {
  json runs = json::array();
  const auto plan = matrix_runs(cfg);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    json r = result_to_json(outputs[i].result);
    r["run"] = run_dir_name(i, plan[i].mode, plan[i].thresh);
    runs.push_back(r);
  }
  return {{"config", config_to_json(cfg)}, {"runs", runs}};
}

// Runs every (threshold, mode) pair; `jobs` worker threads share nothing mutable.
inline std::vector<RunOutput> run_matrix(const ExperimentConfig& cfg, unsigned jobs = 1,
                                         const std::function<void(const MatrixRun&)>& on_done = {}) {
  const auto plan = matrix_runs(cfg);
  std::vector<RunOutput> outputs(plan.size());
  std::vector<std::exception_ptr> errors(plan.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plan.size(); i = next++) {
      try {
        outputs[i] = run_scenario(cfg, plan[i].thresh, plan[i].mode, plan[i].seed,
                                  static_cast<int>(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
      if (on_done) on_done(plan[i]);
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(plan.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return outputs;
}

inline void emit_matrix(const ExperimentConfig& cfg, std::span<const RunOutput> outputs,
                        const std::filesystem::path& out_dir) {
  const auto plan = matrix_runs(cfg);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    emit_results(outputs[i], out_dir / run_dir_name(i, plan[i].mode, plan[i].thresh));
  }
  write_text(out_dir / "summary.json", matrix_summary(cfg, outputs).dump(2) + "\n");
}

// --- Trace replay ------------------------------------------------------------

using Annotations = std::map<std::uint64_t, std::optional<VehicleId>>;

constexpr const char* kAnnotationHeader = "intent_ms,truth_id";

inline void write_annotations(std::ostream& os, const Annotations& a) {
  os << kAnnotationHeader << '\n';
  for (const auto& [ms, id] : a) {
    os << ms << ',';
    if (id) os << *id;
    os << '\n';
  }
}

inline Annotations read_annotations(std::istream& is) {
  Annotations a;
  std::string line;
  if (!std::getline(is, line)) return a;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kAnnotationHeader) throw TraceError(0, "unexpected annotation header");
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_csv(line);
    auto ms = cols.size() == 2 ? parse_int<std::uint64_t>(cols[0]) : std::nullopt;
    if (!ms) throw TraceError(row, "bad annotation row");
    std::optional<VehicleId> id;
    if (!cols[1].empty()) {
      id = parse_int<VehicleId>(cols[1]);
      if (!id) throw TraceError(row, "bad annotation truth id");
    }
    a[*ms] = id;
    ++row;
  }
  return a;
}

struct ReplayScenario {
  VehicleId hv_id{0};
  double intent_period{10.0};
  Direction direction{Direction::left};
  double thresh{300.0};
  std::optional<Annotations> annotations;
};

struct ReplayOutput {
  std::vector<EventRecord> events;
  std::vector<DiagnosticRecord> diagnostics;
  ExperimentResult result;
};

// Feeds the trace through map, path history and recognition. Intents fire every
// intent_period; trailing distance is measured along the path history.
inline ReplayOutput run_replay(std::span<const Bsm> trace, const ReplayScenario& sc,
                               RecognitionMethod method, const DmsSettings& settings = {},
                               double lane_width = 3.5) {
  std::map<VehicleId, std::uint64_t> last_ts;
  bool hv_present = false;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    auto [it, inserted] = last_ts.try_emplace(trace[i].sender_id, trace[i].timestamp_ms);
    if (!inserted) {
      if (trace[i].timestamp_ms <= it->second) {
        throw TraceError(i, "timestamp not increasing for sender " + std::to_string(trace[i].sender_id));
      }
      it->second = trace[i].timestamp_ms;
    }
    hv_present = hv_present || trace[i].sender_id == sc.hv_id;
  }
  if (!hv_present) throw std::runtime_error("HV " + std::to_string(sc.hv_id) + " not in trace");
  if (!(sc.intent_period > 0.0)) throw std::invalid_argument("intent period must be > 0");

  std::vector<std::size_t> order(trace.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return trace[a].timestamp_ms < trace[b].timestamp_ms;
  });

  const double ph_len = std::max(settings.ph_max_length, 2.0 * sc.thresh);
  DmsConfig dcfg{sc.thresh, method, lane_width, settings.ambiguity_fraction, settings.lane_shift};
  DriverMessenger messenger(dcfg, PathHistoryBuffer(ph_len, settings.ph_min_spacing),
                            settings.staleness_ms);
  const auto period_ms = static_cast<std::uint64_t>(std::llround(sc.intent_period * 1000.0));
  std::uint64_t next_intent = period_ms;
  const char* method_name = method == RecognitionMethod::path_history ? "dms_ph" : "dms_lateral";

  ReplayOutput out;
  for (std::size_t k = 0; k < order.size();) {
    const std::uint64_t ts = trace[order[k]].timestamp_ms;
    for (; k < order.size() && trace[order[k]].timestamp_ms == ts; ++k) {
      const Bsm& b = trace[order[k]];
      if (b.sender_id == sc.hv_id) {
        messenger.on_own_state(b);
      } else {
        messenger.on_bsm(b, ts);
      }
    }
    if (ts < next_intent || !messenger.map().own_state()) continue;
    const std::uint64_t intent_ms = next_intent;
    while (next_intent <= ts) next_intent += period_ms;
    const LaneChangeIntent intent{sc.hv_id, sc.direction, ts};
    const auto decision = messenger.recognize(intent, ts, nullptr);
    const double t = static_cast<double>(intent_ms) / 1000.0;
    out.diagnostics.push_back({t, method_name, sc.thresh, decision.recognition});
    EventRecord ev{t, method_name, sc.thresh, sc.direction, std::nullopt,
                   decision.recognition.tv_id, std::nullopt};
    if (sc.annotations) {
      auto it = sc.annotations->find(intent_ms);
      if (it == sc.annotations->end()) {
        throw std::runtime_error("no annotation for intent at " + std::to_string(intent_ms) + " ms");
      }
      ev.truth = it->second;
      ev.outcome = classify(ev.predicted, ev.truth);
    }
    out.events.push_back(ev);
  }
  out.result = aggregate(out.events, {});
  out.result.mode = method_name;
  out.result.thresh = sc.thresh;
  return out;
}

// --- Synthetic benchmark trace -------------------------------------------------

struct TraceGenConfig {
  double arc_radius{40.0};
  double arc_sweep{kPi / 2.0};
  int lane_count{2};
  double lane_width{3.5};
  double duration{240.0};
  double dt{0.1};
  double hv_speed{30.0};
  double tv_gap{250.0};  // TV starts this far behind the HV
  double tv_speed_amplitude{0.5};
  double tv_speed_period{60.0};
  double intent_period{10.0};
  double annotation_thresh{300.0};
  bool with_tv{true};
};

struct GeneratedTrace {
  std::vector<Bsm> bsms;
  Annotations annotations;
  TrackSpec road;
};

// HV (id 0) in the right lane at constant speed; TV (id 1) trails in the left lane.
inline GeneratedTrace generate_trace(const TraceGenConfig& g) {
  const double s_start = 20.0;
  const double travel = g.hv_speed * g.duration + g.tv_gap + 2.0 * s_start;
  // Outer-lane path length per arc varies by at most the lane offset times the sweep.
  const double per_arc = g.arc_radius * g.arc_sweep;
  const int arcs = static_cast<int>(std::ceil(travel / (per_arc * 0.9))) + 2;
  GeneratedTrace out{{}, {}, build_serpentine_road(g.arc_radius, g.arc_sweep, arcs, g.lane_count, g.lane_width)};
  const TrackSpec& road = out.road;

  struct Car {
    VehicleId id;
    int lane;
    double s;
    double speed;
    double heading;
    double yaw_rate{0.0};
    double accel{0.0};
  };
  std::vector<Car> cars;
  auto make = [&](VehicleId id, int lane, double s, double speed) {
    const double off = lane * g.lane_width;
    Car c{id, lane, s, speed, road.pose_at(s, off).heading};
    c.yaw_rate = speed * road.curvature_at(s) / road.path_scale(s, off);
    return c;
  };
  cars.push_back(make(0, g.lane_count - 1, s_start + g.tv_gap, g.hv_speed));
  if (g.with_tv) cars.push_back(make(1, 0, s_start, g.hv_speed));

  const auto steps = static_cast<std::int64_t>(std::llround(g.duration / g.dt));
  const auto period_ticks = static_cast<std::int64_t>(std::llround(g.intent_period / g.dt));
  for (std::int64_t k = 0; k <= steps; ++k) {
    const auto ms = static_cast<std::uint64_t>(std::llround(static_cast<double>(k) * g.dt * 1000.0));
    const bool intent_tick = k > 0 && k % period_ticks == 0;
    for (const Car& c : cars) {
      const WorldPose p = road.pose_at(c.s, c.lane * g.lane_width);
      TurnSignal sig = TurnSignal::off;
      if (c.id == 0 && k > 0 && k % period_ticks < std::llround(1.0 / g.dt)) sig = TurnSignal::left;
      out.bsms.push_back({c.id, ms, p.x, p.y, c.heading, c.speed, c.yaw_rate, c.accel, sig});
    }
    if (intent_tick) {
      std::optional<VehicleId> truth;
      if (g.with_tv) {
        const double gap = cars[0].s - cars[1].s;
        if (gap > 0.0 && gap <= g.annotation_thresh) truth = 1;
      }
      out.annotations[ms] = truth;
    }
    const double t_next = static_cast<double>(k + 1) * g.dt;
    for (Car& c : cars) {
      double v = g.hv_speed;
      if (c.id != 0) v += g.tv_speed_amplitude * std::sin(kTwoPi * t_next / g.tv_speed_period);
      const double off = c.lane * g.lane_width;
      c.s = advance_along(road, c.s, off, c.speed * g.dt);
      c.accel = (v - c.speed) / g.dt;
      c.speed = v;
      const double h = road.pose_at(c.s, off).heading;
      c.yaw_rate = wrap_pi(h - c.heading) / g.dt;
      c.heading = h;
    }
  }
  return out;
}

}  // namespace dms
