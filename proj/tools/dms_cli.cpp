// Command-line front end: experiment matrix, single runs, trace replay and trace generation.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dms/experiment.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string resolve_out_dir(const std::string& flag, const char* fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DMS_OUT_DIR"); env && *env) return env;
  return fallback;
}

dms::ExperimentConfig load_or_default(const std::string& path) {
  dms::ExperimentConfig cfg;
  if (!path.empty()) cfg = dms::load_config(path);
  return cfg;
}

void print_result(const dms::ExperimentResult& r) {
  std::cout << r.mode << " thresh=" << r.thresh << " intents=" << r.intents
            << " TP=" << r.count(dms::Outcome::TP) << " FP=" << r.count(dms::Outcome::FP)
            << " TN=" << r.count(dms::Outcome::TN) << " FN=" << r.count(dms::Outcome::FN)
            << " space_hw=" << r.headway.mean_space() << " time_hw=" << r.headway.mean_time()
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Driver messenger lane-change simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, mode_name;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  unsigned jobs = 1;

  auto* matrix = app.add_subcommand("matrix", "run every threshold x mode scenario");
  matrix->add_option("--config", config_path, "JSON experiment config");
  matrix->add_option("--seed", seed, "base seed");
  matrix->add_option("--out-dir", out_dir, "output directory (env DMS_OUT_DIR)");
  matrix->add_option("--threshold", threshold, "restrict to one threshold");
  matrix->add_option("--mode", mode_name, "restrict to one mode");
  matrix->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);

  auto* run = app.add_subcommand("run", "run a single scenario");
  run->add_option("--config", config_path, "JSON experiment config");
  run->add_option("--seed", seed, "seed");
  run->add_option("--out-dir", out_dir, "output directory (env DMS_OUT_DIR)");
  run->add_option("--threshold", threshold, "TV distance threshold, m");
  run->add_option("--mode", mode_name, "dms_ph | dms_lateral | no_dms");

  std::string trace_path, annotations_path, direction_name = "left", replay_mode = "both";
  dms::VehicleId hv_id = 0;
  double period = 10.0;
  auto* replay = app.add_subcommand("replay", "replay a BSM trace through the recognizer");
  replay->add_option("--trace", trace_path, "BSM trace (.csv or binary)")->required();
  replay->add_option("--annotations", annotations_path, "intent_ms,truth_id CSV for scoring");
  replay->add_option("--config", config_path, "JSON config (dms and track.lane_width used)");
  replay->add_option("--hv-id", hv_id, "host vehicle id");
  replay->add_option("--period", period, "intent period, s");
  replay->add_option("--direction", direction_name, "left | right");
  replay->add_option("--threshold", threshold, "TV distance threshold, m (default 300)");
  replay->add_option("--mode", replay_mode, "dms_ph | dms_lateral | both");
  replay->add_option("--out-dir", out_dir, "output directory (env DMS_OUT_DIR)");

  dms::TraceGenConfig gen;
  std::string gen_out = "trace.csv", gen_ann;
  bool no_tv = false;
  auto* gentrace = app.add_subcommand("gen-trace", "write the synthetic curved two-lane trace");
  gentrace->add_option("--out", gen_out, "trace path (.csv or binary)");
  gentrace->add_option("--annotations", gen_ann, "annotation CSV path");
  gentrace->add_option("--duration", gen.duration, "seconds");
  gentrace->add_option("--gap", gen.tv_gap, "initial TV distance behind HV, m");
  gentrace->add_option("--speed", gen.hv_speed, "HV speed, m/s");
  gentrace->add_option("--radius", gen.arc_radius, "arc radius, m");
  gentrace->add_flag("--no-tv", no_tv, "HV alone");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*matrix || *run) {
      dms::ExperimentConfig cfg = load_or_default(config_path);
      if (seed) cfg.sim.rng_seed = *seed;
      if (threshold) cfg.thresholds = {*threshold};
      if (!mode_name.empty()) {
        auto m = dms::parse_mode(mode_name);
        if (!m) throw dms::ConfigError("matrix.modes", "unknown mode " + mode_name);
        cfg.modes = {*m};
      }
      if (*run) {
        cfg.thresholds.resize(1);
        cfg.modes.resize(1);
      }
      cfg.validate();
      const fs::path out = resolve_out_dir(out_dir, "results");
      std::mutex io;
      const auto t0 = std::chrono::steady_clock::now();
      auto outputs = dms::run_matrix(cfg, jobs, [&](const dms::MatrixRun& r) {
        std::lock_guard lock(io);
        std::cerr << "done " << dms::run_dir_name(r.index, r.mode, r.thresh) << '\n';
      });
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      dms::emit_matrix(cfg, outputs, out);
      for (const auto& o : outputs) print_result(o.result);
      std::cerr << outputs.size() << " run(s) in " << secs << " s, results in " << out << '\n';
      return 0;
    }

    if (*replay) {
      dms::ExperimentConfig cfg = load_or_default(config_path);
      const auto trace = dms::read_bsm_trace(trace_path);
      dms::ReplayScenario sc;
      sc.hv_id = hv_id;
      sc.intent_period = period;
      if (direction_name == "left") {
        sc.direction = dms::Direction::left;
      } else if (direction_name == "right") {
        sc.direction = dms::Direction::right;
      } else {
        throw dms::ConfigError("direction", "expected left or right");
      }
      if (threshold) sc.thresh = *threshold;
      if (!(sc.thresh > 0.0)) throw dms::ConfigError("threshold", "must be > 0");
      if (!annotations_path.empty()) {
        std::ifstream f(annotations_path);
        if (!f) throw std::runtime_error("cannot open " + annotations_path);
        sc.annotations = dms::read_annotations(f);
      }
      std::vector<dms::RecognitionMethod> methods;
      if (replay_mode == "dms_ph" || replay_mode == "both") methods.push_back(dms::RecognitionMethod::path_history);
      if (replay_mode == "dms_lateral" || replay_mode == "both") methods.push_back(dms::RecognitionMethod::lateral_only);
      if (methods.empty()) throw dms::ConfigError("mode", "expected dms_ph, dms_lateral or both");

      const fs::path out = resolve_out_dir(out_dir, "replay");
      dms::json summary = dms::json::array();
      for (auto m : methods) {
        const auto r = dms::run_replay(trace, sc, m, cfg.dms, cfg.sim.lane_width);
        dms::RunOutput ro{r.result, r.events, {}, r.diagnostics};
        emit_results(ro, out / r.result.mode);
        dms::json j = dms::result_to_json(r.result);
        j["events"] = r.events.size();
        j["scored"] = sc.annotations.has_value();
        summary.push_back(j);
        std::cout << r.result.mode << " intents=" << r.events.size();
        if (sc.annotations) {
          std::cout << " TP%=" << r.result.percent(dms::Outcome::TP)
                    << " TN%=" << r.result.percent(dms::Outcome::TN);
        }
        std::cout << '\n';
      }
      dms::write_text(out / "summary.json", summary.dump(2) + "\n");
      return 0;
    }

    if (*gentrace) {
      gen.with_tv = !no_tv;
      const auto g = dms::generate_trace(gen);
      dms::write_bsm_trace(gen_out, g.bsms);
      if (!gen_ann.empty()) {
        std::ofstream f(gen_ann);
        if (!f) throw std::runtime_error("cannot write " + gen_ann);
        dms::write_annotations(f, g.annotations);
      }
      std::cout << g.bsms.size() << " BSMs, " << g.annotations.size() << " intents -> " << gen_out
                << '\n';
      return 0;
    }
  } catch (const dms::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
