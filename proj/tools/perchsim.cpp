#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "perchsim/harness/batch.hpp"
#include "perchsim/harness/live.hpp"
#include "perchsim/harness/scenario.hpp"
#include "perchsim/harness/telemetry_server.hpp"
#include "perchsim/harness/trial.hpp"
#include "perchsim/perception/frame_io.hpp"

namespace fs = std::filesystem;
using namespace perchsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

harness::ScenarioConfig scenario_or_default(const std::string& path) {
  if (path.empty()) return harness::ScenarioConfig{};
  return harness::load_scenario(path);
}

void print_paths(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) std::cout << "wrote " << p.string() << '\n';
}

struct RunArgs {
  std::string scenario;
  std::uint64_t seed = 1;
  bool console = false;
  std::uint16_t port = 8765;
  double speed = 1.0;
  bool wait_client = false;
  std::string out = "runs";
};

int cmd_run(const RunArgs& a) {
  auto cfg = scenario_or_default(a.scenario);
  harness::TrialOptions options;
  options.record_trace = true;
  harness::TrialResult r;
  if (a.console) {
    // The operator is the confirm gate in live runs.
    cfg.fsm.policy.kind = autonomy::ConfirmPolicy::Kind::Human;
    cfg.validate();
    harness::telemetry::TelemetryServer server({"127.0.0.1", a.port, 64, {}});
    server.start();
    std::cerr << "telemetry on ws://127.0.0.1:" << server.port() << "/\n";
    if (a.wait_client) {
      while (server.client_count() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    harness::LiveBridge bridge(server, {a.speed, true, 10.0, 5.0});
    r = harness::run_trial(cfg, a.seed, options, bridge.hooks());
    // Give the last event messages a moment to flush before closing.
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    server.stop();
  } else {
    r = harness::run_trial(cfg, a.seed, options);
  }
  print_paths(harness::write_trial_logs(r, a.out));
  std::cout << harness::summary_json(r).dump(2) << '\n';
  return harness::is_success(r.outcome) ? kExitOk : kExitFailure;
}

struct BatchArgs {
  std::string scenario;
  std::size_t trials = 1000;
  std::uint64_t seed_base = 1;
  unsigned jobs = 0;
  std::string out = "runs";
};

int cmd_batch(const BatchArgs& a) {
  const auto cfg = scenario_or_default(a.scenario);
  const unsigned jobs = a.jobs > 0 ? a.jobs : std::max(1u, std::thread::hardware_concurrency());
  const auto b = harness::run_batch(cfg, a.trials, a.seed_base, jobs);
  const auto paths = harness::write_batch_logs(b, a.out);
  std::cout << "wrote " << paths.size() << " files under " << a.out << '\n';
  std::cout << harness::summary_json(b.summary).dump(2) << '\n';
  return kExitOk;
}

int cmd_replay(const std::string& log_path) {
  const auto log = autonomy::EventLog::read(log_path);
  const auto res = autonomy::replay(log);
  std::cout << "recorded " << res.recorded.size() << " transitions, replayed " << res.replayed.size() << '\n';
  if (!res.matches()) {
    const std::size_t n = std::min(res.recorded.size(), res.replayed.size());
    std::size_t i = 0;
    while (i < n && res.recorded[i] == res.replayed[i]) ++i;
    std::cout << "MISMATCH at transition " << i << '\n';
    return kExitFailure;
  }
  std::cout << "final state " << (res.replayed.empty() ? "Idle" : autonomy::to_string(res.replayed.back()))
            << ", outcome " << harness::to_string(harness::classify(log)) << '\n';
  std::cout << "MATCH\n";
  return kExitOk;
}

struct ExportArgs {
  std::string scenario;
  std::uint64_t trial = 1;
  double rate = 5.0;
  std::string out = "frames";
};

int cmd_export_frames(const ExportArgs& a) {
  const auto cfg = scenario_or_default(a.scenario);
  fs::create_directories(a.out);
  const std::string stem = "trial_" + std::to_string(a.trial) + "_" + harness::scenario_hash(cfg).substr(0, 8);
  int index = 0;
  harness::TrialHooks hooks;
  hooks.display_frame_rate = a.rate;
  hooks.on_frame = [&](const harness::FrameSnapshot& f) {
    char name[32];
    std::snprintf(name, sizeof name, ".frame_%05d.depth", index++);
    perception::write_depth_frame(fs::path(a.out) / (stem + name), *f.image);
  };
  const auto r = harness::run_trial(cfg, a.trial, {}, hooks);
  std::cout << "wrote " << index << " frames to " << a.out << " (" << stem << ".frame_*.depth), outcome "
            << harness::to_string(r.outcome) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perchsim: seeded tree-perching quadrotor simulator"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one seeded trial");
  run_cmd->add_option("--scenario", run.scenario, "Scenario JSON file (defaults apply when omitted)");
  run_cmd->add_option("--seed", run.seed, "Trial seed");
  auto* headless = run_cmd->add_flag("--headless", "Run without the telemetry server (default)");
  run_cmd->add_flag("--console", run.console, "Serve telemetry and take operator commands over WebSocket")
      ->excludes(headless);
  run_cmd->add_option("--port", run.port, "WebSocket port for --console (0 = ephemeral)");
  run_cmd->add_option("--speed", run.speed, "Initial sim speed factor for --console (0 starts paused)")
      ->check(CLI::NonNegativeNumber);
  run_cmd->add_flag("--wait-client", run.wait_client, "With --console, wait for a client before starting");
  run_cmd->add_option("--out", run.out, "Output directory");

  BatchArgs batch;
  auto* batch_cmd = app.add_subcommand("batch", "Run a Monte Carlo batch over a seed range");
  batch_cmd->add_option("--scenario", batch.scenario, "Scenario JSON file");
  batch_cmd->add_option("--trials", batch.trials, "Number of trials")->check(CLI::PositiveNumber);
  batch_cmd->add_option("--seed-base", batch.seed_base, "First seed; trial i uses seed_base + i");
  batch_cmd->add_option("--jobs", batch.jobs, "Worker threads (0 = hardware concurrency)");
  batch_cmd->add_option("--out", batch.out, "Output directory");

  std::string log_path;
  auto* replay_cmd = app.add_subcommand("replay", "Re-derive the state sequence from an event log");
  replay_cmd->add_option("--log", log_path, "Event log (.events.jsonl)")->required();

  ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export-frames", "Dump a trial's depth frames");
  export_cmd->add_option("--trial", exp.trial, "Trial seed");
  export_cmd->add_option("--scenario", exp.scenario, "Scenario JSON file");
  export_cmd->add_option("--rate", exp.rate, "Frames per simulated second")->check(CLI::PositiveNumber);
  export_cmd->add_option("--out", exp.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*batch_cmd) return cmd_batch(batch);
    if (*replay_cmd) return cmd_replay(log_path);
    if (*export_cmd) return cmd_export_frames(exp);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const bool config = e.code() == ErrorCode::ConfigError || e.code() == ErrorCode::IoError;
    return config ? kExitConfig : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitConfig;
}
