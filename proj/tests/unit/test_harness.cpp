#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "perchsim/harness/batch.hpp"
#include "perchsim/harness/scenario.hpp"
#include "perchsim/harness/trial.hpp"
#include "support/gen.hpp"

using namespace perchsim;
using namespace perchsim::harness;
using autonomy::EventKind;
using autonomy::EventLog;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("perchsim_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EventLog log_of(std::initializer_list<std::pair<EventKind, json>> entries) {
  EventLog log;
  double t = 0.0;
  for (const auto& [k, p] : entries) log.append({t += 0.1, k, p});
  return log;
}

}  // namespace

TEST(Scenario, DefaultsValidateAndRoundTrip) {
  const ScenarioConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  const json j = to_json(cfg);
  const ScenarioConfig back = scenario_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(scenario_hash(back), scenario_hash(cfg));
  EXPECT_EQ(scenario_hash(cfg).size(), 16u);
}

TEST(Scenario, EmptyObjectMeansDefaults) {
  EXPECT_EQ(scenario_hash(scenario_from_json(json::object())), scenario_hash(ScenarioConfig{}));
  const auto partial = scenario_from_json(json{{"grasp", {{"spine_sharpness", 0.0}}}});
  EXPECT_EQ(partial.grasp.spine_sharpness, 0.0);
  EXPECT_EQ(partial.grasp.p_mechanical, gripper::GraspModel{}.p_mechanical);
}

TEST(Scenario, UnknownKeysAreConfigErrors) {
  for (const json& j : {json{{"tre", json::object()}}, json{{"grasp", {{"sharpness", 1.0}}}}}) {
    try {
      scenario_from_json(j);
      FAIL() << j.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    }
  }
}

TEST(Scenario, WrongTypesAreConfigErrors) {
  EXPECT_THROW(scenario_from_json(json{{"timeout", "long"}}), Error);
  EXPECT_THROW(scenario_from_json(json{{"arena", {1, 2}}}), Error);
}

TEST(Scenario, InvalidValuesNameTheField) {
  ScenarioConfig cfg;
  cfg.tree.base_point = {20.0, 3.0, 0.0};
  try {
    cfg.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    EXPECT_NE(std::string(e.what()).find("tree"), std::string::npos) << e.what();
  }
}

TEST(Scenario, HashChangesWithEveryNumericField) {
  const json base = to_json(ScenarioConfig{});
  const std::string h0 = scenario_hash(ScenarioConfig{});
  const json flat = base.flatten();
  int checked = 0;
  testgen::Gen gen(17);
  for (const auto& [path, value] : flat.items()) {
    if (!value.is_number()) continue;
    json mutated = flat;
    const double v = value.get<double>();
    mutated[path] = value.is_number_integer() ? json(value.get<std::int64_t>() + 1)
                                             : json(v + (v == 0.0 ? 0.01 : v * gen.uniform(0.01, 0.1)));
    ScenarioConfig cfg;
    try {
      cfg = scenario_from_json(mutated.unflatten());
    } catch (const Error&) {
      continue;  // the parser may refuse some perturbed values outright
    }
    ASSERT_NE(scenario_hash(cfg), h0) << path;
    ASSERT_EQ(to_json(cfg), mutated.unflatten()) << path;
    ++checked;
  }
  EXPECT_GT(checked, 60);
}

TEST(Scenario, LoadsFromFile) {
  const fs::path dir = scratch("scenario");
  fs::create_directories(dir);
  const fs::path p = dir / "dull.json";
  std::ofstream(p) << R"({"name": "dull", "grasp": {"spine_sharpness": 0.0}})";
  const auto cfg = load_scenario(p);
  EXPECT_EQ(cfg.name, "dull");
  try {
    load_scenario(dir / "missing.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    EXPECT_NE(std::string(e.what()).find("missing.json"), std::string::npos) << e.what();
  }
}

TEST(Classify, OutcomesFromSyntheticLogs) {
  const json none = json::object();
  EXPECT_EQ(classify(log_of({{EventKind::Start, none}})), TrialOutcome::DetectFailure);
  EXPECT_EQ(classify(log_of({{EventKind::Start, none}, {EventKind::Detect, none}, {EventKind::Reject, none}})),
            TrialOutcome::DetectFailure);
  EXPECT_EQ(classify(log_of({{EventKind::Start, none}, {EventKind::Detect, none}, {EventKind::PlanFailed, none}})),
            TrialOutcome::PlanFailure);
  EXPECT_EQ(classify(log_of({{EventKind::Start, none}, {EventKind::Detect, none}, {EventKind::Abort, none}})),
            TrialOutcome::Aborted);
  EXPECT_EQ(classify(log_of({{EventKind::Start, none},
                             {EventKind::Detect, none},
                             {EventKind::Engage, none},
                             {EventKind::Perched, none},
                             {EventKind::HoldComplete, none}})),
            TrialOutcome::PerchSuccess);
  EXPECT_EQ(classify(log_of({{EventKind::Start, none},
                             {EventKind::Detect, none},
                             {EventKind::Slip, none},
                             {EventKind::RecoveryComplete, none}})),
            TrialOutcome::SpineSlip);
  EXPECT_EQ(classify(log_of({{EventKind::Start, none},
                             {EventKind::Detect, none},
                             {EventKind::GripperFailure, none},
                             {EventKind::RecoveryComplete, none}})),
            TrialOutcome::MechanicalFailure);
  EXPECT_EQ(classify(log_of({{EventKind::Start, json{{"induced_failure", true}}},
                             {EventKind::Detect, none},
                             {EventKind::Slip, none},
                             {EventKind::RecoveryComplete, none}})),
            TrialOutcome::RecoverySuccess);
  EXPECT_EQ(classify(log_of({{EventKind::Start, none},
                             {EventKind::Detect, none},
                             {EventKind::Slip, none},
                             {EventKind::GroundContact, none}})),
            TrialOutcome::RecoveryFailure);
  EXPECT_EQ(classify(log_of({{EventKind::Start, none}, {EventKind::Detect, none}, {EventKind::Engage, none}})),
            TrialOutcome::Timeout);
}

TEST(Classify, OutcomeNamesRoundTrip) {
  for (int i = 0; i < kOutcomeCount; ++i) {
    const auto o = static_cast<TrialOutcome>(i);
    EXPECT_EQ(parse_outcome(to_string(o)), o);
  }
  EXPECT_TRUE(is_success(TrialOutcome::PerchSuccess));
  EXPECT_TRUE(is_success(TrialOutcome::RecoverySuccess));
  EXPECT_FALSE(is_success(TrialOutcome::SpineSlip));
}

TEST(Trial, NominalSeedEndsInAPerchOutcome) {
  const ScenarioConfig cfg;
  const auto r = run_trial(cfg, 42);
  const std::set<TrialOutcome> allowed{TrialOutcome::PerchSuccess, TrialOutcome::SpineSlip,
                                       TrialOutcome::MechanicalFailure};
  EXPECT_TRUE(allowed.count(r.outcome)) << to_string(r.outcome);
  EXPECT_EQ(classify(r.log), r.outcome);
  EXPECT_TRUE(autonomy::replay(r.log).matches());
  ASSERT_TRUE(r.timings.detect && r.timings.arrival && r.timings.trigger);
  EXPECT_LT(*r.timings.detect, *r.timings.arrival);
  EXPECT_LE(*r.timings.arrival, *r.timings.trigger);
  EXPECT_TRUE(r.log.contains(EventKind::TrialEnd));
}

TEST(Trial, PerchSuccessIsDeclaredOnlyAfterTheHoldWindow) {
  const ScenarioConfig cfg;
  int seen = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const auto r = run_trial(cfg, seed);
    if (r.outcome != TrialOutcome::PerchSuccess) continue;
    ++seen;
    const auto* engage = r.log.first(EventKind::Engage);
    const auto* hold = r.log.first(EventKind::HoldComplete);
    ASSERT_TRUE(engage && hold);
    EXPECT_GE(hold->timestamp - engage->timestamp, cfg.fsm.hold_window - 1e-9);
    EXPECT_LE(hold->timestamp - engage->timestamp, cfg.fsm.hold_window + cfg.fsm.disarm_grace + 0.02);
    EXPECT_EQ(r.final_state, autonomy::AutonomyState::Perched);
  }
  EXPECT_GT(seen, 5);
}

TEST(Trial, DullSpinesRecoverToTheOffset) {
  ScenarioConfig cfg;
  cfg.grasp.spine_sharpness = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = run_trial(cfg, seed);
    EXPECT_EQ(r.outcome, TrialOutcome::RecoverySuccess) << seed;
    EXPECT_EQ(r.final_state, autonomy::AutonomyState::SafeHover);
    ASSERT_TRUE(r.recovery_latency && r.safe_hover_distance);
    EXPECT_NEAR(*r.recovery_latency, cfg.fsm.detector.actuation_latency, 0.01 + 1e-9);
    EXPECT_NEAR(*r.safe_hover_distance, 1.0, 0.2);
    // A slip drops from a braced hover; a failed closure sinks through the
    // gentle-perch ramp until the trailing mean crosses the threshold.
    if (r.log.contains(EventKind::Slip)) {
      EXPECT_LT(r.max_altitude_loss, 0.5) << seed;
    } else {
      EXPECT_TRUE(r.log.contains(EventKind::GripperFailure));
      EXPECT_LT(r.max_altitude_loss, 1.2) << seed;
    }
    EXPECT_TRUE(r.detector_fired);
  }
}

TEST(Trial, AutoRejectNeverEntersPlanning) {
  ScenarioConfig cfg;
  cfg.fsm.policy.kind = autonomy::ConfirmPolicy::Kind::AutoReject;
  const auto r = run_trial(cfg, 3);
  EXPECT_EQ(r.outcome, TrialOutcome::DetectFailure);
  for (const auto& e : r.log.events()) {
    if (e.kind == EventKind::StateEnter) {
      ASSERT_NE(e.payload["state"], "Planning");
    }
  }
}

TEST(Trial, InvalidScenarioIsAConfigError) {
  ScenarioConfig cfg;
  cfg.timeout = -1.0;
  try {
    run_trial(cfg, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(Trial, SameSeedGivesTheSameLog) {
  const ScenarioConfig cfg;
  for (std::uint64_t seed : {7u, 8u}) {
    EXPECT_EQ(run_trial(cfg, seed).log.to_jsonl(), run_trial(cfg, seed).log.to_jsonl());
  }
  EXPECT_NE(run_trial(cfg, 7).log.to_jsonl(), run_trial(cfg, 8).log.to_jsonl());
}

TEST(Trial, HooksSeeEveryEventInOrder) {
  const ScenarioConfig cfg;
  TrialHooks hooks;
  std::vector<autonomy::Event> seen;
  int ticks = 0, frames = 0;
  hooks.on_event = [&](const autonomy::Event& e) { seen.push_back(e); };
  hooks.on_tick = [&](const TelemetrySnapshot&) { ++ticks; };
  hooks.on_frame = [&](const FrameSnapshot& f) {
    ASSERT_NE(f.image, nullptr);
    ++frames;
  };
  const auto r = run_trial(cfg, 42, {}, hooks);
  ASSERT_EQ(seen.size(), r.log.size());
  for (std::size_t i = 0; i < seen.size(); ++i) ASSERT_EQ(autonomy::to_json(seen[i]), autonomy::to_json(r.log.events()[i]));
  EXPECT_GT(ticks, 100);
  EXPECT_NEAR(frames, r.timings.end * hooks.display_frame_rate, 2.0);
  // Observers never change the result.
  EXPECT_EQ(r.log.to_jsonl(), run_trial(cfg, 42).log.to_jsonl());
}

TEST(Logs, OneTrialWritesThreeNamedFiles) {
  const fs::path dir = scratch("trial");
  const auto r = run_trial(ScenarioConfig{}, 42, TrialOptions{true});
  const auto paths = write_trial_logs(r, dir);
  ASSERT_EQ(paths.size(), 3u);
  const std::string stem = "trial_42_" + r.scenario_hash.substr(0, 8);
  EXPECT_EQ(trial_stem(r), stem);
  EXPECT_EQ(paths[0].filename(), stem + ".events.jsonl");
  EXPECT_EQ(paths[1].filename(), stem + ".trace.csv");
  EXPECT_EQ(paths[2].filename(), stem + ".summary.json");
  for (const auto& p : paths) EXPECT_TRUE(fs::exists(p));
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}), 3);

  EXPECT_EQ(EventLog::read(paths[0]).to_jsonl(), r.log.to_jsonl());
  const auto summary = json::parse(slurp(paths[2]));
  EXPECT_EQ(summary["outcome"], std::string(to_string(r.outcome)));
  EXPECT_EQ(summary["seed"], 42);
  std::istringstream csv(slurp(paths[1]));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header.rfind("t,", 0), 0u) << header;
  EXPECT_GT(r.trace.size(), 100u);

  // Rerunning the seed rewrites the same bytes.
  const auto again = write_trial_logs(run_trial(ScenarioConfig{}, 42, TrialOptions{true}), scratch("trial2"));
  EXPECT_EQ(slurp(again[0]), slurp(paths[0]));
}

TEST(Logs, UnwritableDirectoryIsAnIoError) {
  const fs::path file = scratch("blocker");
  std::ofstream(file) << "x";
  try {
    write_trial_logs(run_trial(ScenarioConfig{}, 1), file / "sub");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
    EXPECT_NE(std::string(e.what()).find("blocker"), std::string::npos) << e.what();
  }
}

TEST(Batch, ParallelismDoesNotChangeAnything) {
  const ScenarioConfig cfg;
  const auto a = run_batch(cfg, 24, 100, 1);
  const auto b = run_batch(cfg, 24, 100, 8);
  ASSERT_EQ(a.trials.size(), 24u);
  ASSERT_EQ(b.trials.size(), 24u);
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(a.trials[i].seed, 100 + i);
    EXPECT_EQ(b.trials[i].seed, 100 + i);
    EXPECT_EQ(a.trials[i].outcome, b.trials[i].outcome);
    EXPECT_EQ(a.trials[i].log.to_jsonl(), b.trials[i].log.to_jsonl());
  }
  EXPECT_EQ(summary_json(a.summary), summary_json(b.summary));
}

TEST(Batch, WritesOneLogPerTrialAndOneSummary) {
  const fs::path dir = scratch("batch");
  const auto b = run_batch(ScenarioConfig{}, 6, 1, 2);
  const auto paths = write_batch_logs(b, dir);
  ASSERT_EQ(paths.size(), 7u);
  EXPECT_EQ(paths.back().filename(), "batch_1-6_" + b.summary.scenario_hash.substr(0, 8) + ".summary.json");
  const auto j = json::parse(slurp(paths.back()));
  EXPECT_EQ(j["trials"], 6);
}

TEST(Summary, CountsSumToTheTrialCount) {
  testgen::Gen gen(9);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<TrialResult> trials(gen.integer(1, 300));
    for (std::size_t i = 0; i < trials.size(); ++i) {
      trials[i].seed = 10 + i;
      trials[i].outcome = static_cast<TrialOutcome>(gen.integer(0, kOutcomeCount - 1));
    }
    const auto s = summarize(trials);
    std::size_t total = 0;
    double rates = 0.0;
    for (int o = 0; o < kOutcomeCount; ++o) {
      total += s.counts[o];
      rates += s.rate(static_cast<TrialOutcome>(o));
      const auto iv = s.interval(static_cast<TrialOutcome>(o));
      ASSERT_LE(iv.lo, s.rate(static_cast<TrialOutcome>(o)) + 1e-12);
      ASSERT_GE(iv.hi, s.rate(static_cast<TrialOutcome>(o)) - 1e-12);
    }
    ASSERT_EQ(total, trials.size());
    ASSERT_EQ(s.trials, trials.size());
    ASSERT_NEAR(rates, 1.0, 1e-12);
    ASSERT_EQ(s.seed_first, 10u);
    ASSERT_EQ(s.seed_last, 10 + trials.size() - 1);
  }
}

TEST(Summary, OrderOfTrialsDoesNotMatter) {
  const auto b = run_batch(ScenarioConfig{}, 8, 1, 1);
  auto shuffled = b.trials;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(summary_json(summarize(shuffled)), summary_json(b.summary));
}

TEST(Wilson, MatchesTheClosedForm) {
  const double z = 1.959963984540054;
  for (auto [k, n] : {std::pair<std::size_t, std::size_t>{750, 1000}, {1, 20}, {15, 20}, {50, 100}}) {
    const double p = static_cast<double>(k) / n;
    const double denom = 1 + z * z / n;
    const double centre = (p + z * z / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4.0 * n * n)) / denom;
    const auto iv = wilson_interval(k, n);
    EXPECT_NEAR(iv.lo, centre - half, 1e-12);
    EXPECT_NEAR(iv.hi, centre + half, 1e-12);
  }
  // 750 of 1000: roughly 0.722 to 0.776.
  const auto iv = wilson_interval(750, 1000);
  EXPECT_NEAR(iv.lo, 0.7222, 1e-3);
  EXPECT_NEAR(iv.hi, 0.7758, 1e-3);
}

TEST(Wilson, EdgesAreExact) {
  EXPECT_EQ(wilson_interval(0, 10).lo, 0.0);
  EXPECT_EQ(wilson_interval(10, 10).hi, 1.0);
  EXPECT_GT(wilson_interval(0, 10).hi, 0.0);
  EXPECT_LT(wilson_interval(10, 10).lo, 1.0);
}
