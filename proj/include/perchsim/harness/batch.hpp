#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "perchsim/harness/trial.hpp"

namespace perchsim::harness {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Wilson score interval for k successes in n trials at normal quantile z.
Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054);

struct MonteCarloSummary {
  std::size_t trials = 0;
  std::uint64_t seed_first = 0;
  std::uint64_t seed_last = 0;
  std::string scenario_hash;
  std::array<std::size_t, kOutcomeCount> counts{};
  /// Trials with a gripper failure or slip, and those among them that reached SafeHover.
  std::size_t failures = 0;
  std::size_t recovered = 0;

  std::size_t count(TrialOutcome o) const { return counts[static_cast<std::size_t>(o)]; }
  double rate(TrialOutcome o) const;
  Interval interval(TrialOutcome o) const;
  double recovery_rate() const;
};

struct BatchResult {
  MonteCarloSummary summary;
  std::vector<TrialResult> trials;  // ordered by seed
};

/// Runs seeds seed_base .. seed_base + n - 1 on `jobs` worker threads.
/// Results are independent of `jobs` and of scheduling.
BatchResult run_batch(const ScenarioConfig& cfg, std::size_t n_trials, std::uint64_t seed_base, unsigned jobs);

MonteCarloSummary summarize(const std::vector<TrialResult>& trials);

nlohmann::json summary_json(const MonteCarloSummary& s);

std::string trial_stem(const TrialResult& r);

/// Writes <stem>.events.jsonl, <stem>.trace.csv and <stem>.summary.json and
/// returns the paths. Throws Error(IoError) with the failing path.
std::vector<std::filesystem::path> write_trial_logs(const TrialResult& r, const std::filesystem::path& dir);

/// One event log per trial plus batch_<first>-<last>_<hash8>.summary.json.
std::vector<std::filesystem::path> write_batch_logs(const BatchResult& b, const std::filesystem::path& dir);

}  // namespace perchsim::harness
