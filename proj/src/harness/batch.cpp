#include "perchsim/harness/batch.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace perchsim::harness {
namespace {

using nlohmann::json;

std::filesystem::path prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

std::string trace_csv(const TrialResult& r) {
  std::string out = "t,state,px,py,pz,vx,vy,vz,sx,sy,sz,thrust,pitch\n";
  char buf[320];
  for (const TraceRow& row : r.trace) {
    std::snprintf(buf, sizeof buf, "%.3f,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", row.t,
                  std::string(autonomy::to_string(row.state)).c_str(), row.position.x(), row.position.y(),
                  row.position.z(), row.velocity.x(), row.velocity.y(), row.velocity.z(), row.setpoint.x(),
                  row.setpoint.y(), row.setpoint.z(), row.thrust, row.pitch);
    out += buf;
  }
  return out;
}

}  // namespace

Interval wilson_interval(std::size_t k, std::size_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

double MonteCarloSummary::rate(TrialOutcome o) const {
  return trials == 0 ? 0.0 : static_cast<double>(count(o)) / static_cast<double>(trials);
}

Interval MonteCarloSummary::interval(TrialOutcome o) const { return wilson_interval(count(o), trials); }

double MonteCarloSummary::recovery_rate() const {
  return failures == 0 ? 1.0 : static_cast<double>(recovered) / static_cast<double>(failures);
}

MonteCarloSummary summarize(const std::vector<TrialResult>& trials) {
  MonteCarloSummary s;
  s.trials = trials.size();
  if (!trials.empty()) {
    s.seed_first = trials.front().seed;
    s.seed_last = trials.front().seed;
    s.scenario_hash = trials.front().scenario_hash;
  }
  for (const TrialResult& r : trials) {
    s.seed_first = std::min(s.seed_first, r.seed);
    s.seed_last = std::max(s.seed_last, r.seed);
    ++s.counts[static_cast<std::size_t>(r.outcome)];
    const bool failed =
        r.log.contains(autonomy::EventKind::GripperFailure) || r.log.contains(autonomy::EventKind::Slip);
    if (failed) {
      ++s.failures;
      if (r.log.contains(autonomy::EventKind::RecoveryComplete)) ++s.recovered;
    }
  }
  return s;
}

BatchResult run_batch(const ScenarioConfig& cfg, std::size_t n_trials, std::uint64_t seed_base, unsigned jobs) {
  if (n_trials == 0) throw Error(ErrorCode::ConfigError, "batch needs at least one trial");
  cfg.validate();
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n_trials)));

  BatchResult out;
  out.trials.resize(n_trials);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_trials) return;
      try {
        out.trials[i] = run_trial(cfg, seed_base + i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n_trials);
        return;
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  out.summary = summarize(out.trials);
  return out;
}

nlohmann::json summary_json(const MonteCarloSummary& s) {
  json outcomes = json::object();
  for (int i = 0; i < kOutcomeCount; ++i) {
    const auto o = static_cast<TrialOutcome>(i);
    const Interval ci = s.interval(o);
    outcomes[std::string(to_string(o))] = {{"count", s.count(o)}, {"rate", s.rate(o)}, {"ci95", {ci.lo, ci.hi}}};
  }
  const Interval rec = wilson_interval(s.recovered, s.failures);
  return json{{"trials", s.trials},
              {"seed_range", {s.seed_first, s.seed_last}},
              {"scenario", s.scenario_hash},
              {"outcomes", outcomes},
              {"recovery", {{"failures", s.failures}, {"recovered", s.recovered}, {"rate", s.recovery_rate()},
                            {"ci95", {rec.lo, rec.hi}}}}};
}

std::string trial_stem(const TrialResult& r) {
  return "trial_" + std::to_string(r.seed) + "_" + r.scenario_hash.substr(0, 8);
}

std::vector<std::filesystem::path> write_trial_logs(const TrialResult& r, const std::filesystem::path& dir) {
  prepare_dir(dir);
  const std::string stem = trial_stem(r);
  const std::vector<std::filesystem::path> paths{dir / (stem + ".events.jsonl"), dir / (stem + ".trace.csv"),
                                                 dir / (stem + ".summary.json")};
  write_text(paths[0], r.log.to_jsonl());
  write_text(paths[1], trace_csv(r));
  write_text(paths[2], summary_json(r).dump(2) + "\n");
  return paths;
}

std::vector<std::filesystem::path> write_batch_logs(const BatchResult& b, const std::filesystem::path& dir) {
  prepare_dir(dir);
  std::vector<std::filesystem::path> paths;
  paths.reserve(b.trials.size() + 1);
  for (const TrialResult& r : b.trials) {
    paths.push_back(dir / (trial_stem(r) + ".events.jsonl"));
    write_text(paths.back(), r.log.to_jsonl());
  }
  const auto& s = b.summary;
  paths.push_back(dir / ("batch_" + std::to_string(s.seed_first) + "-" + std::to_string(s.seed_last) + "_" +
                         s.scenario_hash.substr(0, 8) + ".summary.json"));
  write_text(paths.back(), summary_json(s).dump(2) + "\n");
  return paths;
}

}  // namespace perchsim::harness
