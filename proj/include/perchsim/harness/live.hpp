#pragma once

#include <chrono>
#include <optional>
#include <vector>

#include "perchsim/harness/telemetry_server.hpp"
#include "perchsim/harness/trial.hpp"

namespace perchsim::harness {

struct LiveOptions {
  double speed_factor = 1.0;  // sim seconds per wall second; 0 starts paused
  bool paced = true;          // false runs as fast as possible, ignoring the factor except for pause
  double state_rate = 10.0;   // Hz of sim time
  double frame_rate = 5.0;    // Hz of sim time
};

/// Glues a running TelemetryServer to a trial: publishes state, frames and
/// events, paces sim time against the wall clock, and hands operator
/// commands to the FSM at control-tick boundaries.
class LiveBridge {
 public:
  LiveBridge(telemetry::TelemetryServer& server, LiveOptions options = {});

  TrialHooks hooks();
  double speed_factor() const { return factor_; }

 private:
  void on_tick(const TelemetrySnapshot& s);
  std::vector<autonomy::OperatorCommand> poll();
  void absorb(const std::vector<telemetry::ClientMessage>& messages);
  void rebase(double sim_time);

  telemetry::TelemetryServer& server_;
  LiveOptions options_;
  double factor_;
  std::vector<autonomy::OperatorCommand> pending_;
  std::optional<double> next_state_at_;
  std::chrono::steady_clock::time_point wall_anchor_;
  double sim_anchor_ = 0.0;
  bool anchored_ = false;
};

}  // namespace perchsim::harness
