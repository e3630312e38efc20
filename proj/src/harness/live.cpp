#include "perchsim/harness/live.hpp"

#include <thread>

namespace perchsim::harness {
namespace {

using Clock = std::chrono::steady_clock;
constexpr auto kPausePoll = std::chrono::milliseconds(100);

}  // namespace

LiveBridge::LiveBridge(telemetry::TelemetryServer& server, LiveOptions options)
    : server_(server), options_(options), factor_(options.speed_factor) {
  if (!(options_.speed_factor >= 0.0) || !(options_.state_rate > 0.0) || !(options_.frame_rate > 0.0)) {
    throw Error(ErrorCode::ConfigError, "live speed factor must be >= 0 and rates positive");
  }
}

TrialHooks LiveBridge::hooks() {
  TrialHooks h;
  h.on_tick = [this](const TelemetrySnapshot& s) { on_tick(s); };
  h.on_frame = [this](const FrameSnapshot& f) {
    server_.publish(telemetry::encode_frame(f.image->timestamp, *f.image, f.candidate));
  };
  h.on_event = [this](const autonomy::Event& e) { server_.publish(telemetry::encode_event(e), true); };
  h.poll_commands = [this] { return poll(); };
  h.display_frame_rate = options_.frame_rate;
  return h;
}

void LiveBridge::rebase(double sim_time) {
  wall_anchor_ = Clock::now();
  sim_anchor_ = sim_time;
  anchored_ = true;
}

void LiveBridge::absorb(const std::vector<telemetry::ClientMessage>& messages) {
  for (const auto& m : messages) {
    if (m.kind == telemetry::ClientMessage::Kind::SetSpeed) {
      factor_ = m.speed_factor;
      anchored_ = false;
    } else if (const auto cmd = telemetry::to_command(m)) {
      pending_.push_back(*cmd);
    }
  }
}

std::vector<autonomy::OperatorCommand> LiveBridge::poll() {
  absorb(server_.drain());
  std::vector<autonomy::OperatorCommand> out;
  out.swap(pending_);
  return out;
}

void LiveBridge::on_tick(const TelemetrySnapshot& s) {
  const auto state_msg = [&] { return telemetry::encode_state(s); };
  const double state_period = 1.0 / options_.state_rate;
  if (!next_state_at_ || s.time + 1e-9 >= *next_state_at_) {
    server_.publish(state_msg());
    next_state_at_ = s.time + state_period;
  }

  absorb(server_.drain());
  // Paused: keep the console fed and wait for a speed change. Commands that
  // arrive meanwhile are held for the next tick.
  while (factor_ == 0.0) {
    std::this_thread::sleep_for(kPausePoll);
    server_.publish(state_msg());
    absorb(server_.drain());
  }
  if (!options_.paced) return;
  if (!anchored_) rebase(s.time);
  const auto due = wall_anchor_ + std::chrono::duration_cast<Clock::duration>(
                                      std::chrono::duration<double>((s.time - sim_anchor_) / factor_));
  std::this_thread::sleep_until(due);
}

}  // namespace perchsim::harness
