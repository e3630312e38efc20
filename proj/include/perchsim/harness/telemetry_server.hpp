#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "perchsim/harness/telemetry.hpp"

namespace perchsim::harness::telemetry {

struct ServerOptions {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8765;           // 0 picks an ephemeral port
  std::size_t queue_capacity = 64;     // per client, messages
  std::function<void(const std::string&)> warn;  // defaults to stderr
};

/// WebSocket bridge: one I/O thread, any number of clients. Publishing never
/// blocks the trial thread. Each client has a bounded queue; when it is full the
/// oldest state/frame message is dropped, and event messages are only dropped
/// when nothing else is left to drop.
class TelemetryServer {
 public:
  explicit TelemetryServer(ServerOptions options = {});
  ~TelemetryServer();
  TelemetryServer(const TelemetryServer&) = delete;
  TelemetryServer& operator=(const TelemetryServer&) = delete;

  /// Binds and starts the I/O thread. Throws Error(IoError) when binding fails.
  void start();
  void stop();
  std::uint16_t port() const;

  void publish(const nlohmann::json& message, bool lossless = false);

  /// Decoded client messages received since the last call, in arrival order.
  /// Protocol errors and unknown types are warned about and left out.
  std::vector<ClientMessage> drain();

  std::size_t client_count() const;
  std::size_t dropped() const;
  std::size_t rejected() const;  // malformed or unknown client messages

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace perchsim::harness::telemetry
