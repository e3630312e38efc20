#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "perchsim/harness/trial.hpp"

namespace perchsim::harness::telemetry {

inline constexpr int kProtocolVersion = 1;

/// Operator action the FSM is waiting on in `state`, if any. The console gates
/// its buttons on this and on `available_actions`, never on its own copy of the FSM.
std::optional<autonomy::OperatorCommand> awaiting_action(autonomy::AutonomyState state);
/// Mission commands that would be accepted in `state`.
std::vector<autonomy::OperatorCommand> available_actions(autonomy::AutonomyState state);

nlohmann::json encode_state(const TelemetrySnapshot& s);
nlohmann::json encode_frame(double time, const perception::DepthImage& image,
                            const std::optional<perception::PerchCandidate>& candidate);
nlohmann::json encode_event(const autonomy::Event& e);

/// Inverse of the frame payload: millimetre image and timestamp.
perception::DepthImage decode_frame_image(const nlohmann::json& frame);

struct ClientMessage {
  enum class Kind { ConfirmDetection, EngagePerch, Abort, SetSpeed, Unknown };
  Kind kind = Kind::Unknown;
  double speed_factor = 1.0;  // SetSpeed only; 0 pauses
  std::string type;           // as received
};

/// Throws Error(ProtocolError) on malformed JSON, a missing or non-string
/// `type`, a missing or unsupported `v`, or a bad set_speed factor. Unknown
/// types decode to Kind::Unknown so the caller can warn and carry on.
ClientMessage decode_client(std::string_view text);

std::optional<autonomy::OperatorCommand> to_command(const ClientMessage& m);

}  // namespace perchsim::harness::telemetry
