#include "perchsim/harness/telemetry.hpp"

#include <cmath>
#include <cstring>

#include <boost/beast/core/detail/base64.hpp>

#include "perchsim/perception/frame_io.hpp"

namespace perchsim::harness::telemetry {
namespace {

using nlohmann::json;
using autonomy::AutonomyState;
using autonomy::OperatorCommand;
namespace base64 = boost::beast::detail::base64;

json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

[[noreturn]] void protocol_error(const std::string& what) { throw Error(ErrorCode::ProtocolError, what); }

std::string encode_base64(const void* data, std::size_t size) {
  std::string out(base64::encoded_size(size), '\0');
  out.resize(base64::encode(out.data(), data, size));
  return out;
}

std::vector<std::uint8_t> decode_base64(const std::string& text) {
  std::vector<std::uint8_t> out(base64::decoded_size(text.size()));
  std::size_t body = text.size();
  // The decoder stops at padding without counting it.
  while (body > 0 && text.size() - body < 2 && text[body - 1] == '=') --body;
  const auto [written, read] = base64::decode(out.data(), text.data(), text.size());
  if (read != body || text.size() % 4 != 0) protocol_error("frame data is not valid base64");
  out.resize(written);
  return out;
}

}  // namespace

std::optional<OperatorCommand> awaiting_action(AutonomyState state) {
  if (state == AutonomyState::AwaitDetectConfirm) return OperatorCommand::ConfirmDetection;
  if (state == AutonomyState::AwaitPerchConfirm) return OperatorCommand::EngagePerch;
  return std::nullopt;
}

std::vector<OperatorCommand> available_actions(AutonomyState state) {
  std::vector<OperatorCommand> out;
  if (const auto gate = awaiting_action(state)) out.push_back(*gate);
  out.push_back(OperatorCommand::Abort);  // harmless once the trial has ended
  return out;
}

json encode_state(const TelemetrySnapshot& s) {
  const auto& q = s.vehicle.attitude;
  json actions = json::array();
  for (const auto a : available_actions(s.state)) actions.push_back(std::string(autonomy::to_string(a)));
  const auto gate = awaiting_action(s.state);
  return json{
      {"v", kProtocolVersion},
      {"type", "state"},
      {"t", s.time},
      {"state", std::string(autonomy::to_string(s.state))},
      {"awaiting", gate ? json(std::string(autonomy::to_string(*gate))) : json(nullptr)},
      {"actions", std::move(actions)},
      {"position", vec(s.vehicle.position)},
      {"velocity", vec(s.vehicle.velocity)},
      {"attitude_wxyz", json::array({q.w(), q.x(), q.y(), q.z()})},
      {"setpoint", {{"position", vec(s.setpoint.position)},
                    {"velocity", vec(s.setpoint.velocity)},
                    {"yaw", s.setpoint.yaw}}},
      {"thrust", s.thrust},
      {"thrust_fraction", s.max_thrust > 0.0 ? s.thrust / s.max_thrust : 0.0},
      {"gripper", std::string(gripper::to_string(s.gripper))},
      {"phase", sim::to_string(s.phase)},
  };
}

json encode_frame(double time, const perception::DepthImage& image,
                  const std::optional<perception::PerchCandidate>& candidate) {
  const auto mm = perception::to_millimetres(image);
  // Wire order is little-endian regardless of host.
  std::vector<std::uint8_t> bytes(mm.size() * 2);
  for (std::size_t i = 0; i < mm.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(mm[i] & 0xFF);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(mm[i] >> 8);
  }
  json overlay = nullptr;
  if (candidate) {
    const auto& c = *candidate;
    overlay = json{
        {"bbox", json::array({c.bbox.u_min, c.bbox.v_min, c.bbox.u_max, c.bbox.v_max})},
        {"centroid", json::array({c.centroid_px.x(), c.centroid_px.y()})},
        {"centroid_depth", c.centroid_depth},
        {"diameter", c.diameter_est},
        {"tilt", c.tilt},
        {"flags", {{"diameter_ok", c.diameter_ok}, {"texture_ok", c.texture_ok}, {"overhang_ok", c.overhang_ok}}},
        {"accepted", c.accepted()},
    };
  }
  return json{
      {"v", kProtocolVersion},
      {"type", "frame"},
      {"t", time},
      {"width", image.width},
      {"height", image.height},
      {"encoding", "u16le_mm"},
      {"data", encode_base64(bytes.data(), bytes.size())},
      {"overlay", std::move(overlay)},
  };
}

json encode_event(const autonomy::Event& e) {
  return json{{"v", kProtocolVersion}, {"type", "event"}, {"event", autonomy::to_json(e)}};
}

perception::DepthImage decode_frame_image(const json& frame) {
  try {
    perception::DepthImage img;
    img.width = frame.at("width").get<int>();
    img.height = frame.at("height").get<int>();
    img.timestamp = frame.at("t").get<double>();
    if (img.width < 0 || img.height < 0) protocol_error("negative frame size");
    const auto bytes = decode_base64(frame.at("data").get<std::string>());
    const std::size_t n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
    if (bytes.size() != 2 * n) protocol_error("frame data size does not match width x height");
    img.depth.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned mm = bytes[2 * i] | (static_cast<unsigned>(bytes[2 * i + 1]) << 8);
      img.depth[i] = mm * 1e-3;
    }
    return img;
  } catch (const json::exception& ex) {
    protocol_error(std::string("bad frame message: ") + ex.what());
  }
}

ClientMessage decode_client(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& ex) {
    protocol_error(std::string("malformed JSON: ") + ex.what());
  }
  if (!j.is_object()) protocol_error("message must be a JSON object");
  const auto v = j.find("v");
  if (v == j.end() || !v->is_number_integer()) protocol_error("missing integer field 'v'");
  if (v->get<int>() != kProtocolVersion) protocol_error("unsupported protocol version " + v->dump());
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string()) protocol_error("missing string field 'type'");

  ClientMessage m;
  m.type = type->get<std::string>();
  if (m.type == "confirm_detection") {
    m.kind = ClientMessage::Kind::ConfirmDetection;
  } else if (m.type == "engage_perch") {
    m.kind = ClientMessage::Kind::EngagePerch;
  } else if (m.type == "abort") {
    m.kind = ClientMessage::Kind::Abort;
  } else if (m.type == "set_speed") {
    const auto f = j.find("factor");
    if (f == j.end() || !f->is_number()) protocol_error("set_speed needs a numeric 'factor'");
    m.speed_factor = f->get<double>();
    if (!std::isfinite(m.speed_factor) || m.speed_factor < 0.0) protocol_error("set_speed factor must be >= 0");
    m.kind = ClientMessage::Kind::SetSpeed;
  }
  return m;
}

std::optional<OperatorCommand> to_command(const ClientMessage& m) {
  switch (m.kind) {
    case ClientMessage::Kind::ConfirmDetection: return OperatorCommand::ConfirmDetection;
    case ClientMessage::Kind::EngagePerch: return OperatorCommand::EngagePerch;
    case ClientMessage::Kind::Abort: return OperatorCommand::Abort;
    default: return std::nullopt;
  }
}

}  // namespace perchsim::harness::telemetry
