#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "aim/algo/loop.hpp"

namespace aim::session {

inline constexpr int kSchemaVersion = 1;

enum class MessageKind { StateFrame, HelpRequest, HumanAction, Release, Metrics, SessionControl };

inline std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::StateFrame: return "StateFrame";
    case MessageKind::HelpRequest: return "HelpRequest";
    case MessageKind::HumanAction: return "HumanAction";
    case MessageKind::Release: return "Release";
    case MessageKind::Metrics: return "Metrics";
    case MessageKind::SessionControl: return "SessionControl";
  }
  return "SessionControl";
}

/// A message the peer sent that cannot be used. The session answers with an error frame.
struct ProtocolError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

inline MessageKind kind_from_string(std::string_view s) {
  for (auto k : {MessageKind::StateFrame, MessageKind::HelpRequest, MessageKind::HumanAction, MessageKind::Release,
                 MessageKind::Metrics, MessageKind::SessionControl}) {
    if (to_string(k) == s) return k;
  }
  throw ProtocolError("unknown message kind: " + std::string(s));
}

struct SessionMessage {
  MessageKind kind = MessageKind::SessionControl;
  long seq = 0;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const SessionMessage&) const = default;
};

inline std::string encode(const SessionMessage& m) {
  return nlohmann::json{{"schema", kSchemaVersion}, {"kind", to_string(m.kind)}, {"seq", m.seq}, {"payload", m.payload}}
      .dump();
}

inline SessionMessage decode(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  if (!j.contains("schema") || !j["schema"].is_number_integer() || j["schema"].get<int>() != kSchemaVersion) {
    throw ProtocolError("missing or unsupported schema version");
  }
  if (!j.contains("kind") || !j["kind"].is_string()) throw ProtocolError("missing kind");
  if (!j.contains("seq") || !j["seq"].is_number_integer()) throw ProtocolError("missing seq");
  SessionMessage m;
  m.kind = kind_from_string(j["kind"].get<std::string>());
  m.seq = j["seq"].get<long>();
  if (j.contains("payload")) {
    if (!j["payload"].is_object()) throw ProtocolError("payload must be an object");
    m.payload = j["payload"];
  }
  return m;
}

/// Payload of a StateFrame. Missing scores (no gate decision on this step) travel as null.
/// `step` is the index of the next step to be taken from the shown state; `last_action` is
/// the action that produced it (null on a frame sent while waiting for the expert).
struct StateFrame {
  int schema = kSchemaVersion;
  long step = 0;
  long episode = 0;
  std::uint64_t env_seed = 0;
  std::string env;
  nlohmann::json world;
  std::optional<double> q_value;
  std::optional<double> beta;
  Actor controller = Actor::Agent;
  bool awaiting_expert = false;
  std::optional<Action> last_action;
  long expert_steps = 0;
  long expert_budget = 0;

  bool operator==(const StateFrame&) const = default;
};

inline void to_json(nlohmann::json& j, const StateFrame& f) {
  j = nlohmann::json{{"schema", f.schema},
                     {"step", f.step},
                     {"episode", f.episode},
                     {"env_seed", f.env_seed},
                     {"env", f.env},
                     {"world", f.world},
                     {"q_value", f.q_value ? nlohmann::json(*f.q_value) : nlohmann::json()},
                     {"beta", f.beta ? nlohmann::json(*f.beta) : nlohmann::json()},
                     {"controller", to_string(f.controller)},
                     {"awaiting_expert", f.awaiting_expert},
                     {"last_action", f.last_action ? nlohmann::json(*f.last_action) : nlohmann::json()},
                     {"expert_steps", f.expert_steps},
                     {"expert_budget", f.expert_budget}};
}

inline void from_json(const nlohmann::json& j, StateFrame& f) {
  f.schema = j.at("schema").get<int>();
  f.step = j.at("step").get<long>();
  f.episode = j.at("episode").get<long>();
  f.env_seed = j.at("env_seed").get<std::uint64_t>();
  f.env = j.at("env").get<std::string>();
  f.world = j.at("world");
  f.q_value = j.at("q_value").is_null() ? std::nullopt : std::optional(j["q_value"].get<double>());
  f.beta = j.at("beta").is_null() ? std::nullopt : std::optional(j["beta"].get<double>());
  f.controller = actor_from_string(j.at("controller").get<std::string>());
  f.awaiting_expert = j.at("awaiting_expert").get<bool>();
  f.last_action = j.at("last_action").is_null() ? std::nullopt : std::optional(j["last_action"].get<Action>());
  f.expert_steps = j.at("expert_steps").get<long>();
  f.expert_budget = j.at("expert_budget").get<long>();
}

inline std::optional<double> finite_or_none(double v) {
  return std::isfinite(v) ? std::optional(v) : std::nullopt;
}

/// Run position attached to a frame; the gate and the world come from the live objects.
struct FrameContext {
  long step = 0;
  long episode = 0;
  std::uint64_t env_seed = 0;
  long expert_budget = 0;
  double q_value = std::nan("");
  std::optional<Action> last_action;
  bool awaiting_expert = false;
};

/// StateFrame for the environment's current state under `gate`.
inline SessionMessage encode_frame(const worlds::Environment& env, const GateState& gate, const FrameContext& c) {
  StateFrame f;
  f.step = c.step;
  f.episode = c.episode;
  f.env_seed = c.env_seed;
  f.env = std::string(worlds::to_string(env.kind()));
  f.world = env.render_model();
  f.q_value = finite_or_none(c.q_value);
  f.beta = finite_or_none(gate.beta);
  f.controller = gate.controller;
  f.awaiting_expert = c.awaiting_expert;
  f.last_action = c.last_action;
  f.expert_steps = gate.expert_steps;
  f.expert_budget = c.expert_budget;
  return {MessageKind::StateFrame, 0, f};
}

inline StateFrame decode_frame(const SessionMessage& m) {
  if (m.kind != MessageKind::StateFrame) throw ProtocolError("not a StateFrame");
  try {
    return m.payload.get<StateFrame>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("bad StateFrame payload: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ProtocolError(std::string("bad StateFrame payload: ") + e.what());
  }
}

/// An action typed by the remote expert for the frame at `step`.
struct HumanAction {
  long step = 0;
  Action action;
  double client_time = 0.0;
};

inline SessionMessage make_human_action(const HumanAction& h) {
  return {MessageKind::HumanAction, 0, {{"step", h.step}, {"action", h.action}, {"client_time", h.client_time}}};
}

inline HumanAction parse_human_action(const SessionMessage& m, const ActionSpace& space) {
  if (m.kind != MessageKind::HumanAction) throw ProtocolError("not a HumanAction");
  HumanAction h;
  try {
    h.step = m.payload.at("step").get<long>();
    h.action = m.payload.at("action").get<Action>();
    h.client_time = m.payload.value("client_time", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("bad HumanAction payload: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ProtocolError(std::string("bad HumanAction payload: ") + e.what());
  }
  if (!valid_for(h.action, space)) throw ProtocolError("action does not fit the action space");
  if (!space.is_discrete()) {
    for (std::size_t i = 0; i < h.action.vec.size(); ++i) {
      if (!std::isfinite(h.action.vec[i])) throw ProtocolError("action component is not finite");
      h.action.vec[i] = std::clamp(h.action.vec[i], space.low[i], space.high[i]);
    }
  }
  return h;
}

inline SessionMessage control(std::string_view command, nlohmann::json extra = nlohmann::json::object()) {
  extra["command"] = command;
  return {MessageKind::SessionControl, 0, std::move(extra)};
}

inline SessionMessage error_frame(std::string_view reason) { return control("error", {{"reason", reason}}); }

}  // namespace aim::session
