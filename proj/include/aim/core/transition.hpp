#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "aim/core/action.hpp"

namespace aim {

enum class Actor { Agent, Expert };
enum class Outcome { None, Success, Crash, Timeout };

inline std::string_view to_string(Actor a) { return a == Actor::Expert ? "expert" : "agent"; }

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Crash: return "crash";
    case Outcome::Timeout: return "timeout";
    case Outcome::None: break;
  }
  return "none";
}

inline Actor actor_from_string(std::string_view s) {
  if (s == "expert") return Actor::Expert;
  if (s == "agent") return Actor::Agent;
  throw InvalidArgument("unknown actor: " + std::string(s));
}

inline Outcome outcome_from_string(std::string_view s) {
  if (s == "none") return Outcome::None;
  if (s == "success") return Outcome::Success;
  if (s == "crash") return Outcome::Crash;
  if (s == "timeout") return Outcome::Timeout;
  throw InvalidArgument("unknown outcome: " + std::string(s));
}

/// One environment step. `reward` is kept for the return metric only and is not
/// part of the serialized record; learners never read it.
struct Transition {
  Observation s;
  Action a;
  Observation s_next;
  Actor actor = Actor::Agent;
  bool done = false;
  Outcome outcome = Outcome::None;
  long step_index = 0;
  double reward = 0.0;
};

inline void to_json(nlohmann::json& j, const Action& a) {
  if (a.is_discrete()) {
    j = a.index;
  } else {
    j = a.vec;
  }
}

inline void from_json(const nlohmann::json& j, Action& a) {
  if (j.is_number_integer()) {
    a = Action::of(j.get<int>());
  } else if (j.is_array()) {
    a = Action::of(j.get<std::vector<double>>());
  } else {
    throw InvalidArgument("action must be an integer or an array");
  }
}

inline void to_json(nlohmann::json& j, const Transition& t) {
  j = nlohmann::json{{"s", t.s},
                     {"a", t.a},
                     {"s_next", t.s_next},
                     {"actor", to_string(t.actor)},
                     {"done", t.done},
                     {"outcome", to_string(t.outcome)},
                     {"step", t.step_index}};
}

inline void from_json(const nlohmann::json& j, Transition& t) {
  t.s = j.at("s").get<Observation>();
  t.a = j.at("a").get<Action>();
  t.s_next = j.at("s_next").get<Observation>();
  t.actor = actor_from_string(j.at("actor").get<std::string>());
  t.done = j.at("done").get<bool>();
  t.outcome = outcome_from_string(j.at("outcome").get<std::string>());
  t.step_index = j.at("step").get<long>();
  t.reward = 0.0;
  if (t.outcome != Outcome::None && !t.done) {
    throw InvariantViolation("transition with an outcome must be terminal");
  }
}

/// Serialize as one JSON Lines record (no trailing newline).
inline std::string to_jsonl(const Transition& t) { return nlohmann::json(t).dump(); }

inline Transition transition_from_jsonl(std::string_view line) {
  return nlohmann::json::parse(line).get<Transition>();
}

}  // namespace aim
