#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aim/core/transition.hpp"

namespace aim {

enum class Phase { Warmup, Gated, Free };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Warmup: return "warmup";
    case Phase::Gated: return "gated";
    case Phase::Free: return "free";
  }
  return "gated";
}

inline Phase phase_from_string(std::string_view s) {
  if (s == "warmup") return Phase::Warmup;
  if (s == "gated") return Phase::Gated;
  if (s == "free") return Phase::Free;
  throw InvalidArgument("unknown phase: " + std::string(s));
}

/// FNV-1a over the raw bytes of an observation.
inline std::uint64_t observation_hash(const Observation& s) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* p = reinterpret_cast<const unsigned char*>(s.data());
  for (std::size_t i = 0; i < s.size() * sizeof(Real); ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

/// One environment step of a training run.
struct StepRecord {
  long step = 0;
  long episode = 0;
  std::uint64_t env_seed = 0;
  Phase phase = Phase::Gated;
  Actor controller = Actor::Agent;
  Actor actor = Actor::Agent;
  Action a_r;
  std::optional<Action> a_h;
  Action a_executed;
  double q_value = std::nan("");
  double beta = std::nan("");
  double epsilon = 0.0;
  bool request_event = false;
  bool release_event = false;
  Outcome outcome = Outcome::None;
  long expert_steps_used = 0;
  std::uint64_t obs_hash = 0;
  std::optional<double> obstacle_distance;
  nlohmann::json extra;
};

inline nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline void to_json(nlohmann::json& j, const StepRecord& r) {
  j = nlohmann::json{{"step", r.step},
                     {"episode", r.episode},
                     {"env_seed", r.env_seed},
                     {"phase", to_string(r.phase)},
                     {"controller", to_string(r.controller)},
                     {"actor", to_string(r.actor)},
                     {"a_r", r.a_r},
                     {"a_h", r.a_h ? nlohmann::json(*r.a_h) : nlohmann::json(nullptr)},
                     {"a_executed", r.a_executed},
                     {"q_value", number_or_null(r.q_value)},
                     {"beta", number_or_null(r.beta)},
                     {"epsilon", r.epsilon},
                     {"request_event", r.request_event},
                     {"release_event", r.release_event},
                     {"outcome", to_string(r.outcome)},
                     {"expert_steps_used", r.expert_steps_used},
                     {"obs_hash", r.obs_hash}};
  if (r.obstacle_distance) j["obstacle_distance"] = *r.obstacle_distance;
  if (!r.extra.is_null()) j["extra"] = r.extra;
}

inline double double_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::nan("") : j.get<double>();
}

inline void from_json(const nlohmann::json& j, StepRecord& r) {
  r.step = j.at("step").get<long>();
  r.episode = j.at("episode").get<long>();
  r.env_seed = j.at("env_seed").get<std::uint64_t>();
  r.phase = phase_from_string(j.at("phase").get<std::string>());
  r.controller = actor_from_string(j.at("controller").get<std::string>());
  r.actor = actor_from_string(j.at("actor").get<std::string>());
  r.a_r = j.at("a_r").get<Action>();
  r.a_h = j.at("a_h").is_null() ? std::nullopt : std::optional<Action>(j.at("a_h").get<Action>());
  r.a_executed = j.at("a_executed").get<Action>();
  r.q_value = double_or_nan(j.at("q_value"));
  r.beta = double_or_nan(j.at("beta"));
  r.epsilon = j.at("epsilon").get<double>();
  r.request_event = j.at("request_event").get<bool>();
  r.release_event = j.at("release_event").get<bool>();
  r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
  r.expert_steps_used = j.at("expert_steps_used").get<long>();
  r.obs_hash = j.at("obs_hash").get<std::uint64_t>();
  if (j.contains("obstacle_distance")) r.obstacle_distance = j["obstacle_distance"].get<double>();
  r.extra = j.contains("extra") ? j["extra"] : nlohmann::json();
}

/// Append-only record of a run: a header line followed by one line per step.
struct RunLog {
  nlohmann::json header = nlohmann::json::object();
  std::vector<StepRecord> records;

  std::string method() const { return header.value("method", ""); }

  void write_jsonl(std::ostream& os) const {
    os << nlohmann::json{{"header", header}}.dump() << '\n';
    for (const auto& r : records) os << nlohmann::json(r).dump() << '\n';
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot write run log: " + path);
    write_jsonl(os);
  }

  static RunLog read_jsonl(std::istream& is) {
    RunLog log;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      if (first) {
        if (!j.contains("header")) throw InvalidArgument("run log must start with a header line");
        log.header = j["header"];
        first = false;
        continue;
      }
      log.records.push_back(j.get<StepRecord>());
    }
    if (first) throw InvalidArgument("empty run log");
    return log;
  }

  static RunLog load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot read run log: " + path);
    return read_jsonl(is);
  }
};

}  // namespace aim
