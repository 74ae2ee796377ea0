#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>

#include <spdlog/spdlog.h>

#include "aim/harness/config_file.hpp"
#include "aim/harness/experiment.hpp"
#include "aim/nn/checkpoint.hpp"
#include "aim/session/channel.hpp"
#include "aim/session/protocol.hpp"

namespace aim::session {

struct SessionConfig {
  harness::ExperimentConfig experiment;
  std::uint64_t seed = 1;
  /// StateFrames per second while the agent drives; 0 sends a frame after every step.
  /// Frames that ask for an expert action are never dropped.
  double frames_per_second = 10.0;
  /// Start training immediately instead of waiting for a SessionControl start.
  bool autostart = true;
  long metrics_every = 100;
  /// RunLog and policy checkpoint are written here when the run ends; empty disables.
  std::string out_dir;
};

/// What the I/O side hands to the training loop.
struct Inbound {
  enum class Type { Message, Connected, Disconnected, Shutdown } type = Type::Message;
  SessionMessage message;
};

enum class SessionState { Waiting, Running, Paused, Finished };

inline std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::Waiting: return "waiting";
    case SessionState::Running: return "running";
    case SessionState::Paused: return "paused";
    case SessionState::Finished: return "finished";
  }
  return "finished";
}

/// Outgoing queue that stamps strictly increasing sequence numbers in queue order.
class Outbox {
 public:
  void send(SessionMessage m) {
    std::lock_guard lock(mu_);
    m.seq = ++seq_;
    channel_.push(std::move(m));
  }
  Channel<SessionMessage>& channel() { return channel_; }

 private:
  std::mutex mu_;
  long seq_ = 0;
  Channel<SessionMessage> channel_;
};

/// One training run driven by a remote expert. run() executes on the session thread; the
/// I/O side only pushes to inbox() and drains outbox().
class TrainingSession {
 public:
  explicit TrainingSession(SessionConfig cfg) : cfg_(std::move(cfg)) {}

  Channel<Inbound>& inbox() { return inbox_; }
  Outbox& outbox() { return outbox_; }

  /// Status snapshot for health checks; safe from any thread.
  nlohmann::json status() const {
    return {{"state", to_string(state_.load())},
            {"step", step_.load()},
            {"controller", to_string(controller_.load())},
            {"expert_steps", expert_steps_.load()},
            {"env", worlds::to_string(cfg_.experiment.env)},
            {"method", cfg_.experiment.method}};
  }

  RunResult run() {
    if (!cfg_.autostart && !wait_for_start()) {
      finish_without_run();
      return {};
    }
    AimConfig aim = cfg_.experiment.aim;
    aim.seed = cfg_.seed;
    aim.validate();
    env_ = worlds::make_environment(cfg_.experiment.env, cfg_.experiment.env_params);
    learner_ = harness::make_learner(cfg_.experiment.method, *env_, aim, cfg_.experiment);
    budget_ = aim.expert_budget;
    state_ = SessionState::Running;
    outbox_.send(control("started", {{"method", cfg_.experiment.method},
                                     {"env", worlds::to_string(cfg_.experiment.env)},
                                     {"seed", cfg_.seed},
                                     {"expert_budget", budget_},
                                     {"action_space", env_->action_space().is_discrete() ? "discrete" : "box"}}));

    // Connection events queued before the start are settled before the first frame.
    while (auto in = inbox_.try_pop()) {
      if (!handle_control(*in)) break;
    }

    RemoteExpert expert(*this);
    Observer observer(*this);
    RunOptions opts;
    opts.expert = &expert;
    opts.observer = &observer;
    opts.stop_requested = [this] { return stop_; };
    RunResult result = run_interactive(*learner_, *env_, aim, std::move(opts));

    state_ = SessionState::Finished;
    send_metrics(result.total_steps);
    nlohmann::json done{{"stopped", result.stopped}, {"total_steps", result.total_steps},
                        {"discarded_actions", discarded_}};
    if (!cfg_.out_dir.empty()) {
      const auto paths = flush(result);
      done["runlog"] = paths.first;
      done["checkpoint"] = paths.second;
    }
    outbox_.send(control("finished", done));
    outbox_.channel().close();
    return result;
  }

  long discarded_actions() const { return discarded_; }

 private:
  class RemoteExpert final : public ExpertSource {
   public:
    explicit RemoteExpert(TrainingSession& s) : s_(s) {}
    std::optional<Action> query(const worlds::Environment& env) override { return s_.await_action(env); }

   private:
    TrainingSession& s_;
  };

  class Observer final : public RunObserver {
   public:
    explicit Observer(TrainingSession& s) : s_(s) {}
    void on_help_request(const worlds::Environment&, const GateState& gate, std::string_view reason) override {
      s_.pending_request_ = {{"step", s_.next_step_}, {"reason", reason}, {"controller", to_string(gate.controller)}};
      if (auto b = finite_or_none(gate.beta)) s_.pending_request_["beta"] = *b;
      s_.outbox_.send({MessageKind::HelpRequest, 0, s_.pending_request_});
    }
    void on_release(const worlds::Environment&, const GateState& gate, std::string_view reason) override {
      s_.pending_request_ = nullptr;
      s_.controller_ = gate.controller;
      s_.outbox_.send({MessageKind::Release, 0, {{"step", s_.next_step_}, {"reason", reason}}});
    }
    void on_step(const worlds::Environment& env, const GateState& gate, const StepRecord& r) override {
      s_.after_step(env, gate, r);
    }

   private:
    TrainingSession& s_;
  };

  bool wait_for_start() {
    while (auto in = inbox_.pop()) {
      if (in->type == Inbound::Type::Shutdown) return false;
      if (in->type == Inbound::Type::Connected) {
        connected_ = true;
        outbox_.send(control("hello", {{"state", "waiting"}}));
        continue;
      }
      if (in->type == Inbound::Type::Disconnected) {
        connected_ = false;
        continue;
      }
      const auto& m = in->message;
      if (m.kind != MessageKind::SessionControl) {
        reject("only SessionControl is accepted before the run starts");
        continue;
      }
      const auto cmd = m.payload.value("command", "");
      if (cmd == "start") return true;
      if (cmd == "stop") return false;
      if (cmd == "config") {
        apply_remote_config(m.payload);
      } else {
        reject("unknown command before start: " + cmd);
      }
    }
    return false;
  }

  void apply_remote_config(const nlohmann::json& payload) {
    if (!payload.contains("values") || !payload["values"].is_object()) {
      reject("config needs a values object");
      return;
    }
    auto candidate = cfg_.experiment;
    auto seed = cfg_.seed;
    try {
      for (const auto& [k, v] : payload["values"].items()) {
        const std::string value = v.is_string() ? v.get<std::string>() : v.dump();
        if (k == "method") {
          if (!harness::is_known_method(value) || value == "bc") throw InvalidArgument("not an interactive method");
          candidate.method = value;
        } else if (k == "env") {
          candidate.env = worlds::env_kind_from_string(value);
        } else if (k == "seed") {
          seed = std::stoull(value);
        } else {
          harness::apply_config_value(candidate, k, value);
        }
      }
      candidate.aim.validate();
    } catch (const std::exception& e) {
      reject(std::string("config rejected: ") + e.what());
      return;
    }
    cfg_.experiment = candidate;
    cfg_.seed = seed;
    outbox_.send(control("config_ok"));
  }

  void finish_without_run() {
    state_ = SessionState::Finished;
    outbox_.send(control("finished", {{"stopped", true}, {"total_steps", 0}}));
    outbox_.channel().close();
  }

  void reject(const std::string& why) {
    spdlog::warn("session: {}", why);
    outbox_.send(error_frame(why));
  }

  /// Handles one non-action inbound item. Returns false when the run must stop.
  bool handle_control(const Inbound& in) {
    switch (in.type) {
      case Inbound::Type::Shutdown:
        stop_ = true;
        return false;
      case Inbound::Type::Connected:
        connected_ = true;
        resync();
        return true;
      case Inbound::Type::Disconnected:
        connected_ = false;
        return true;
      case Inbound::Type::Message: break;
    }
    const auto& m = in.message;
    if (m.kind == MessageKind::HumanAction) {
      ++discarded_;
      spdlog::info("session: discarded a human action for step {} (agent in control at step {})",
                   m.payload.value("step", -1L), next_step_);
      return true;
    }
    if (m.kind != MessageKind::SessionControl) {
      reject(fmt::format("unexpected {} from the client", to_string(m.kind)));
      return true;
    }
    const auto cmd = m.payload.value("command", "");
    if (cmd == "stop") {
      stop_ = true;
      return false;
    }
    if (cmd == "pause") {
      paused_by_client_ = true;
    } else if (cmd == "resume" || cmd == "start") {
      paused_by_client_ = false;
    } else if (cmd == "config") {
      reject("config is only accepted before the run starts");
    } else {
      reject("unknown command: " + cmd);
    }
    return true;
  }

  void resync() {
    outbox_.send(control("hello", {{"state", to_string(state_.load())}, {"step", next_step_}}));
    if (!pending_request_.is_null()) outbox_.send({MessageKind::HelpRequest, 0, pending_request_});
    if (env_ && last_frame_) outbox_.send(*last_frame_);
  }

  void set_paused(bool paused, std::string_view reason) {
    if (paused == (state_ == SessionState::Paused)) return;
    state_ = paused ? SessionState::Paused : SessionState::Running;
    outbox_.send(control(paused ? "pause" : "resume", {{"reason", reason}, {"step", next_step_}}));
  }

  std::optional<Action> await_action(const worlds::Environment& env) {
    FrameContext c;
    c.step = next_step_;
    c.episode = episode_;
    c.env_seed = env_seed_;
    c.expert_budget = budget_;
    c.awaiting_expert = true;
    // The run's episode counters are only visible through records; a reset happens right
    // before the first query of an episode, so track it from the step index.
    if (episode_boundary_) {
      ++c.episode;
      c.env_seed = train_seed(cfg_.seed, c.episode);
    }
    GateState gate;
    gate.beta = last_beta_;
    gate.controller = controller_;
    gate.expert_steps = expert_steps_;
    send_frame(encode_frame(env, gate, c), true);
    while (!stop_) {
      if (!connected_) set_paused(true, "no_client");
      auto in = inbox_.pop();
      if (!in) {
        stop_ = true;
        break;
      }
      if (in->type != Inbound::Type::Message || in->message.kind != MessageKind::HumanAction) {
        if (!handle_control(*in)) break;
        if (connected_ && state_ == SessionState::Paused) set_paused(false, "client");
        continue;
      }
      try {
        auto h = parse_human_action(in->message, env.action_space());
        if (h.step != next_step_) {
          ++discarded_;
          spdlog::info("session: discarded a late human action for step {} (waiting on step {})", h.step,
                       next_step_);
          continue;
        }
        set_paused(false, "client");
        return h.action;
      } catch (const ProtocolError& e) {
        reject(e.what());
      }
    }
    return std::nullopt;
  }

  void after_step(const worlds::Environment& env, const GateState& gate, const StepRecord& r) {
    next_step_ = r.step + 1;
    episode_ = r.episode;
    env_seed_ = r.env_seed;
    episode_boundary_ = r.outcome != Outcome::None;
    last_beta_ = gate.beta;
    step_ = next_step_;
    controller_ = gate.controller;
    expert_steps_ = gate.expert_steps;

    FrameContext c;
    c.step = next_step_;
    c.episode = r.episode;
    c.env_seed = r.env_seed;
    c.expert_budget = budget_;
    c.q_value = r.q_value;
    c.last_action = r.a_executed;
    send_frame(encode_frame(env, gate, c), gate.controller == Actor::Expert);
    if (cfg_.metrics_every > 0 && next_step_ % cfg_.metrics_every == 0) send_metrics(next_step_);

    while (auto in = inbox_.try_pop()) {
      if (in->type == Inbound::Type::Message && in->message.kind == MessageKind::HumanAction) {
        handle_control(*in);  // discards
      } else if (!handle_control(*in)) {
        return;
      }
    }
    while (paused_by_client_ && !stop_) {
      set_paused(true, "client");
      auto in = inbox_.pop();
      if (!in) {
        stop_ = true;
        break;
      }
      if (!handle_control(*in)) break;
    }
    if (!stop_ && state_ == SessionState::Paused) set_paused(false, "client");
  }

  void send_frame(SessionMessage frame, bool always) {
    using clock = std::chrono::steady_clock;
    const auto now = clock::now();
    last_frame_ = frame;
    if (!always && cfg_.frames_per_second > 0) {
      const auto period = std::chrono::duration<double>(1.0 / cfg_.frames_per_second);
      if (now - last_frame_time_ < period) return;
    }
    last_frame_time_ = now;
    outbox_.send(std::move(frame));
  }

  void send_metrics(long total) {
    const long expert = expert_steps_.load();
    outbox_.send({MessageKind::Metrics, 0,
                  {{"expert_data_usage", expert},
                   {"total_data_usage", total},
                   {"overall_intervention_rate", total > 0 ? double(expert) / double(total) : 0.0},
                   {"discarded_actions", discarded_}}});
  }

  std::pair<std::string, std::string> flush(const RunResult& result) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);
    const auto stem = fmt::format("session_{}_{}_{}", cfg_.experiment.method, worlds::to_string(cfg_.experiment.env),
                                  cfg_.seed);
    const auto log_path = (fs::path(cfg_.out_dir) / ("runlog_" + stem + ".jsonl")).string();
    const auto ckpt_path = (fs::path(cfg_.out_dir) / ("policy_" + stem + ".json")).string();
    result.log.save(log_path);
    nn::save(learner_->policy().net(), ckpt_path);
    return {log_path, ckpt_path};
  }

  SessionConfig cfg_;
  Channel<Inbound> inbox_;
  Outbox outbox_;
  std::unique_ptr<worlds::Environment> env_;
  std::unique_ptr<Learner> learner_;
  long budget_ = 0;

  // Training-thread state.
  bool stop_ = false;
  bool connected_ = false;
  bool paused_by_client_ = false;
  long next_step_ = 0;
  long episode_ = -1;
  std::uint64_t env_seed_ = 0;
  bool episode_boundary_ = true;
  double last_beta_ = std::numeric_limits<double>::infinity();
  long discarded_ = 0;
  nlohmann::json pending_request_;
  std::optional<SessionMessage> last_frame_;
  std::chrono::steady_clock::time_point last_frame_time_{};

  // Published for status().
  std::atomic<SessionState> state_{SessionState::Waiting};
  std::atomic<long> step_{0};
  std::atomic<Actor> controller_{Actor::Agent};
  std::atomic<long> expert_steps_{0};
};

}  // namespace aim::session
