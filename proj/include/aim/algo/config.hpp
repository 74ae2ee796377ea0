#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "aim/core/errors.hpp"

namespace aim {

/// Variants of the proxy-Q objective.
enum class QObjective { Aim, RewardLabel, NoTd };

/// Hyperparameters shared by AIM, its ablations and the baselines.
struct AimConfig {
  double gamma = 0.99;
  double lr = 1e-4;
  int batch_size = 1024;
  int grad_steps_per_iter = 1;
  double delta = 0.05;
  int warmup_trajectories = 2;
  long expert_budget = 2000;
  std::uint64_t seed = 0;

  std::vector<int> hidden{256, 256};
  double tau = 0.005;
  double warmup_epsilon = 0.04;
  int q_init_steps = 2000;
  int beta_sample = 4096;
  int box_samples = 8;
  /// Imitation updates per expert-executed step.
  int bc_steps_per_expert_step = 1;
  int bc_batch_size = 1024;
  long total_step_cap = 20000;
  /// Also update Q while the expert is in control.
  bool q_update_during_expert = true;
  /// Recompute epsilon at every episode start instead of freezing it after warm-up.
  bool recompute_epsilon = false;
  /// Clamp the bootstrapped max-next value to the range the labels allow
  /// ([-1, 1] for the intervention objective, +-1/(1-gamma) with reward labels).
  bool clip_bootstrap = true;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must be in (0, 1]");
    if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
    if (batch_size <= 0 || bc_batch_size <= 0) throw InvalidArgument("batch sizes must be positive");
    if (grad_steps_per_iter <= 0) throw InvalidArgument("grad_steps_per_iter must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must be in (0, 1)");
    if (warmup_trajectories < 0) throw InvalidArgument("warmup_trajectories must be >= 0");
    if (expert_budget < 0) throw InvalidArgument("expert_budget must be >= 0");
    if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgument("tau must be in (0, 1]");
    if (warmup_epsilon < 0.0) throw InvalidArgument("warmup_epsilon must be >= 0");
    if (q_init_steps < 0 || beta_sample <= 0 || box_samples < 0) {
      throw InvalidArgument("q_init_steps, beta_sample and box_samples must be non-negative");
    }
    if (bc_steps_per_expert_step < 0) throw InvalidArgument("bc_steps_per_expert_step must be >= 0");
    if (total_step_cap <= 0) throw InvalidArgument("total_step_cap must be positive");
    if (hidden.empty()) throw InvalidArgument("at least one hidden layer is required");
  }

  /// Defaults from the published tables for a given action-space kind.
  static AimConfig for_space(bool discrete) {
    AimConfig c;
    c.batch_size = discrete ? 200 : 1024;
    c.bc_batch_size = c.batch_size;
    c.grad_steps_per_iter = discrete ? 32 : 1;
    c.bc_steps_per_expert_step = c.grad_steps_per_iter;
    return c;
  }
};

}  // namespace aim
