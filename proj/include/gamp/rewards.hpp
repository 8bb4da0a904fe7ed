#pragma once

#include "gamp/sim.hpp"

namespace gamp::rewards {

struct RewardWeights {
  double w_v = 1.0;   // velocity tracking
  double w_s = 0.3;   // action smoothness
  double w_p = 0.3;   // upright posture
  double w_e = 0.02;  // energy cost
  double w_f = 1.0;   // fall cost
  double sigma_v = 0.25;       // m/s
  double sigma_p = 0.4;        // rad
  double energy_scale = 0.01;  // multiplies sum |tau * qd|
  double fall_height = 0.35 * 0.764;  // m; below this root height counts as fallen

  // Throws ConfigError when a weight is negative or a width non-positive.
  void validate() const;
};

struct TaskRewardTerms {
  double r_cmd = 0.0;
  double r_smooth = 0.0;
  double r_posture = 0.0;
  double c_energy = 0.0;
  double c_fall = 0.0;
  double total = 0.0;
};

// Composite task reward for the state reached after applying `action`.
// state.prev_action must already hold this step's action and
// state.prev_prev_action the one before it.
TaskRewardTerms compute_task_reward(const sim::SimState& state, const sim::Vec6& torques,
                                    const RewardWeights& weights);

// Same with the action pair given explicitly.
TaskRewardTerms compute_task_reward(const sim::SimState& state, const sim::Vec6& action,
                                    const sim::Vec6& prev_action, const sim::Vec6& torques,
                                    const RewardWeights& weights);

}  // namespace gamp::rewards
