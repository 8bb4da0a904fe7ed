#include "gamp/rewards.hpp"

#include <cmath>

#include "gamp/errors.hpp"

namespace gamp::rewards {

void RewardWeights::validate() const {
  for (double w : {w_v, w_s, w_p, w_e, w_f, energy_scale, fall_height})
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ConfigError("reward weights must be finite and non-negative");
  if (!(sigma_v > 0.0) || !(sigma_p > 0.0))
    throw ConfigError("reward widths sigma_v and sigma_p must be positive");
}

TaskRewardTerms compute_task_reward(const sim::SimState& state, const sim::Vec6& torques,
                                    const RewardWeights& weights) {
  return compute_task_reward(state, state.prev_action, state.prev_prev_action, torques, weights);
}

TaskRewardTerms compute_task_reward(const sim::SimState& state, const sim::Vec6& action,
                                    const sim::Vec6& prev_action, const sim::Vec6& torques,
                                    const RewardWeights& w) {
  TaskRewardTerms t;
  const double v_err = state.qd[sim::kRootX] - state.command;
  t.r_cmd = std::exp(-v_err * v_err / (w.sigma_v * w.sigma_v));
  t.r_smooth = std::exp(-(action - prev_action).squaredNorm());
  const double pitch = state.q[sim::kPitch];
  t.r_posture = std::exp(-pitch * pitch / (w.sigma_p * w.sigma_p));
  t.c_energy = w.energy_scale * torques.cwiseProduct(state.qd.tail<sim::kNumJoints>()).cwiseAbs().sum();
  t.c_fall = state.q[sim::kRootZ] < w.fall_height ? 1.0 : 0.0;
  t.total = w.w_v * t.r_cmd + w.w_s * t.r_smooth + w.w_p * t.r_posture - w.w_e * t.c_energy -
            w.w_f * t.c_fall;
  return t;
}

}  // namespace gamp::rewards
