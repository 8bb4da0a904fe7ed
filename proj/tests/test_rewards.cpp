#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gamp/errors.hpp"
#include "gamp/rewards.hpp"

using namespace gamp;
using namespace gamp::rewards;

namespace {

sim::SimState upright_state(double vx, double cmd) {
  sim::BipedModel m;
  sim::SimState s;
  s.q = m.default_pose();
  s.qd[sim::kRootX] = vx;
  s.command = cmd;
  return s;
}

}  // namespace

TEST(TaskReward, PerfectStepEarnsPositiveWeights) {
  RewardWeights w;
  const sim::SimState s = upright_state(0.7, 0.7);
  const sim::Vec6 a = sim::Vec6::Constant(0.2);
  const TaskRewardTerms t = compute_task_reward(s, a, a, sim::Vec6::Zero(), w);
  EXPECT_DOUBLE_EQ(t.r_cmd, 1.0);
  EXPECT_DOUBLE_EQ(t.r_smooth, 1.0);
  EXPECT_DOUBLE_EQ(t.r_posture, 1.0);
  EXPECT_EQ(t.c_energy, 0.0);
  EXPECT_EQ(t.c_fall, 0.0);
  EXPECT_NEAR(t.total, w.w_v + w.w_s + w.w_p, 1e-15);
}

TEST(TaskReward, TrackingErrorOfOneSigma) {
  RewardWeights w;
  const sim::SimState s = upright_state(0.5 + w.sigma_v, 0.5);
  const TaskRewardTerms t = compute_task_reward(s, sim::Vec6::Zero(), sim::Vec6::Zero(), sim::Vec6::Zero(), w);
  EXPECT_NEAR(t.r_cmd, 0.36787944117144233, 1e-12);
}

TEST(TaskReward, FallIndicator) {
  RewardWeights w;
  sim::SimState s = upright_state(0.0, 0.0);
  s.q[sim::kRootZ] = w.fall_height - 0.01;
  const TaskRewardTerms low = compute_task_reward(s, sim::Vec6::Zero(), sim::Vec6::Zero(), sim::Vec6::Zero(), w);
  EXPECT_EQ(low.c_fall, 1.0);
  s.q[sim::kRootZ] = w.fall_height + 0.01;
  const TaskRewardTerms high = compute_task_reward(s, sim::Vec6::Zero(), sim::Vec6::Zero(), sim::Vec6::Zero(), w);
  EXPECT_EQ(high.c_fall, 0.0);
  EXPECT_NEAR(high.total - low.total, w.w_f, 1e-12);
}

TEST(TaskReward, TermsMatchFormulaOracle) {
  RewardWeights w;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    sim::SimState s;
    for (int i = 0; i < sim::kNumCoords; ++i) {
      s.q[i] = u(rng);
      s.qd[i] = 3.0 * u(rng);
    }
    s.q[sim::kRootZ] = 0.5 + 0.5 * u(rng);
    s.command = 2.0 * u(rng);
    sim::Vec6 a, p, tau;
    for (int j = 0; j < 6; ++j) {
      a[j] = 0.5 * u(rng);
      p[j] = 0.5 * u(rng);
      tau[j] = 80.0 * u(rng);
    }
    const TaskRewardTerms t = compute_task_reward(s, a, p, tau, w);

    const double dv = s.qd[0] - s.command;
    const double r_cmd = std::exp(-dv * dv / (w.sigma_v * w.sigma_v));
    double da = 0.0, power = 0.0;
    for (int j = 0; j < 6; ++j) {
      da += (a[j] - p[j]) * (a[j] - p[j]);
      power += std::abs(tau[j] * s.qd[3 + j]);
    }
    const double r_smooth = std::exp(-da);
    const double r_posture = std::exp(-s.q[2] * s.q[2] / (w.sigma_p * w.sigma_p));
    const double c_energy = w.energy_scale * power;
    const double c_fall = s.q[1] < w.fall_height ? 1.0 : 0.0;
    EXPECT_NEAR(t.r_cmd, r_cmd, 1e-14);
    EXPECT_NEAR(t.r_smooth, r_smooth, 1e-14);
    EXPECT_NEAR(t.r_posture, r_posture, 1e-14);
    EXPECT_NEAR(t.c_energy, c_energy, 1e-12);
    EXPECT_EQ(t.c_fall, c_fall);
    const double sum = w.w_v * t.r_cmd + w.w_s * t.r_smooth + w.w_p * t.r_posture -
                       w.w_e * t.c_energy - w.w_f * t.c_fall;
    EXPECT_NEAR(t.total, sum, 1e-12);

    EXPECT_GT(t.r_cmd, 0.0);
    EXPECT_LE(t.r_cmd, 1.0);
    EXPECT_GT(t.r_smooth, 0.0);
    EXPECT_LE(t.r_smooth, 1.0);
    EXPECT_GT(t.r_posture, 0.0);
    EXPECT_LE(t.r_posture, 1.0);
    EXPECT_GE(t.c_energy, 0.0);
  }
}

TEST(TaskReward, GridArgmaxAtPerfectTracking) {
  RewardWeights w;
  double best = -1e9;
  double best_v = 0.0, best_p = 0.0, best_a = 0.0;
  for (int iv = -10; iv <= 10; ++iv)
    for (int ip = -10; ip <= 10; ++ip)
      for (int ia = -10; ia <= 10; ++ia) {
        sim::SimState s = upright_state(0.4 + 0.05 * iv, 0.4);
        s.q[sim::kPitch] = 0.05 * ip;
        sim::Vec6 a = sim::Vec6::Constant(0.1);
        sim::Vec6 p = a;
        p[0] += 0.05 * ia;
        const double r = compute_task_reward(s, a, p, sim::Vec6::Zero(), w).total;
        if (r > best) {
          best = r;
          best_v = 0.05 * iv;
          best_p = 0.05 * ip;
          best_a = 0.05 * ia;
        }
      }
  EXPECT_EQ(best_v, 0.0);
  EXPECT_EQ(best_p, 0.0);
  EXPECT_EQ(best_a, 0.0);
}

TEST(TaskReward, StateOverloadUsesStoredActions) {
  RewardWeights w;
  sim::SimState s = upright_state(0.2, 0.3);
  s.prev_action = sim::Vec6::Constant(0.3);
  s.prev_prev_action = sim::Vec6::Constant(-0.1);
  const sim::Vec6 tau = sim::Vec6::Constant(5.0);
  const TaskRewardTerms a = compute_task_reward(s, tau, w);
  const TaskRewardTerms b = compute_task_reward(s, s.prev_action, s.prev_prev_action, tau, w);
  EXPECT_EQ(a.total, b.total);
  EXPECT_NEAR(a.r_smooth, std::exp(-6 * 0.16), 1e-14);
}

TEST(TaskReward, Validation) {
  RewardWeights w;
  EXPECT_NO_THROW(w.validate());
  w.w_e = -0.1;
  EXPECT_THROW(w.validate(), ConfigError);
  w = RewardWeights{};
  w.sigma_v = 0.0;
  EXPECT_THROW(w.validate(), ConfigError);
  w = RewardWeights{};
  w.sigma_p = std::nan("");
  EXPECT_THROW(w.validate(), ConfigError);
}
