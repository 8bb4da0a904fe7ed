#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gamp/amp.hpp"
#include "gamp/errors.hpp"
#include "gamp/ppo.hpp"

using namespace gamp;
using namespace gamp::ppo;
using Eigen::VectorXd;

namespace {

// A_t as an explicit sum of discounted TD errors, cut at the first done.
VectorXd gae_oracle(const VectorXd& r, const VectorXd& v, const std::vector<bool>& d, double boot,
                    double gamma, double lambda) {
  const int n = static_cast<int>(r.size());
  VectorXd delta(n);
  for (int t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : boot;
    delta[t] = r[t] + gamma * next * (d[t] ? 0.0 : 1.0) - v[t];
  }
  VectorXd adv(n);
  for (int t = 0; t < n; ++t) {
    double sum = 0.0, w = 1.0;
    for (int k = t; k < n; ++k) {
      sum += w * delta[k];
      if (d[k]) break;
      w *= gamma * lambda;
    }
    adv[t] = sum;
  }
  return adv;
}

PpoConfig small_config() {
  PpoConfig c;
  c.horizon = 16;
  c.num_envs = 4;
  c.hidden = {32, 32};
  return c;
}

struct Fixture {
  PpoConfig cfg = small_config();
  RolloutSettings settings;
  Agent agent;
  amp::DiscriminatorPair disc;

  explicit Fixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    agent = Agent::create(cfg, rng);
    amp::DiscriminatorConfig dc;
    dc.hidden = {16};
    disc = amp::DiscriminatorPair::create(dc, rng);
    settings.ppo = cfg;
  }
};

}  // namespace

TEST(Gae, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0), g(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 64);
  double worst = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const int n = len(rng);
    VectorXd r(n), v(n);
    std::vector<bool> d(n);
    for (int t = 0; t < n; ++t) {
      r[t] = u(rng);
      v[t] = u(rng);
      d[t] = g(rng) < 0.1;
    }
    const double boot = u(rng), gamma = g(rng), lambda = g(rng);
    const GaeResult res = compute_gae(r, v, d, boot, gamma, lambda);
    const VectorXd want = gae_oracle(r, v, d, boot, gamma, lambda);
    worst = std::max(worst, (res.advantages - want).cwiseAbs().maxCoeff());
    EXPECT_LT((res.returns - (want + v)).cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Gae, HandExamples) {
  const GaeResult one = compute_gae(VectorXd::Ones(1), VectorXd::Zero(1), {false}, 0.5, 0.99, 0.95);
  EXPECT_NEAR(one.advantages[0], 1.495, 1e-12);

  const GaeResult zero = compute_gae(VectorXd::Zero(10), VectorXd::Zero(10),
                                     std::vector<bool>(10, false), 0.0, 0.99, 0.95);
  EXPECT_EQ(zero.advantages, VectorXd::Zero(10));

  VectorXd r(4), v(4);
  r << 1.0, -2.0, 0.5, 3.0;
  v << 0.3, 0.1, -0.4, 2.0;
  for (double lambda : {0.0, 0.5, 1.0}) {
    const GaeResult g0 = compute_gae(r, v, std::vector<bool>(4, false), 7.0, 0.0, lambda);
    EXPECT_LT((g0.advantages - (r - v)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Gae, LengthMismatch) {
  EXPECT_THROW(compute_gae(VectorXd::Zero(3), VectorXd::Zero(2), std::vector<bool>(3), 0, 0.9, 0.9),
               DimensionError);
  EXPECT_THROW(compute_gae(VectorXd::Zero(3), VectorXd::Zero(3), std::vector<bool>(2), 0, 0.9, 0.9),
               DimensionError);
}

TEST(Gaussian, LogProbOfMeanAndEntropy) {
  VectorXd log_std(6);
  log_std << -0.5, 0.0, 0.2, -1.0, 0.7, -0.22;
  const VectorXd mean = VectorXd::LinSpaced(6, -1.0, 1.0);
  double want = 0.0;
  for (int j = 0; j < 6; ++j) want -= std::log(std::exp(log_std[j]) * std::sqrt(2.0 * M_PI));
  EXPECT_NEAR(gaussian_log_prob(mean, mean, log_std), want, 1e-12);

  const VectorXd s08 = VectorXd::Constant(6, std::log(0.8));
  EXPECT_NEAR(gaussian_entropy(s08), 6.0 * 0.5 * std::log(2.0 * M_PI * M_E * 0.64), 1e-12);
}

TEST(Gaussian, LogProbMatchesProductOfDensities) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (int k = 0; k < 100; ++k) {
    VectorXd x(6), m(6), ls(6);
    for (int j = 0; j < 6; ++j) {
      x[j] = n01(rng);
      m[j] = n01(rng);
      ls[j] = 0.5 * n01(rng);
    }
    double p = 1.0;
    for (int j = 0; j < 6; ++j) {
      const double s = std::exp(ls[j]);
      p *= std::exp(-0.5 * std::pow((x[j] - m[j]) / s, 2)) / (s * std::sqrt(2.0 * M_PI));
    }
    EXPECT_NEAR(gaussian_log_prob(x, m, ls), std::log(p), 1e-10);
  }
}

TEST(PolicyAct, DeterministicZeroAndStochastic) {
  PpoConfig cfg = small_config();
  std::mt19937_64 rng(1);
  Agent a = Agent::create(cfg, rng);
  EXPECT_LT((a.policy.log_std.array() - std::log(0.8)).abs().maxCoeff(), 1e-15);
  const VectorXd obs = VectorXd::LinSpaced(sim::kObsDim, -1.0, 1.0);

  const ActResult d1 = policy_act(a.policy, a.value, obs, nullptr, true);
  const ActResult d2 = policy_act(a.policy, a.value, obs, nullptr, true);
  EXPECT_EQ(d1.action, d2.action);
  EXPECT_NEAR(d1.log_prob, gaussian_log_prob(d1.raw_action, d1.raw_action, a.policy.log_std), 0);

  for (auto& w : a.policy.mean.weights) w.setZero();
  for (auto& b : a.policy.mean.biases) b.setZero();
  EXPECT_EQ(policy_act(a.policy, a.value, obs, nullptr, true).action, sim::Vec6::Zero());

  a.policy.log_std.setConstant(std::log(3.0));
  std::mt19937_64 s(9);
  bool saw_clamp = false;
  for (int k = 0; k < 200; ++k) {
    const ActResult r = policy_act(a.policy, a.value, obs, &s, false);
    EXPECT_LE(r.action.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_EQ(r.action, r.raw_action.cwiseMax(-1.0).cwiseMin(1.0));
    EXPECT_NEAR(r.log_prob, gaussian_log_prob(r.raw_action, VectorXd::Zero(6), a.policy.log_std), 1e-12);
    if (r.raw_action.cwiseAbs().maxCoeff() > 1.0) saw_clamp = true;
  }
  EXPECT_TRUE(saw_clamp);

  EXPECT_THROW(policy_act(a.policy, a.value, VectorXd::Zero(5), nullptr, true), DimensionError);
  EXPECT_THROW(policy_act(a.policy, a.value, obs, nullptr, false), ConfigError);
  a.policy.mean.biases.back()[0] = std::nan("");
  EXPECT_THROW(policy_act(a.policy, a.value, obs, nullptr, true), NumericError);
}

TEST(Surrogate, ClipSemantics) {
  const SurrogateTerm up = clipped_surrogate(std::log(1.5), 2.0, 0.2);
  EXPECT_NEAR(up.objective, 1.2 * 2.0, 1e-12);
  EXPECT_EQ(up.d_log_prob, 0.0);
  EXPECT_TRUE(up.clipped);

  const SurrogateTerm neg = clipped_surrogate(std::log(1.5), -2.0, 0.2);
  EXPECT_NEAR(neg.objective, -3.0, 1e-12);
  EXPECT_NEAR(neg.d_log_prob, -3.0, 1e-12);

  const SurrogateTerm low = clipped_surrogate(std::log(0.5), -1.0, 0.2);
  EXPECT_NEAR(low.objective, -0.8, 1e-12);
  EXPECT_EQ(low.d_log_prob, 0.0);

  const SurrogateTerm same = clipped_surrogate(0.0, 0.7, 0.2);
  EXPECT_EQ(same.objective, 0.7);
  EXPECT_FALSE(same.clipped);
}

TEST(Advantages, Normalization) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(3.0, 5.0);
  VectorXd a(4096);
  for (auto& x : a) x = n(rng);
  normalize_advantages(a);
  EXPECT_LT(std::abs(a.mean()), 1e-9);
  EXPECT_NEAR(a.squaredNorm() / a.size(), 1.0, 1e-6);
}

TEST(Rollout, ShapeModesAndProneStart) {
  Fixture f(0);
  f.settings.init = InitConfig{0.0, 1.0, 0.0, 500};
  EnvPool pool(sim::BipedModel{}, f.cfg.num_envs, 0);
  pool.reset_all(f.settings.commands, f.settings.init);
  RolloutBuffer buf;
  collect_rollout(pool, f.agent, f.disc, f.settings, buf);

  const int m = f.cfg.horizon * f.cfg.num_envs;
  EXPECT_EQ(buf.size(), m);
  EXPECT_EQ(buf.obs.cols(), m);
  EXPECT_EQ(buf.actions.cols(), m);
  EXPECT_EQ(buf.log_probs.size(), m);
  EXPECT_EQ(buf.rewards.size(), m);
  EXPECT_EQ(static_cast<int>(buf.modes.size()), m);
  EXPECT_EQ(buf.bootstrap_values.size(), f.cfg.num_envs);
  EXPECT_TRUE(buf.obs.allFinite());
  EXPECT_TRUE(buf.rewards.allFinite());

  for (int e = 0; e < f.cfg.num_envs; ++e)
    EXPECT_EQ(buf.modes[RolloutBuffer::index(0, e, f.cfg.num_envs)], amp::Mode::kRec);
  for (int i = 0; i < m; ++i) {
    EXPECT_EQ(buf.modes[i], amp::gate(buf.g_z[i], f.settings.gate));
    if (buf.valid[i] && !buf.dones[i]) {
      EXPECT_NEAR(buf.rewards[i],
                  amp::total_reward(buf.task_rewards[i], buf.style_rewards[i], 0.5), 1e-12);
    }
  }
}

TEST(Rollout, TimeoutFoldsBootstrapIntoReward) {
  Fixture f(2);
  f.settings.init.episode_length = 5;
  EnvPool pool(sim::BipedModel{}, f.cfg.num_envs, 2);
  pool.reset_all(f.settings.commands, f.settings.init);
  RolloutBuffer buf;
  collect_rollout(pool, f.agent, f.disc, f.settings, buf);
  int done = 0;
  for (int i = 0; i < buf.size(); ++i) {
    const int t = i / f.cfg.num_envs;
    EXPECT_EQ(static_cast<bool>(buf.dones[i]), (t + 1) % 5 == 0);
    if (buf.dones[i]) {
      ++done;
      EXPECT_NE(buf.rewards[i], amp::total_reward(buf.task_rewards[i], buf.style_rewards[i], 0.5));
    }
  }
  EXPECT_EQ(done, 3 * f.cfg.num_envs);
}

TEST(Rollout, SingleThreadDeterminism) {
  auto run = [] {
    Fixture f(5);
    EnvPool pool(sim::BipedModel{}, f.cfg.num_envs, 5);
    pool.reset_all(f.settings.commands, f.settings.init, true);
    RolloutBuffer buf;
    collect_rollout(pool, f.agent, f.disc, f.settings, buf);
    std::mt19937_64 rng(5);
    const PpoStats st = ppo_update(f.agent, buf, f.cfg, rng);
    return std::make_tuple(buf.obs, buf.actions, buf.rewards, st.policy_loss, st.value_loss,
                           st.approx_kl, f.agent.policy.mean.weights[0]);
  };
  EXPECT_EQ(run(), run());
}

TEST(Rollout, ThreadedMatchesSingleThread) {
  auto run = [](int threads) {
    Fixture f(8);
    f.settings.threads = threads;
    EnvPool pool(sim::BipedModel{}, f.cfg.num_envs, 8);
    pool.reset_all(f.settings.commands, f.settings.init);
    RolloutBuffer buf;
    collect_rollout(pool, f.agent, f.disc, f.settings, buf);
    return buf.rewards;
  };
  EXPECT_EQ(run(1), run(3));
}

TEST(Update, FirstMinibatchHasUnitRatio) {
  Fixture f(4);
  f.cfg.epochs = 1;
  f.cfg.minibatches = 1;
  EnvPool pool(sim::BipedModel{}, f.cfg.num_envs, 4);
  pool.reset_all(f.settings.commands, f.settings.init);
  RolloutBuffer buf;
  collect_rollout(pool, f.agent, f.disc, f.settings, buf);
  std::mt19937_64 rng(4);
  const PpoStats st = ppo_update(f.agent, buf, f.cfg, rng);
  EXPECT_NEAR(st.policy_loss, 0.0, 1e-12);
  EXPECT_EQ(st.clip_frac, 0.0);
  EXPECT_NEAR(st.approx_kl, 0.0, 1e-12);
  EXPECT_NEAR(st.entropy, gaussian_entropy(VectorXd::Constant(6, std::log(0.8))), 1e-12);
}

TEST(Update, StatsBoundsAndLogStdClamp) {
  Fixture f(6);
  f.cfg.learning_rate = 3e-2;
  f.cfg.entropy_coef = 5.0;
  f.cfg.log_std_max = -0.1;
  f.cfg.init_log_std = -0.2;
  EnvPool pool(sim::BipedModel{}, f.cfg.num_envs, 6);
  pool.reset_all(f.settings.commands, f.settings.init);
  RolloutBuffer buf;
  std::mt19937_64 rng(6);
  for (int it = 0; it < 3; ++it) {
    collect_rollout(pool, f.agent, f.disc, f.settings, buf);
    const PpoStats st = ppo_update(f.agent, buf, f.cfg, rng);
    EXPECT_GE(st.clip_frac, 0.0);
    EXPECT_LE(st.clip_frac, 1.0);
    EXPECT_GT(st.approx_kl, -1e-3);
    EXPECT_TRUE(std::isfinite(st.grad_norm));
    EXPECT_LE(f.agent.policy.log_std.maxCoeff(), f.cfg.log_std_max);
    EXPECT_GE(f.agent.policy.log_std.minCoeff(), f.cfg.log_std_min);
  }
}

TEST(Update, NonFiniteLossNamesMinibatch) {
  Fixture f(9);
  EnvPool pool(sim::BipedModel{}, f.cfg.num_envs, 9);
  pool.reset_all(f.settings.commands, f.settings.init);
  RolloutBuffer buf;
  collect_rollout(pool, f.agent, f.disc, f.settings, buf);
  buf.rewards[3] = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(9);
  try {
    ppo_update(f.agent, buf, f.cfg, rng);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("minibatch"), std::string::npos);
  }
}

TEST(Config, Validation) {
  PpoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PpoConfig{};
  c.clip_ratio = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PpoConfig{};
  c.lambda_gae = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  InitConfig i{0.0, 0.0, 0.0, 500};
  EXPECT_THROW(i.validate(), ConfigError);
  CommandConfig cc;
  cc.fast_probability = 2.0;
  EXPECT_THROW(cc.validate(), ConfigError);
}

TEST(EnvPool, CommandMixture) {
  EnvPool pool(sim::BipedModel{}, 1, 0);
  CommandConfig cmd;
  InitConfig init;
  int fast_only = 0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    pool.reset_env(0, cmd, init);
    const double c = pool.env(0).state().command;
    EXPECT_GE(c, cmd.fast_min);
    EXPECT_LE(c, cmd.fast_max);
    if (c < cmd.normal_min || c > cmd.normal_max) ++fast_only;
  }
  // Fast draws land outside the normal range with probability 3/4.5.
  const double want = 0.3 * (3.0 / 4.5);
  EXPECT_NEAR(static_cast<double>(fast_only) / n, want, 4.0 * std::sqrt(want * (1 - want) / n));
}
