#include "gamp/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "gamp/clips.hpp"
#include "gamp/errors.hpp"

namespace gamp::ppo {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kLog2Pi = 1.8378770664093453;

void check_finite(const MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + " produced a non-finite value");
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// handled by exactly one worker, so per-index state stays deterministic.
template <typename Fn>
void parallel_for(int n, int threads, Fn fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      for (int i = w; i < n; i += threads) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace

void PpoConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ppo gamma must lie in [0, 1]");
  if (!(lambda_gae >= 0.0 && lambda_gae <= 1.0))
    throw ConfigError("ppo lambda_gae must lie in [0, 1]");
  if (!(clip_ratio > 0.0)) throw ConfigError("ppo clip_ratio must be positive");
  if (epochs < 1 || minibatches < 1) throw ConfigError("ppo epochs and minibatches must be >= 1");
  if (horizon < 1 || num_envs < 1) throw ConfigError("ppo horizon and num_envs must be >= 1");
  if (horizon * num_envs < minibatches)
    throw ConfigError("ppo batch is smaller than the number of minibatches");
  if (!(learning_rate > 0.0)) throw ConfigError("ppo learning_rate must be positive");
  if (!(max_grad_norm > 0.0)) throw ConfigError("ppo max_grad_norm must be positive");
  if (value_coef < 0.0 || entropy_coef < 0.0)
    throw ConfigError("ppo loss coefficients must be non-negative");
  if (!(log_std_min < log_std_max)) throw ConfigError("ppo log_std bounds are inverted");
  if (init_log_std < log_std_min || init_log_std > log_std_max)
    throw ConfigError("ppo init_log_std outside its bounds");
  for (int h : hidden)
    if (h <= 0) throw ConfigError("ppo hidden widths must be positive");
}

void PolicyHead::clamp_log_std(double lo, double hi) {
  log_std = log_std.cwiseMax(lo).cwiseMin(hi);
}

Agent Agent::create(const PpoConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  Agent a;
  std::vector<int> dims{sim::kObsDim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  std::vector<int> pdims = dims;
  pdims.push_back(kActionDim);
  dims.push_back(1);
  a.policy.mean = nets::make_mlp(pdims, nets::Activation::kElu, nets::Activation::kIdentity,
                                 cfg.policy_output_gain, rng);
  a.policy.log_std = VectorXd::Constant(kActionDim, cfg.init_log_std);
  a.value = nets::make_mlp(dims, nets::Activation::kElu, nets::Activation::kIdentity, 1.0, rng);
  nets::AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  a.policy_opt = nets::AdamState::for_params(a.policy.mean, adam);
  a.value_opt = nets::AdamState::for_params(a.value, adam);
  a.log_std_moments.first = VectorXd::Zero(kActionDim);
  a.log_std_moments.second = VectorXd::Zero(kActionDim);
  a.obs_norm = nets::RunningNormalizer(sim::kObsDim);
  return a;
}

double gaussian_log_prob(const VectorXd& x, const VectorXd& mean, const VectorXd& log_std) {
  const VectorXd z = (x - mean).array() * (-log_std).array().exp();
  return -0.5 * z.squaredNorm() - log_std.sum() - 0.5 * kLog2Pi * static_cast<double>(x.size());
}

double gaussian_entropy(const VectorXd& log_std) {
  return log_std.sum() + 0.5 * (kLog2Pi + 1.0) * static_cast<double>(log_std.size());
}

ActResult policy_act(const PolicyHead& policy, const nets::MlpParams& value, const VectorXd& obs,
                     std::mt19937_64* rng, bool deterministic) {
  if (obs.size() != sim::kObsDim)
    throw DimensionError("policy_act: observation has " + std::to_string(obs.size()) +
                         " entries, expected " + std::to_string(sim::kObsDim));
  const VectorXd mu = nets::mlp_forward(policy.mean, obs);
  const VectorXd v = nets::mlp_forward(value, obs);
  if (!mu.allFinite() || !v.allFinite()) throw NumericError("policy_act: non-finite network output");
  ActResult r;
  if (deterministic) {
    r.raw_action = mu;
  } else {
    if (!rng) throw ConfigError("policy_act: stochastic mode needs a random stream");
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int j = 0; j < kActionDim; ++j) r.raw_action[j] = mu[j] + std::exp(policy.log_std[j]) * n01(*rng);
  }
  r.log_prob = gaussian_log_prob(r.raw_action, mu, policy.log_std);
  r.action = r.raw_action.cwiseMax(-1.0).cwiseMin(1.0);
  r.value = v[0];
  return r;
}

GaeResult compute_gae(const VectorXd& rewards, const VectorXd& values, const std::vector<bool>& dones,
                      double bootstrap_value, double gamma, double lambda) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n || static_cast<Eigen::Index>(dones.size()) != n)
    throw DimensionError("compute_gae: rewards, values and dones differ in length");
  GaeResult g;
  g.advantages.resize(n);
  double next_value = bootstrap_value;
  double next_adv = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    g.advantages[t] = next_adv;
    next_value = values[t];
  }
  g.returns = g.advantages + values;
  return g;
}

void RolloutBuffer::resize(int t, int n) {
  horizon = t;
  num_envs = n;
  const int m = t * n;
  raw_obs.resize(sim::kObsDim, m);
  obs.resize(sim::kObsDim, m);
  actions.resize(kActionDim, m);
  log_probs.resize(m);
  values.resize(m);
  task_rewards.resize(m);
  style_rewards.resize(m);
  rewards.resize(m);
  modes.assign(m, amp::Mode::kLoco);
  g_z.resize(m);
  v_hat.resize(m);
  commands.resize(m);
  tracking_error.resize(m);
  dones.assign(m, false);
  valid.assign(m, true);
  feature_pairs.resize(amp::kPairDim, m);
  bootstrap_values.resize(n);
}

std::vector<amp::GatedTransition> RolloutBuffer::gated_transitions() const {
  std::vector<amp::GatedTransition> out;
  out.reserve(size());
  for (int i = 0; i < size(); ++i) {
    if (!valid[i]) continue;
    amp::GatedTransition g;
    g.transition.feat_t = feature_pairs.col(i).head<clips::kFeatureDim>();
    g.transition.feat_t1 = feature_pairs.col(i).tail<clips::kFeatureDim>();
    g.g_z = g_z[i];
    g.v_hat = v_hat[i];
    out.push_back(std::move(g));
  }
  return out;
}

void CommandConfig::validate() const {
  if (!(normal_min <= normal_max) || !(fast_min <= fast_max))
    throw ConfigError("command ranges must satisfy min <= max");
  if (!(fast_probability >= 0.0 && fast_probability <= 1.0))
    throw ConfigError("fast_probability must lie in [0, 1]");
}

void InitConfig::validate() const {
  if (upright < 0.0 || prone < 0.0 || supine < 0.0 || upright + prone + supine <= 0.0)
    throw ConfigError("initial-mode probabilities must be non-negative and not all zero");
  if (episode_length < 1) throw ConfigError("episode_length must be >= 1");
}

EnvPool::EnvPool(const sim::BipedModel& model, int num_envs, std::uint64_t seed) : model_(model) {
  if (num_envs < 1) throw ConfigError("EnvPool needs at least one environment");
  envs_.reserve(num_envs);
  rngs_.reserve(num_envs);
  limits_.assign(num_envs, 0);
  for (int i = 0; i < num_envs; ++i) {
    envs_.emplace_back(model);
    rngs_.emplace_back(seed * 10007ULL + static_cast<std::uint64_t>(i));
  }
}

void EnvPool::reset_env(int i, const CommandConfig& cmd, const InitConfig& init) {
  std::mt19937_64& rng = rngs_[i];
  limits_[i] = init.episode_length;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const bool fast = u01(rng) < cmd.fast_probability;
  std::uniform_real_distribution<double> range(fast ? cmd.fast_min : cmd.normal_min,
                                               fast ? cmd.fast_max : cmd.normal_max);
  const double command = range(rng);
  const double total = init.upright + init.prone + init.supine;
  const double pick = u01(rng) * total;
  sim::ResetMode mode = sim::ResetMode::kUpright;
  if (pick >= init.upright + init.prone) {
    mode = sim::ResetMode::kSupine;
  } else if (pick >= init.upright) {
    mode = sim::ResetMode::kProne;
  }
  envs_[i].reset(mode, command, rng);
}

void EnvPool::reset_all(const CommandConfig& cmd, const InitConfig& init, bool stagger) {
  for (int i = 0; i < size(); ++i) {
    reset_env(i, cmd, init);
    if (stagger) limits_[i] = std::uniform_int_distribution<int>(1, init.episode_length)(rngs_[i]);
  }
}

RolloutStats collect_rollout(EnvPool& pool, const Agent& agent, const amp::DiscriminatorPair& disc,
                             const RolloutSettings& settings, RolloutBuffer& buffer) {
  const int n = pool.size();
  const int horizon = settings.ppo.horizon;
  if (n != settings.ppo.num_envs)
    throw DimensionError("collect_rollout: pool has " + std::to_string(n) + " envs, config expects " +
                         std::to_string(settings.ppo.num_envs));
  buffer.resize(horizon, n);
  RolloutStats stats;
  const sim::BipedModel& model = pool.model();
  const VectorXd sigma = agent.policy.log_std.array().exp();

  MatrixXd raw(sim::kObsDim, n);
  MatrixXd feat_t(clips::kFeatureDim, n);
  MatrixXd pairs(amp::kPairDim, n);
  std::vector<sim::StepInfo> infos(n);
  std::vector<char> failed(n);
  std::vector<sim::Vec6> acts(n);

  for (int t = 0; t < horizon; ++t) {
    for (int e = 0; e < n; ++e) raw.col(e) = pool.env(e).observation();
    const MatrixXd obs = agent.obs_norm.normalize(raw);
    const MatrixXd mu = nets::mlp_forward_batch(agent.policy.mean, obs);
    const MatrixXd val = nets::mlp_forward_batch(agent.value, obs);
    check_finite(mu, "policy network");
    check_finite(val, "value network");

    for (int e = 0; e < n; ++e) {
      const int i = RolloutBuffer::index(t, e, n);
      const sim::SimState& s = pool.env(e).state();
      std::normal_distribution<double> n01(0.0, 1.0);
      sim::Vec6 a;
      for (int j = 0; j < kActionDim; ++j) a[j] = mu(j, e) + sigma[j] * n01(pool.rng(e));
      buffer.raw_obs.col(i) = raw.col(e);
      buffer.obs.col(i) = obs.col(e);
      buffer.actions.col(i) = a;
      buffer.log_probs[i] = gaussian_log_prob(a, mu.col(e), agent.policy.log_std);
      buffer.values[i] = val(0, e);
      buffer.g_z[i] = sim::projected_gravity(s)[1];
      buffer.modes[i] = amp::gate(buffer.g_z[i], settings.gate);
      buffer.commands[i] = s.command;
      buffer.v_hat[i] = amp::normalize_command(s.command, settings.amp.v_max);
      feat_t.col(e) = clips::feature_from_state(model, s.q, s.qd);
      acts[e] = a.cwiseMax(-1.0).cwiseMin(1.0);
    }

    parallel_for(n, settings.threads, [&](int e) {
      failed[e] = 0;
      try {
        pool.env(e).step(acts[e], &infos[e]);
      } catch (const IntegrationError&) {
        failed[e] = 1;
      }
    });

    std::vector<int> timeouts;
    for (int e = 0; e < n; ++e) {
      const int i = RolloutBuffer::index(t, e, n);
      const sim::SimState& s = pool.env(e).state();
      if (failed[e]) {
        ++stats.integration_errors;
        buffer.valid[i] = false;
        buffer.dones[i] = true;
        buffer.task_rewards[i] = 0.0;
        buffer.tracking_error[i] = 0.0;
        pairs.col(e).setZero();
        buffer.feature_pairs.col(i).setZero();
        continue;
      }
      pairs.col(e) << feat_t.col(e), clips::feature_from_state(model, s.q, s.qd);
      buffer.feature_pairs.col(i) = pairs.col(e);
      const rewards::RewardWeights& w =
          buffer.modes[i] == amp::Mode::kRec && settings.rec_reward_weights
              ? *settings.rec_reward_weights
              : settings.reward_weights;
      buffer.task_rewards[i] = rewards::compute_task_reward(s, infos[e].torques, w).total;
      buffer.tracking_error[i] = std::abs(s.qd[sim::kRootX] - s.command);
      if (pool.env(e).steps_in_episode() >= pool.episode_limit(e)) {
        buffer.dones[i] = true;
        timeouts.push_back(e);
      } else {
        buffer.dones[i] = false;
      }
    }

    std::vector<amp::Mode> modes(n);
    VectorXd vh(n);
    for (int e = 0; e < n; ++e) {
      const int i = RolloutBuffer::index(t, e, n);
      modes[e] = buffer.modes[i];
      vh[e] = buffer.v_hat[i];
    }
    const VectorXd style = amp::style_rewards(disc, pairs, modes, vh);
    for (int e = 0; e < n; ++e) {
      const int i = RolloutBuffer::index(t, e, n);
      buffer.style_rewards[i] = failed[e] ? 0.0 : style[e];
      buffer.rewards[i] =
          amp::total_reward(buffer.task_rewards[i], buffer.style_rewards[i], settings.amp.lambda_amp);
    }

    // Time-limit ends are not terminal: fold gamma * V(s_T) into the reward.
    if (!timeouts.empty()) {
      MatrixXd last(sim::kObsDim, static_cast<Eigen::Index>(timeouts.size()));
      for (std::size_t k = 0; k < timeouts.size(); ++k) last.col(k) = pool.env(timeouts[k]).observation();
      const MatrixXd v_last = nets::mlp_forward_batch(agent.value, agent.obs_norm.normalize(last));
      check_finite(v_last, "value network");
      for (std::size_t k = 0; k < timeouts.size(); ++k) {
        const int i = RolloutBuffer::index(t, timeouts[k], n);
        buffer.rewards[i] += settings.ppo.gamma * v_last(0, k);
      }
    }

    for (int e = 0; e < n; ++e) {
      if (buffer.dones[RolloutBuffer::index(t, e, n)]) {
        if (!failed[e]) ++stats.episodes_completed;
        pool.reset_env(e, settings.commands, settings.init);
      }
    }
  }

  for (int e = 0; e < n; ++e) raw.col(e) = pool.env(e).observation();
  const MatrixXd v_boot = nets::mlp_forward_batch(agent.value, agent.obs_norm.normalize(raw));
  check_finite(v_boot, "value network");
  buffer.bootstrap_values = v_boot.row(0).transpose();
  return stats;
}

SurrogateTerm clipped_surrogate(double log_ratio, double advantage, double clip_ratio) {
  const double ratio = std::exp(log_ratio);
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * advantage;
  SurrogateTerm t;
  t.objective = std::min(unclipped, clipped);
  // Gradient flows only through the unclipped branch when it is the minimum.
  t.d_log_prob = unclipped <= clipped ? unclipped : 0.0;
  t.clipped = std::abs(ratio - 1.0) > clip_ratio;
  return t;
}

void normalize_advantages(VectorXd& adv) {
  const double mean = adv.mean();
  adv.array() -= mean;
  const double var = adv.squaredNorm() / static_cast<double>(adv.size());
  adv /= std::sqrt(var + 1e-12);
}

PpoStats ppo_update(Agent& agent, const RolloutBuffer& buffer, const PpoConfig& cfg,
                    std::mt19937_64& rng) {
  const int total = buffer.size();
  if (total == 0) throw DimensionError("ppo_update: empty buffer");

  VectorXd adv(total), ret(total);
  for (int e = 0; e < buffer.num_envs; ++e) {
    VectorXd r(buffer.horizon), v(buffer.horizon);
    std::vector<bool> d(buffer.horizon);
    for (int t = 0; t < buffer.horizon; ++t) {
      const int i = RolloutBuffer::index(t, e, buffer.num_envs);
      r[t] = buffer.rewards[i];
      v[t] = buffer.values[i];
      d[t] = buffer.dones[i];
    }
    const GaeResult g = compute_gae(r, v, d, buffer.bootstrap_values[e], cfg.gamma, cfg.lambda_gae);
    for (int t = 0; t < buffer.horizon; ++t) {
      const int i = RolloutBuffer::index(t, e, buffer.num_envs);
      adv[i] = g.advantages[t];
      ret[i] = g.returns[t];
    }
  }
  normalize_advantages(adv);

  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  const int mb_size = total / cfg.minibatches;
  PpoStats stats;
  int updates = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int mb = 0; mb < cfg.minibatches; ++mb) {
      const int begin = mb * mb_size;
      const int end = mb + 1 == cfg.minibatches ? total : begin + mb_size;
      const int m = end - begin;
      MatrixXd obs(sim::kObsDim, m), act(kActionDim, m);
      VectorXd old_lp(m), a(m), rt(m);
      for (int k = 0; k < m; ++k) {
        const int i = order[begin + k];
        obs.col(k) = buffer.obs.col(i);
        act.col(k) = buffer.actions.col(i);
        old_lp[k] = buffer.log_probs[i];
        a[k] = adv[i];
        rt[k] = ret[i];
      }

      nets::ForwardCache pc, vc;
      const MatrixXd mu = nets::mlp_forward_batch(agent.policy.mean, obs, &pc);
      const MatrixXd val = nets::mlp_forward_batch(agent.value, obs, &vc);
      const VectorXd& log_std = agent.policy.log_std;
      const VectorXd inv_var = (-2.0 * log_std).array().exp();

      MatrixXd d_mu(kActionDim, m);
      VectorXd d_log_std = VectorXd::Zero(kActionDim);
      double pol_loss = 0.0, kl = 0.0, clipped = 0.0;
      const double inv_m = 1.0 / m;
      for (int k = 0; k < m; ++k) {
        const VectorXd diff = act.col(k) - mu.col(k);
        const double lp = -0.5 * diff.cwiseProduct(diff).dot(inv_var) - log_std.sum() -
                          0.5 * kLog2Pi * kActionDim;
        const double log_ratio = lp - old_lp[k];
        const SurrogateTerm s = clipped_surrogate(log_ratio, a[k], cfg.clip_ratio);
        pol_loss -= s.objective * inv_m;
        kl += (std::expm1(log_ratio) - log_ratio) * inv_m;
        if (s.clipped) clipped += inv_m;
        const double g_lp = -s.d_log_prob * inv_m;
        d_mu.col(k) = g_lp * diff.cwiseProduct(inv_var);
        d_log_std.array() += g_lp * (diff.array().square() * inv_var.array() - 1.0);
      }
      const double entropy = gaussian_entropy(log_std);
      d_log_std.array() -= cfg.entropy_coef;

      const VectorXd verr = val.row(0).transpose() - rt;
      const double value_loss = verr.squaredNorm() * inv_m;
      const MatrixXd d_val = (2.0 * cfg.value_coef * inv_m) * verr.transpose();

      const double loss = pol_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
      nets::MlpGrads pg = nets::MlpGrads::zeros_like(agent.policy.mean);
      nets::MlpGrads vg = nets::MlpGrads::zeros_like(agent.value);
      nets::mlp_backward_batch(agent.policy.mean, pc, d_mu, pg);
      nets::mlp_backward_batch(agent.value, vc, d_val, vg);

      double sq = pg.squared_norm() + vg.squared_norm() + d_log_std.squaredNorm();
      if (!std::isfinite(loss) || !std::isfinite(sq) || !pg.all_finite() || !vg.all_finite()) {
        std::ostringstream msg;
        msg << "ppo loss is non-finite (epoch " << epoch << ", minibatch " << mb
            << ", policy_loss=" << pol_loss << ", value_loss=" << value_loss
            << ", entropy=" << entropy << ", max|adv|=" << a.cwiseAbs().maxCoeff()
            << ", max|return|=" << rt.cwiseAbs().maxCoeff() << ")";
        throw NumericError(msg.str());
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg.max_grad_norm) {
        const double s = cfg.max_grad_norm / norm;
        pg.scale(s);
        vg.scale(s);
        d_log_std *= s;
      }
      nets::adam_step(agent.policy.mean, pg, agent.policy_opt);
      nets::adam_update_vector(agent.policy.log_std, d_log_std, agent.log_std_moments,
                               agent.policy_opt.config, agent.policy_opt.step);
      agent.policy.clamp_log_std(cfg.log_std_min, cfg.log_std_max);
      nets::adam_step(agent.value, vg, agent.value_opt);

      stats.policy_loss += pol_loss;
      stats.value_loss += value_loss;
      stats.entropy += entropy;
      stats.approx_kl += kl;
      stats.clip_frac += clipped;
      stats.grad_norm += norm;
      ++updates;
    }
  }
  const double inv = 1.0 / updates;
  stats.policy_loss *= inv;
  stats.value_loss *= inv;
  stats.entropy *= inv;
  stats.approx_kl *= inv;
  stats.clip_frac *= inv;
  stats.grad_norm *= inv;
  return stats;
}

}  // namespace gamp::ppo
