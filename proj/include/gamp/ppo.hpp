#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gamp/amp.hpp"
#include "gamp/nets.hpp"
#include "gamp/normalizer.hpp"
#include "gamp/rewards.hpp"
#include "gamp/sim.hpp"

namespace gamp::ppo {

inline constexpr int kActionDim = sim::kNumJoints;

struct PpoConfig {
  double gamma = 0.99;
  double lambda_gae = 0.95;
  double clip_ratio = 0.2;
  int epochs = 5;
  int minibatches = 4;
  double value_coef = 0.5;
  double entropy_coef = 0.005;
  double learning_rate = 3e-4;
  double max_grad_norm = 1.0;
  int horizon = 64;
  int num_envs = 64;
  std::vector<int> hidden = {128, 128, 64};
  double init_log_std = -0.22314355131420976;  // log 0.8
  double log_std_min = -4.0;
  double log_std_max = 1.0;
  double policy_output_gain = 0.01;

  void validate() const;
};

struct PolicyHead {
  nets::MlpParams mean;  // obs -> action mean, identity output
  Eigen::VectorXd log_std;

  void clamp_log_std(double lo, double hi);
};

// Policy, critic, observation normalizer and their optimizer state.
struct Agent {
  PolicyHead policy;
  nets::MlpParams value;
  nets::RunningNormalizer obs_norm{sim::kObsDim};
  nets::AdamState policy_opt;
  nets::AdamState value_opt;
  nets::AdamMoments log_std_moments;

  static Agent create(const PpoConfig& cfg, std::mt19937_64& rng);
};

struct ActResult {
  sim::Vec6 action;      // clamped to [-1, 1], what the env receives
  sim::Vec6 raw_action;  // Gaussian sample before clamping
  double log_prob = 0.0; // of raw_action
  double value = 0.0;
};

// Diagonal Gaussian log density.
double gaussian_log_prob(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::VectorXd& log_std);
double gaussian_entropy(const Eigen::VectorXd& log_std);

// obs is the normalized 88-vector. rng may be null only when deterministic.
ActResult policy_act(const PolicyHead& policy, const nets::MlpParams& value,
                     const Eigen::VectorXd& obs, std::mt19937_64* rng, bool deterministic);

struct GaeResult {
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

GaeResult compute_gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values,
                      const std::vector<bool>& dones, double bootstrap_value, double gamma,
                      double lambda);

// Column index of (t, env) is t * num_envs + env.
struct RolloutBuffer {
  int horizon = 0;
  int num_envs = 0;
  Eigen::MatrixXd raw_obs;      // 88 x TN, before normalization
  Eigen::MatrixXd obs;          // 88 x TN, as fed to the networks
  Eigen::MatrixXd actions;      // 6 x TN, pre-clamp samples
  Eigen::VectorXd log_probs;
  Eigen::VectorXd values;
  Eigen::VectorXd task_rewards;
  Eigen::VectorXd style_rewards;
  Eigen::VectorXd rewards;      // task + lambda_amp * style, plus timeout bootstrap
  std::vector<amp::Mode> modes; // discriminator that produced the style reward
  Eigen::VectorXd g_z;          // at s_t
  Eigen::VectorXd v_hat;
  Eigen::VectorXd commands;
  Eigen::VectorXd tracking_error;  // |vx - command| after the step
  std::vector<bool> dones;
  std::vector<bool> valid;      // false when the step blew up
  Eigen::MatrixXd feature_pairs;  // 40 x TN, raw AMP features of (s_t, s_t+1)
  Eigen::VectorXd bootstrap_values;  // V(s_T) per env

  void resize(int horizon, int num_envs);
  int size() const { return horizon * num_envs; }
  static int index(int t, int env, int num_envs) { return t * num_envs + env; }
  // Transitions for the discriminator update; invalid steps are dropped.
  std::vector<amp::GatedTransition> gated_transitions() const;
};

struct CommandConfig {
  double normal_min = -0.5;
  double normal_max = 1.0;
  double fast_min = -1.5;
  double fast_max = 3.0;
  double fast_probability = 0.3;
  void validate() const;
};

struct InitConfig {
  double upright = 0.6;
  double prone = 0.2;
  double supine = 0.2;
  int episode_length = 500;  // control steps
  void validate() const;
};

// Vectorized environments with per-env random streams.
class EnvPool {
 public:
  EnvPool(const sim::BipedModel& model, int num_envs, std::uint64_t seed);

  int size() const { return static_cast<int>(envs_.size()); }
  sim::BipedEnv& env(int i) { return envs_[i]; }
  const sim::BipedEnv& env(int i) const { return envs_[i]; }
  std::mt19937_64& rng(int i) { return rngs_[i]; }
  const sim::BipedModel& model() const { return model_; }

  // Samples a command and an initial mode, then resets env i.
  void reset_env(int i, const CommandConfig& cmd, const InitConfig& init);
  // With stagger, each first episode ends after a random 1..episode_length
  // steps so resets do not all land on the same iteration.
  void reset_all(const CommandConfig& cmd, const InitConfig& init, bool stagger = false);
  // Step count at which env i's current episode times out.
  int episode_limit(int i) const { return limits_[i]; }

 private:
  sim::BipedModel model_;
  std::vector<sim::BipedEnv> envs_;
  std::vector<std::mt19937_64> rngs_;
  std::vector<int> limits_;
};

struct RolloutSettings {
  PpoConfig ppo;
  rewards::RewardWeights reward_weights;
  // Task weights for steps gated to recovery; reward_weights when empty.
  std::optional<rewards::RewardWeights> rec_reward_weights;
  amp::AmpConfig amp;
  amp::GateConfig gate;
  CommandConfig commands;
  InitConfig init;
  int threads = 1;
};

struct RolloutStats {
  long episodes_completed = 0;
  long integration_errors = 0;
};

// Fills buffer with horizon steps of every env. Uses agent.obs_norm as is
// (it is not updated here).
RolloutStats collect_rollout(EnvPool& pool, const Agent& agent,
                             const amp::DiscriminatorPair& disc,
                             const RolloutSettings& settings, RolloutBuffer& buffer);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_frac = 0.0;
  double grad_norm = 0.0;  // before clipping, mean over minibatches
};

struct SurrogateTerm {
  double objective = 0.0;      // min(r A, clip(r) A)
  double d_log_prob = 0.0;     // d objective / d log pi
  bool clipped = false;        // |r - 1| > clip
};

// Clipped surrogate of one sample with ratio exp(log_ratio).
SurrogateTerm clipped_surrogate(double log_ratio, double advantage, double clip_ratio);

// Normalizes advantages to zero mean and unit variance in place.
void normalize_advantages(Eigen::VectorXd& adv);

PpoStats ppo_update(Agent& agent, const RolloutBuffer& buffer, const PpoConfig& cfg,
                    std::mt19937_64& rng);

}  // namespace gamp::ppo
