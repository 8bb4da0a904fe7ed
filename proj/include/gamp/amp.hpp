#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gamp/clips.hpp"
#include "gamp/nets.hpp"
#include "gamp/normalizer.hpp"
#include "gamp/sim.hpp"

namespace gamp::amp {

// Which discriminator scores a transition.
enum class Mode : std::uint8_t { kRec = 0, kLoco = 1 };
const char* mode_name(Mode m);

struct GateConfig {
  double threshold = 0.6;
  void validate() const;
};

struct AmpConfig {
  double lambda_amp = 0.5;
  double v_max = 3.0;  // m/s
  void validate() const;
};

struct DiscriminatorConfig {
  std::vector<int> hidden = {128, 64};
  nets::Activation activation = nets::Activation::kTanh;
  double learning_rate = 5e-4;
  double lambda_gp = 10.0;
  double reward_epsilon = 1e-4;  // D is clamped to [eps, 1 - eps]
  void validate() const;
};

// Recovery mode iff |g_z + 1| > threshold (strict).
Mode gate(double projected_gravity_z, const GateConfig& cfg);

// Number of gate() evaluations in this process. Tests use it to show that
// deployment code never consults the gate.
std::uint64_t gate_evaluations();

// clamp(v_cmd / v_max, 0, 1).
double normalize_command(double v_cmd, double v_max);

// R_task + lambda_amp * R_amp.
double total_reward(double task_reward, double style_reward, double lambda_amp);

// -log(1 - clamp(d, eps, 1 - eps)).
double style_reward_from_output(double d, double epsilon);

inline constexpr int kPairDim = 2 * clips::kFeatureDim;

struct DiscriminatorPair {
  nets::MlpParams rec;   // 40 inputs
  nets::MlpParams loco;  // 41 inputs: 40 normalized features + v_hat
  nets::AdamState rec_opt;
  nets::AdamState loco_opt;
  nets::RunningNormalizer features{kPairDim};
  DiscriminatorConfig config;

  static DiscriminatorPair create(const DiscriminatorConfig& cfg, std::mt19937_64& rng);
};

// Stacks [feat_t; feat_t1] as a 40-vector.
Eigen::VectorXd pair_features(const clips::Transition& t);

// Discriminator input columns for a batch of raw 40-dim feature pairs; the
// loco variant appends the per-column condition unnormalized.
Eigen::MatrixXd rec_inputs(const DiscriminatorPair& pair, const Eigen::MatrixXd& raw_pairs);
Eigen::MatrixXd loco_inputs(const DiscriminatorPair& pair, const Eigen::MatrixXd& raw_pairs,
                            const Eigen::VectorXd& v_hat);

// Style reward of one transition. v_hat must be given iff mode == kLoco;
// a mismatch throws ValidationError.
double style_reward(const DiscriminatorPair& pair, const clips::Transition& transition,
                    Mode mode, std::optional<double> v_hat);

// Batched style rewards; columns of raw_pairs with modes[i] selecting the
// discriminator. v_hat is ignored for recovery columns.
Eigen::VectorXd style_rewards(const DiscriminatorPair& pair, const Eigen::MatrixXd& raw_pairs,
                              const std::vector<Mode>& modes, const Eigen::VectorXd& v_hat);

// A policy transition tagged with the gate inputs observed at s_t.
struct GatedTransition {
  clips::Transition transition;
  double g_z = -1.0;
  double v_hat = 0.0;
};

struct RoutedBatch {
  std::vector<clips::Transition> rec;   // no condition
  std::vector<clips::Transition> loco;  // condition = v_hat
};

// Stable partition by gate(g_z).
RoutedBatch route_batch(const std::vector<GatedTransition>& batch, const GateConfig& cfg);

struct DiscStepStats {
  double loss = 0.0;          // BCE + gradient penalty
  double bce = 0.0;
  double grad_penalty = 0.0;  // mean squared input-gradient norm at references (unweighted)
  double accuracy = 0.0;      // fraction classified correctly at D = 0.5
  double mean_d_reference = 0.0;
  double mean_d_policy = 0.0;
};

// One Adam step on (reference label 1, policy label 0) binary cross-entropy
// plus lambda_gp * mean ||dD/dinput||^2 at the reference inputs. Inputs are
// already normalized discriminator inputs, one column per sample.
DiscStepStats discriminator_step(nets::MlpParams& disc, nets::AdamState& opt,
                                 const Eigen::MatrixXd& reference_inputs,
                                 const Eigen::MatrixXd& policy_inputs, double lambda_gp);

// Loss and its parameter gradient, written to grads, without updating.
DiscStepStats discriminator_gradients(const nets::MlpParams& disc,
                                      const Eigen::MatrixXd& reference_inputs,
                                      const Eigen::MatrixXd& policy_inputs, double lambda_gp,
                                      nets::MlpGrads& grads);

// Loss terms without updating anything.
DiscStepStats discriminator_eval(const nets::MlpParams& disc,
                                 const Eigen::MatrixXd& reference_inputs,
                                 const Eigen::MatrixXd& policy_inputs);

struct ReferenceClips {
  std::vector<clips::MotionClip> recovery;  // pooled get-up clips
  clips::MotionClip walk;
  clips::MotionClip run;
};

struct DiscUpdateStats {
  std::optional<DiscStepStats> rec;   // empty when the recovery batch was empty
  std::optional<DiscStepStats> loco;
  long walk_references = 0;
  long run_references = 0;
};

// Samples one reference per policy transition (recovery pool for the rec
// batch; walk/run mixture with each transition's own condition for the loco
// batch), then takes one step per non-empty discriminator. The feature
// normalizer is updated with the policy transitions first.
DiscUpdateStats update_discriminators(DiscriminatorPair& pair, const RoutedBatch& batch,
                                      const ReferenceClips& refs, const sim::BipedModel& model,
                                      std::mt19937_64& rng);

}  // namespace gamp::amp
