#include "gamp/amp.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "gamp/errors.hpp"

namespace gamp::amp {

namespace {

std::atomic<std::uint64_t> g_gate_evaluations{0};

using Eigen::MatrixXd;
using Eigen::VectorXd;

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

MatrixXd stack_pairs(const std::vector<clips::Transition>& ts) {
  MatrixXd m(kPairDim, static_cast<Eigen::Index>(ts.size()));
  for (std::size_t i = 0; i < ts.size(); ++i) m.col(i) = pair_features(ts[i]);
  return m;
}

}  // namespace

const char* mode_name(Mode m) { return m == Mode::kRec ? "rec" : "loco"; }

void GateConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 2.0))
    throw ConfigError("gate threshold must lie in (0, 2)");
}

void AmpConfig::validate() const {
  if (!(lambda_amp >= 0.0) || !std::isfinite(lambda_amp))
    throw ConfigError("lambda_amp must be non-negative");
  if (!(v_max > 0.0) || !std::isfinite(v_max)) throw ConfigError("v_max must be positive");
}

void DiscriminatorConfig::validate() const {
  if (!(reward_epsilon > 0.0 && reward_epsilon <= 0.01))
    throw ConfigError("discriminator reward_epsilon must lie in (0, 0.01]");
  if (!(lambda_gp >= 0.0)) throw ConfigError("lambda_gp must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("discriminator learning_rate must be positive");
  for (int h : hidden)
    if (h <= 0) throw ConfigError("discriminator hidden widths must be positive");
}

Mode gate(double projected_gravity_z, const GateConfig& cfg) {
  g_gate_evaluations.fetch_add(1, std::memory_order_relaxed);
  return std::abs(projected_gravity_z + 1.0) > cfg.threshold ? Mode::kRec : Mode::kLoco;
}

std::uint64_t gate_evaluations() { return g_gate_evaluations.load(std::memory_order_relaxed); }

double normalize_command(double v_cmd, double v_max) {
  if (!(v_max > 0.0)) throw ConfigError("v_max must be positive");
  return std::clamp(v_cmd / v_max, 0.0, 1.0);
}

double total_reward(double task_reward, double style_reward, double lambda_amp) {
  return task_reward + lambda_amp * style_reward;
}

double style_reward_from_output(double d, double epsilon) {
  const double clamped = std::clamp(d, epsilon, 1.0 - epsilon);
  return -std::log1p(-clamped);
}

DiscriminatorPair DiscriminatorPair::create(const DiscriminatorConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  DiscriminatorPair p;
  p.config = cfg;
  std::vector<int> rec_dims{kPairDim};
  rec_dims.insert(rec_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  rec_dims.push_back(1);
  std::vector<int> loco_dims = rec_dims;
  loco_dims.front() = kPairDim + 1;
  p.rec = nets::make_mlp(rec_dims, cfg.activation, nets::Activation::kSigmoid, 1.0, rng);
  p.loco = nets::make_mlp(loco_dims, cfg.activation, nets::Activation::kSigmoid, 1.0, rng);
  nets::AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  p.rec_opt = nets::AdamState::for_params(p.rec, adam);
  p.loco_opt = nets::AdamState::for_params(p.loco, adam);
  p.features = nets::RunningNormalizer(kPairDim);
  return p;
}

VectorXd pair_features(const clips::Transition& t) {
  VectorXd v(kPairDim);
  v << t.feat_t, t.feat_t1;
  return v;
}

MatrixXd rec_inputs(const DiscriminatorPair& pair, const MatrixXd& raw_pairs) {
  return pair.features.normalize(raw_pairs);
}

MatrixXd loco_inputs(const DiscriminatorPair& pair, const MatrixXd& raw_pairs,
                     const VectorXd& v_hat) {
  if (v_hat.size() != raw_pairs.cols())
    throw DimensionError("loco inputs: one condition per column required");
  MatrixXd in(kPairDim + 1, raw_pairs.cols());
  in.topRows(kPairDim) = pair.features.normalize(raw_pairs);
  in.row(kPairDim) = v_hat.transpose();
  return in;
}

double style_reward(const DiscriminatorPair& pair, const clips::Transition& transition, Mode mode,
                    std::optional<double> v_hat) {
  if ((mode == Mode::kLoco) != v_hat.has_value()) {
    throw ValidationError(std::string("style reward: mode ") + mode_name(mode) +
                          (v_hat ? " must not carry a condition" : " requires a condition"));
  }
  const VectorXd raw = pair_features(transition);
  if (!raw.allFinite()) throw NumericError("style reward: non-finite transition features");
  double d = 0.0;
  if (mode == Mode::kRec) {
    d = nets::mlp_forward_batch(pair.rec, rec_inputs(pair, raw))(0, 0);
  } else {
    d = nets::mlp_forward_batch(pair.loco, loco_inputs(pair, raw, VectorXd::Constant(1, *v_hat)))(0, 0);
  }
  return style_reward_from_output(d, pair.config.reward_epsilon);
}

VectorXd style_rewards(const DiscriminatorPair& pair, const MatrixXd& raw_pairs,
                       const std::vector<Mode>& modes, const VectorXd& v_hat) {
  const Eigen::Index n = raw_pairs.cols();
  if (static_cast<Eigen::Index>(modes.size()) != n || v_hat.size() != n)
    throw DimensionError("style rewards: modes/conditions must match batch size");
  std::vector<Eigen::Index> rec_idx, loco_idx;
  for (Eigen::Index i = 0; i < n; ++i) (modes[i] == Mode::kRec ? rec_idx : loco_idx).push_back(i);
  VectorXd out(n);
  if (!rec_idx.empty()) {
    MatrixXd raw(kPairDim, rec_idx.size());
    for (std::size_t k = 0; k < rec_idx.size(); ++k) raw.col(k) = raw_pairs.col(rec_idx[k]);
    const MatrixXd d = nets::mlp_forward_batch(pair.rec, rec_inputs(pair, raw));
    for (std::size_t k = 0; k < rec_idx.size(); ++k)
      out[rec_idx[k]] = style_reward_from_output(d(0, k), pair.config.reward_epsilon);
  }
  if (!loco_idx.empty()) {
    MatrixXd raw(kPairDim, loco_idx.size());
    VectorXd cond(loco_idx.size());
    for (std::size_t k = 0; k < loco_idx.size(); ++k) {
      raw.col(k) = raw_pairs.col(loco_idx[k]);
      cond[k] = v_hat[loco_idx[k]];
    }
    const MatrixXd d = nets::mlp_forward_batch(pair.loco, loco_inputs(pair, raw, cond));
    for (std::size_t k = 0; k < loco_idx.size(); ++k)
      out[loco_idx[k]] = style_reward_from_output(d(0, k), pair.config.reward_epsilon);
  }
  return out;
}

RoutedBatch route_batch(const std::vector<GatedTransition>& batch, const GateConfig& cfg) {
  RoutedBatch out;
  for (const GatedTransition& g : batch) {
    clips::Transition t = g.transition;
    if (gate(g.g_z, cfg) == Mode::kRec) {
      t.condition.reset();
      out.rec.push_back(std::move(t));
    } else {
      t.condition = g.v_hat;
      out.loco.push_back(std::move(t));
    }
  }
  return out;
}

DiscStepStats discriminator_eval(const nets::MlpParams& disc, const MatrixXd& reference_inputs,
                                 const MatrixXd& policy_inputs) {
  nets::ForwardCache cr, cp;
  nets::mlp_forward_batch(disc, reference_inputs, &cr);
  nets::mlp_forward_batch(disc, policy_inputs, &cp);
  const auto& logit_r = cr.pre.back();
  const auto& logit_p = cp.pre.back();
  const auto& d_r = cr.post.back();
  const auto& d_p = cp.post.back();
  DiscStepStats s;
  double bce_r = 0.0, bce_p = 0.0;
  long correct = 0;
  for (Eigen::Index i = 0; i < d_r.cols(); ++i) {
    bce_r += softplus(-logit_r(0, i));
    correct += d_r(0, i) > 0.5;
  }
  for (Eigen::Index i = 0; i < d_p.cols(); ++i) {
    bce_p += softplus(logit_p(0, i));
    correct += d_p(0, i) < 0.5;
  }
  const double nr = static_cast<double>(d_r.cols());
  const double np = static_cast<double>(d_p.cols());
  s.bce = 0.5 * (bce_r / nr + bce_p / np);
  s.accuracy = static_cast<double>(correct) / (nr + np);
  s.mean_d_reference = d_r.mean();
  s.mean_d_policy = d_p.mean();
  s.loss = s.bce;
  return s;
}

DiscStepStats discriminator_gradients(const nets::MlpParams& disc,
                                      const MatrixXd& reference_inputs,
                                      const MatrixXd& policy_inputs, double lambda_gp,
                                      nets::MlpGrads& grads) {
  const Eigen::Index nr = reference_inputs.cols();
  const Eigen::Index np = policy_inputs.cols();
  if (nr == 0 || np == 0) throw DimensionError("discriminator step needs non-empty batches");

  DiscStepStats s = discriminator_eval(disc, reference_inputs, policy_inputs);
  nets::ForwardCache cr, cp;
  nets::mlp_forward_batch(disc, reference_inputs, &cr);
  nets::mlp_forward_batch(disc, policy_inputs, &cp);

  // d(BCE)/d(logit) = D - label, averaged per class.
  grads = nets::MlpGrads::zeros_like(disc);
  const MatrixXd up_r = (cr.post.back().array() - 1.0) * (0.5 / static_cast<double>(nr));
  const MatrixXd up_p = cp.post.back().array() * (0.5 / static_cast<double>(np));
  nets::mlp_backward_batch(disc, cr, up_r, grads, true);
  nets::mlp_backward_batch(disc, cp, up_p, grads, true);

  if (lambda_gp > 0.0) {
    const MatrixXd ones = MatrixXd::Ones(1, nr);
    nets::MlpGrads scratch = nets::MlpGrads::zeros_like(disc);
    const MatrixXd input_grad = nets::mlp_backward_batch(disc, cr, ones, scratch);
    s.grad_penalty = input_grad.colwise().squaredNorm().mean();
    nets::MlpGrads gp = nets::MlpGrads::zeros_like(disc);
    nets::mlp_mixed_grad_batch(disc, cr, ones, input_grad, gp);
    grads.add(gp, 2.0 * lambda_gp / static_cast<double>(nr));
  }
  s.loss = s.bce + lambda_gp * s.grad_penalty;

  if (!std::isfinite(s.loss) || !grads.all_finite()) {
    std::ostringstream msg;
    msg << "discriminator loss is non-finite (bce=" << s.bce << ", gp=" << s.grad_penalty
        << ", references=" << nr << ", policy samples=" << np
        << ", reference inputs finite=" << reference_inputs.allFinite()
        << ", policy inputs finite=" << policy_inputs.allFinite() << ")";
    throw NumericError(msg.str());
  }
  return s;
}

DiscStepStats discriminator_step(nets::MlpParams& disc, nets::AdamState& opt,
                                 const MatrixXd& reference_inputs, const MatrixXd& policy_inputs,
                                 double lambda_gp) {
  nets::MlpGrads grads;
  const DiscStepStats s =
      discriminator_gradients(disc, reference_inputs, policy_inputs, lambda_gp, grads);
  nets::adam_step(disc, grads, opt);
  return s;
}

DiscUpdateStats update_discriminators(DiscriminatorPair& pair, const RoutedBatch& batch,
                                      const ReferenceClips& refs, const sim::BipedModel& model,
                                      std::mt19937_64& rng) {
  DiscUpdateStats stats;
  const MatrixXd rec_policy = stack_pairs(batch.rec);
  const MatrixXd loco_policy = stack_pairs(batch.loco);
  MatrixXd all(kPairDim, rec_policy.cols() + loco_policy.cols());
  all << rec_policy, loco_policy;
  pair.features.update(all);

  if (!batch.rec.empty()) {
    std::vector<clips::Transition> ref;
    ref.reserve(batch.rec.size());
    for (std::size_t i = 0; i < batch.rec.size(); ++i)
      ref.push_back(clips::sample_from_pool(model, refs.recovery, rng));
    stats.rec = discriminator_step(pair.rec, pair.rec_opt, rec_inputs(pair, stack_pairs(ref)),
                                   rec_inputs(pair, rec_policy), pair.config.lambda_gp);
  }

  if (!batch.loco.empty()) {
    std::vector<clips::Transition> ref;
    ref.reserve(batch.loco.size());
    VectorXd cond(batch.loco.size());
    for (std::size_t i = 0; i < batch.loco.size(); ++i) {
      if (!batch.loco[i].condition)
        throw ValidationError("locomotion transition without a condition");
      cond[i] = *batch.loco[i].condition;
      bool used_run = false;
      ref.push_back(clips::sample_reference_loco(model, refs.walk, refs.run, cond[i], rng, &used_run));
      ++(used_run ? stats.run_references : stats.walk_references);
    }
    stats.loco = discriminator_step(pair.loco, pair.loco_opt,
                                    loco_inputs(pair, stack_pairs(ref), cond),
                                    loco_inputs(pair, loco_policy, cond), pair.config.lambda_gp);
  }
  return stats;
}

}  // namespace gamp::amp
