#include "gamp/nets.hpp"

#include <cmath>
#include <sstream>

#include "gamp/errors.hpp"

namespace gamp::nets {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// In-place activation on a pre-activation matrix.
MatrixXd activate(Activation act, const MatrixXd& pre) {
  switch (act) {
    case Activation::kIdentity:
      return pre;
    case Activation::kTanh:
      return pre.array().tanh().matrix();
    case Activation::kRelu:
      return pre.cwiseMax(0.0);
    case Activation::kElu:
      return pre.unaryExpr([](double a) { return a > 0.0 ? a : std::expm1(a); });
    case Activation::kSigmoid:
      return pre.unaryExpr([](double a) {
        // Split branches keep exp() from overflowing for large |a|.
        if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
        const double e = std::exp(a);
        return e / (1.0 + e);
      });
  }
  throw Error("unknown activation");
}

MatrixXd first_derivative(Activation act, const MatrixXd& pre, const MatrixXd& post) {
  switch (act) {
    case Activation::kIdentity:
      return MatrixXd::Ones(pre.rows(), pre.cols());
    case Activation::kTanh:
      return (1.0 - post.array().square()).matrix();
    case Activation::kRelu:
      return pre.unaryExpr([](double a) { return a > 0.0 ? 1.0 : 0.0; });
    case Activation::kElu:
      return pre.binaryExpr(post, [](double a, double h) { return a > 0.0 ? 1.0 : h + 1.0; });
    case Activation::kSigmoid:
      return (post.array() * (1.0 - post.array())).matrix();
  }
  throw Error("unknown activation");
}

MatrixXd second_derivative(Activation act, const MatrixXd& pre, const MatrixXd& post) {
  switch (act) {
    case Activation::kIdentity:
    case Activation::kRelu:
      return MatrixXd::Zero(pre.rows(), pre.cols());
    case Activation::kTanh:
      return (-2.0 * post.array() * (1.0 - post.array().square())).matrix();
    case Activation::kElu:
      return pre.binaryExpr(post, [](double a, double h) { return a > 0.0 ? 0.0 : h + 1.0; });
    case Activation::kSigmoid:
      return (post.array() * (1.0 - post.array()) * (1.0 - 2.0 * post.array())).matrix();
  }
  throw Error("unknown activation");
}

Activation layer_activation(const MlpParams& p, int layer) {
  return layer + 1 == p.num_layers() ? p.output_activation : p.hidden_activation;
}

MatrixXd orthogonal(int rows, int cols, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool tall = rows >= cols;
  MatrixXd g(tall ? rows : cols, tall ? cols : rows);
  for (int j = 0; j < g.cols(); ++j)
    for (int i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(g.rows(), g.cols());
  // Sign fix makes the distribution uniform over orthogonal matrices.
  const MatrixXd r = qr.matrixQR();
  for (int j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  MatrixXd w = tall ? q : MatrixXd(q.transpose());
  return gain * w;
}

}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kElu: return "elu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "unknown";
}

Activation activation_from_name(const std::string& name) {
  for (auto a : {Activation::kIdentity, Activation::kTanh, Activation::kRelu,
                 Activation::kElu, Activation::kSigmoid}) {
    if (name == activation_name(a)) return a;
  }
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (int l = 0; l < num_layers(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

void MlpParams::validate() const {
  if (layer_dims.size() < 2)
    throw DimensionError("MLP needs at least input and output widths");
  for (int d : layer_dims)
    if (d <= 0) throw DimensionError("MLP layer widths must be positive");
  if (weights.size() + 1 != layer_dims.size() || biases.size() != weights.size())
    throw DimensionError("MLP layer count does not match layer_dims");
  for (int l = 0; l < num_layers(); ++l) {
    if (weights[l].rows() != layer_dims[l + 1] || weights[l].cols() != layer_dims[l] ||
        biases[l].size() != layer_dims[l + 1]) {
      std::ostringstream msg;
      msg << "MLP layer " << l << " has weights " << weights[l].rows() << "x"
          << weights[l].cols() << ", bias " << biases[l].size() << "; expected "
          << layer_dims[l + 1] << "x" << layer_dims[l];
      throw DimensionError(msg.str());
    }
    if (!weights[l].allFinite() || !biases[l].allFinite())
      throw NumericError("MLP layer " + std::to_string(l) + " holds non-finite values");
  }
}

MlpGrads MlpGrads::zeros_like(const MlpParams& params) {
  MlpGrads g;
  for (int l = 0; l < params.num_layers(); ++l) {
    g.weights.push_back(MatrixXd::Zero(params.weights[l].rows(), params.weights[l].cols()));
    g.biases.push_back(VectorXd::Zero(params.biases[l].size()));
  }
  return g;
}

void MlpGrads::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void MlpGrads::scale(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : biases) b *= factor;
}

void MlpGrads::add(const MlpGrads& other, double factor) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += factor * other.weights[l];
    biases[l] += factor * other.biases[l];
  }
}

double MlpGrads::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weights) s += w.squaredNorm();
  for (const auto& b : biases) s += b.squaredNorm();
  return s;
}

bool MlpGrads::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

MlpParams make_mlp(const std::vector<int>& layer_dims, Activation hidden,
                   Activation output, double output_gain, std::mt19937_64& rng) {
  MlpParams p = make_zero_mlp(layer_dims, hidden, output);
  for (int l = 0; l < p.num_layers(); ++l) {
    const double gain = l + 1 == p.num_layers() ? output_gain : 1.0;
    p.weights[l] = orthogonal(layer_dims[l + 1], layer_dims[l], gain, rng);
  }
  return p;
}

MlpParams make_zero_mlp(const std::vector<int>& layer_dims, Activation hidden,
                        Activation output) {
  MlpParams p;
  p.layer_dims = layer_dims;
  p.hidden_activation = hidden;
  p.output_activation = output;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    p.weights.push_back(MatrixXd::Zero(layer_dims[l + 1], layer_dims[l]));
    p.biases.push_back(VectorXd::Zero(layer_dims[l + 1]));
  }
  p.validate();
  return p;
}

MatrixXd mlp_forward_batch(const MlpParams& params, const MatrixXd& inputs,
                           ForwardCache* cache) {
  if (inputs.rows() != params.input_dim()) {
    std::ostringstream msg;
    msg << "MLP input length mismatch: expected " << params.input_dim() << ", got "
        << inputs.rows();
    throw DimensionError(msg.str());
  }
  if (cache) {
    cache->inputs = inputs;
    cache->pre.resize(params.num_layers());
    cache->post.resize(params.num_layers());
  }
  MatrixXd h = inputs;
  for (int l = 0; l < params.num_layers(); ++l) {
    MatrixXd a = params.weights[l] * h;
    a.colwise() += params.biases[l];
    h = activate(layer_activation(params, l), a);
    if (cache) {
      cache->pre[l] = std::move(a);
      cache->post[l] = h;
    }
  }
  return h;
}

VectorXd mlp_forward(const MlpParams& params, const VectorXd& x) {
  return mlp_forward_batch(params, x);
}

MatrixXd mlp_backward_batch(const MlpParams& params, const ForwardCache& cache,
                            const MatrixXd& upstream, MlpGrads& grads,
                            bool upstream_is_preactivation) {
  const int L = params.num_layers();
  if (upstream.rows() != params.output_dim() || upstream.cols() != cache.inputs.cols())
    throw DimensionError("MLP backward: upstream shape does not match output batch");
  MatrixXd delta = upstream_is_preactivation
                       ? upstream
                       : MatrixXd(upstream.cwiseProduct(first_derivative(
                             params.output_activation, cache.pre[L - 1], cache.post[L - 1])));
  for (int l = L - 1; l >= 0; --l) {
    const MatrixXd& below = l == 0 ? cache.inputs : cache.post[l - 1];
    grads.weights[l].noalias() += delta * below.transpose();
    grads.biases[l] += delta.rowwise().sum();
    MatrixXd g = params.weights[l].transpose() * delta;
    if (l == 0) return g;
    delta = g.cwiseProduct(
        first_derivative(params.hidden_activation, cache.pre[l - 1], cache.post[l - 1]));
  }
  return {};
}

BackwardResult mlp_backward(const MlpParams& params, const VectorXd& x,
                            const VectorXd& upstream) {
  ForwardCache cache;
  mlp_forward_batch(params, x, &cache);
  BackwardResult result{MlpGrads::zeros_like(params), {}};
  result.input_grad = mlp_backward_batch(params, cache, upstream, result.param_grads);
  return result;
}

void mlp_mixed_grad_batch(const MlpParams& params, const ForwardCache& cache,
                          const MatrixXd& upstream, const MatrixXd& direction,
                          MlpGrads& grads) {
  const int L = params.num_layers();
  if (direction.rows() != params.input_dim() || direction.cols() != cache.inputs.cols())
    throw DimensionError("MLP mixed gradient: direction shape does not match inputs");
  if (upstream.rows() != params.output_dim() || upstream.cols() != cache.inputs.cols())
    throw DimensionError("MLP mixed gradient: upstream shape does not match output batch");

  // Tangent forward pass along the input direction.
  std::vector<MatrixXd> d1(L), d2(L), r_pre(L), r_post(L);
  MatrixXd r_h = direction;
  for (int l = 0; l < L; ++l) {
    const Activation act = layer_activation(params, l);
    d1[l] = first_derivative(act, cache.pre[l], cache.post[l]);
    d2[l] = second_derivative(act, cache.pre[l], cache.post[l]);
    r_pre[l] = params.weights[l] * r_h;
    r_post[l] = d1[l].cwiseProduct(r_pre[l]);
    r_h = r_post[l];
  }

  // Backward pass and its tangent.
  MatrixXd delta = upstream.cwiseProduct(d1[L - 1]);
  MatrixXd r_delta = upstream.cwiseProduct(d2[L - 1]).cwiseProduct(r_pre[L - 1]);
  for (int l = L - 1; l >= 0; --l) {
    const MatrixXd& below = l == 0 ? cache.inputs : cache.post[l - 1];
    const MatrixXd& r_below = l == 0 ? direction : r_post[l - 1];
    grads.weights[l].noalias() += r_delta * below.transpose();
    grads.weights[l].noalias() += delta * r_below.transpose();
    grads.biases[l] += r_delta.rowwise().sum();
    if (l == 0) break;
    const MatrixXd g = params.weights[l].transpose() * delta;
    const MatrixXd r_g = params.weights[l].transpose() * r_delta;
    delta = g.cwiseProduct(d1[l - 1]);
    r_delta = r_g.cwiseProduct(d1[l - 1]) +
              g.cwiseProduct(d2[l - 1]).cwiseProduct(r_pre[l - 1]);
  }
}

AdamState AdamState::for_params(const MlpParams& params, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  s.first = MlpGrads::zeros_like(params);
  s.second = MlpGrads::zeros_like(params);
  return s;
}

namespace {

template <typename Derived, typename GradDerived, typename MomentDerived>
void adam_apply(Eigen::MatrixBase<Derived>& param, const Eigen::MatrixBase<GradDerived>& grad,
                Eigen::MatrixBase<MomentDerived>& m, Eigen::MatrixBase<MomentDerived>& v,
                const AdamConfig& c, std::int64_t step) {
  m = c.beta1 * m + (1.0 - c.beta1) * grad;
  v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  param -= (c.learning_rate * (m.array() / bc1) /
            ((v.array() / bc2).sqrt() + c.epsilon))
               .matrix();
}

}  // namespace

void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state) {
  if (grads.weights.size() != params.weights.size() ||
      state.first.weights.size() != params.weights.size())
    throw DimensionError("Adam: gradient/state layer count does not match parameters");
  for (int l = 0; l < params.num_layers(); ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() ||
        grads.weights[l].cols() != params.weights[l].cols() ||
        grads.biases[l].size() != params.biases[l].size())
      throw DimensionError("Adam: gradient shape mismatch at layer " + std::to_string(l));
    if (!grads.weights[l].allFinite() || !grads.biases[l].allFinite())
      throw NumericError("Adam: non-finite gradient at layer " + std::to_string(l));
  }
  ++state.step;
  for (int l = 0; l < params.num_layers(); ++l) {
    adam_apply(params.weights[l], grads.weights[l], state.first.weights[l],
               state.second.weights[l], state.config, state.step);
    adam_apply(params.biases[l], grads.biases[l], state.first.biases[l],
               state.second.biases[l], state.config, state.step);
  }
}

void adam_update_vector(VectorXd& params, const VectorXd& grads, AdamMoments& moments,
                        const AdamConfig& config, std::int64_t step) {
  if (grads.size() != params.size())
    throw DimensionError("Adam: vector gradient length mismatch");
  if (!grads.allFinite()) throw NumericError("Adam: non-finite vector gradient");
  if (moments.first.size() != params.size()) {
    moments.first = VectorXd::Zero(params.size());
    moments.second = VectorXd::Zero(params.size());
  }
  adam_apply(params, grads, moments.first, moments.second, config, step);
}

}  // namespace gamp::nets
