#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gamp::nets {

// Numeric ids are part of the frozen-policy file format; do not renumber.
enum class Activation : std::uint32_t {
  kIdentity = 0,
  kTanh = 1,
  kRelu = 2,
  kElu = 3,
  kSigmoid = 4,
};

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Fully-connected network. weights[l] is layer_dims[l+1] x layer_dims[l].
struct MlpParams {
  std::vector<int> layer_dims;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Activation hidden_activation = Activation::kTanh;
  Activation output_activation = Activation::kIdentity;

  int num_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t num_parameters() const;

  // Throws DimensionError / NumericError if shapes or values are invalid.
  void validate() const;
};

// Parameter-shaped accumulator used for gradients and optimizer moments.
struct MlpGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static MlpGrads zeros_like(const MlpParams& params);
  void set_zero();
  void scale(double factor);
  void add(const MlpGrads& other, double factor = 1.0);
  double squared_norm() const;
  bool all_finite() const;
};

// Creates a network with orthogonal weights (gain 1 on hidden layers,
// output_gain on the last layer) and zero biases.
MlpParams make_mlp(const std::vector<int>& layer_dims, Activation hidden,
                   Activation output, double output_gain, std::mt19937_64& rng);

// Zero weights and biases; mostly useful in tests.
MlpParams make_zero_mlp(const std::vector<int>& layer_dims, Activation hidden,
                        Activation output);

// Pre- and post-activation values of each layer for a batch, kept for the
// backward and mixed passes. inputs is column-per-sample.
struct ForwardCache {
  Eigen::MatrixXd inputs;
  std::vector<Eigen::MatrixXd> pre;
  std::vector<Eigen::MatrixXd> post;
};

Eigen::VectorXd mlp_forward(const MlpParams& params, const Eigen::VectorXd& x);

// Batched forward, one sample per column. Fills cache when non-null.
Eigen::MatrixXd mlp_forward_batch(const MlpParams& params,
                                  const Eigen::MatrixXd& inputs,
                                  ForwardCache* cache = nullptr);

struct BackwardResult {
  MlpGrads param_grads;
  Eigen::VectorXd input_grad;
};

// Gradients of (upstream . output) with respect to parameters and input.
BackwardResult mlp_backward(const MlpParams& params, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& upstream);

// Batched backward. Parameter gradients are summed over the batch and added
// into grads; the per-sample input gradients are returned column-wise.
// When upstream_is_preactivation is set, upstream is taken as the gradient
// with respect to the output layer's pre-activation (e.g. a logit), which
// skips the output nonlinearity.
Eigen::MatrixXd mlp_backward_batch(const MlpParams& params,
                                   const ForwardCache& cache,
                                   const Eigen::MatrixXd& upstream,
                                   MlpGrads& grads,
                                   bool upstream_is_preactivation = false);

// Mixed second derivative: for each sample adds
//   d/dtheta [ (d(upstream . output)/dx) . direction ]
// into grads. With direction equal to the input gradient this is half the
// parameter gradient of the squared input-gradient norm, which is what the
// discriminator gradient penalty needs. Exact (forward-over-reverse).
void mlp_mixed_grad_batch(const MlpParams& params, const ForwardCache& cache,
                          const Eigen::MatrixXd& upstream,
                          const Eigen::MatrixXd& direction, MlpGrads& grads);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moments for a flat parameter vector.
struct AdamMoments {
  Eigen::VectorXd first;
  Eigen::VectorXd second;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  MlpGrads first;
  MlpGrads second;

  static AdamState for_params(const MlpParams& params, const AdamConfig& config);
};

// One bias-corrected Adam update. Throws NumericError naming the layer if
// any gradient is non-finite, before anything is modified.
void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state);

// Adam update of a plain vector sharing a step counter owned by the caller.
// step must already be incremented for this update (>= 1).
void adam_update_vector(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
                        AdamMoments& moments, const AdamConfig& config,
                        std::int64_t step);

}  // namespace gamp::nets
