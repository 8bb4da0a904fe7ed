#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gamp/errors.hpp"
#include "gamp/nets.hpp"
#include "gamp/normalizer.hpp"

namespace gamp::harness {

// File layout, all little-endian:
//   "GAMP" | u32 version | u32 layer count L | u32 dims[L+1]
//   | u32 hidden activation id | u32 output activation id
//   | per layer: f32 weights (row-major, out x in), f32 biases
//   | f32 obs mean[dims[0]] | f32 obs var[dims[0]] | f32 norm epsilon | f32 norm clip
//   | f32 action scale | f32 action min | f32 action max
// Nothing may follow.
inline constexpr std::uint32_t kFrozenVersion = 1;

class FrozenFormatError : public ParseError {
 public:
  using ParseError::ParseError;
};
class FrozenMagicError : public FrozenFormatError {
 public:
  using FrozenFormatError::FrozenFormatError;
};
class FrozenVersionError : public FrozenFormatError {
 public:
  using FrozenFormatError::FrozenFormatError;
};
class FrozenTruncatedError : public FrozenFormatError {
 public:
  using FrozenFormatError::FrozenFormatError;
};

struct FrozenPolicy {
  std::uint32_t version = kFrozenVersion;
  std::vector<std::uint32_t> dims;
  nets::Activation hidden_activation = nets::Activation::kElu;
  nets::Activation output_activation = nets::Activation::kIdentity;
  std::vector<Eigen::MatrixXf> weights;
  std::vector<Eigen::VectorXf> biases;
  Eigen::VectorXf obs_mean;
  Eigen::VectorXf obs_var;
  float norm_epsilon = 1e-8f;
  float norm_clip = 10.0f;
  float action_scale = 0.5f;
  float action_min = -1.0f;
  float action_max = 1.0f;

  int input_dim() const { return static_cast<int>(dims.front()); }
  int output_dim() const { return static_cast<int>(dims.back()); }
};

// Quantizes a trained mean network and observation normalizer to 32-bit.
FrozenPolicy freeze(const nets::MlpParams& mean, const nets::RunningNormalizer& obs_norm,
                    double action_scale);

// Normalizes the raw observation, runs the network and clamps, all in 32-bit.
Eigen::VectorXf frozen_forward(const FrozenPolicy& policy, const Eigen::VectorXf& raw_obs);

std::string frozen_to_bytes(const FrozenPolicy& policy);
FrozenPolicy frozen_from_bytes(const std::string& bytes);
void export_frozen(const FrozenPolicy& policy, const std::string& path);
FrozenPolicy load_frozen(const std::string& path);

}  // namespace gamp::harness
