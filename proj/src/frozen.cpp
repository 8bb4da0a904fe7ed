#include "gamp/frozen.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace gamp::harness {

namespace {

constexpr char kMagic[4] = {'G', 'A', 'M', 'P'};
constexpr std::uint32_t kMaxDim = 1u << 16;
constexpr std::uint32_t kMaxLayers = 64;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : b_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) {
      std::ostringstream msg;
      msg << "frozen policy truncated while reading " << what << " at byte " << pos_ << " (file has "
          << b_.size() << " bytes)";
      throw FrozenTruncatedError(msg.str());
    }
  }
  std::size_t remaining() const { return b_.size() - pos_; }
  std::size_t pos() const { return pos_; }
  const char* data() const { return b_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

float activate(nets::Activation a, float x) {
  switch (a) {
    case nets::Activation::kIdentity: return x;
    case nets::Activation::kTanh: return std::tanh(x);
    case nets::Activation::kRelu: return x > 0.0f ? x : 0.0f;
    case nets::Activation::kElu: return x > 0.0f ? x : std::expm1(x);
    case nets::Activation::kSigmoid: return 1.0f / (1.0f + std::exp(-x));
  }
  return x;
}

nets::Activation activation_id(std::uint32_t id) {
  if (id > static_cast<std::uint32_t>(nets::Activation::kSigmoid))
    throw FrozenFormatError("frozen policy has unknown activation id " + std::to_string(id));
  return static_cast<nets::Activation>(id);
}

}  // namespace

FrozenPolicy freeze(const nets::MlpParams& mean, const nets::RunningNormalizer& obs_norm,
                    double action_scale) {
  mean.validate();
  if (obs_norm.dim() != mean.input_dim())
    throw DimensionError("freeze: normalizer has " + std::to_string(obs_norm.dim()) +
                         " slots, network expects " + std::to_string(mean.input_dim()));
  FrozenPolicy f;
  for (int d : mean.layer_dims) f.dims.push_back(static_cast<std::uint32_t>(d));
  f.hidden_activation = mean.hidden_activation;
  f.output_activation = mean.output_activation;
  for (int l = 0; l < mean.num_layers(); ++l) {
    f.weights.push_back(mean.weights[l].cast<float>());
    f.biases.push_back(mean.biases[l].cast<float>());
  }
  f.obs_mean = obs_norm.mean().cast<float>();
  f.obs_var = obs_norm.variance().cast<float>();
  f.norm_epsilon = static_cast<float>(obs_norm.epsilon());
  f.norm_clip = static_cast<float>(obs_norm.clip());
  f.action_scale = static_cast<float>(action_scale);
  return f;
}

Eigen::VectorXf frozen_forward(const FrozenPolicy& p, const Eigen::VectorXf& raw_obs) {
  if (raw_obs.size() != p.input_dim())
    throw DimensionError("frozen policy expects " + std::to_string(p.input_dim()) +
                         " observation entries, got " + std::to_string(raw_obs.size()));
  Eigen::VectorXf h(raw_obs.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const float z = (raw_obs[i] - p.obs_mean[i]) / std::sqrt(p.obs_var[i] + p.norm_epsilon);
    h[i] = std::clamp(z, -p.norm_clip, p.norm_clip);
  }
  const std::size_t layers = p.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::VectorXf a = p.weights[l] * h + p.biases[l];
    const nets::Activation act = l + 1 == layers ? p.output_activation : p.hidden_activation;
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = activate(act, a[i]);
    h = std::move(a);
  }
  for (Eigen::Index i = 0; i < h.size(); ++i) h[i] = std::clamp(h[i], p.action_min, p.action_max);
  return h;
}

std::string frozen_to_bytes(const FrozenPolicy& p) {
  if (p.dims.size() < 2 || p.weights.size() + 1 != p.dims.size() || p.biases.size() != p.weights.size())
    throw DimensionError("frozen policy: dims and layer count disagree");
  Writer w;
  w.raw(kMagic, 4);
  w.u32(p.version);
  w.u32(static_cast<std::uint32_t>(p.weights.size()));
  for (std::uint32_t d : p.dims) w.u32(d);
  w.u32(static_cast<std::uint32_t>(p.hidden_activation));
  w.u32(static_cast<std::uint32_t>(p.output_activation));
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const Eigen::MatrixXf& W = p.weights[l];
    if (W.rows() != p.dims[l + 1] || W.cols() != p.dims[l] || p.biases[l].size() != W.rows())
      throw DimensionError("frozen policy: layer " + std::to_string(l) + " shape mismatch");
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) w.f32(W(r, c));
    for (Eigen::Index r = 0; r < W.rows(); ++r) w.f32(p.biases[l][r]);
  }
  if (p.obs_mean.size() != p.dims[0] || p.obs_var.size() != p.dims[0])
    throw DimensionError("frozen policy: normalizer size mismatch");
  for (float v : p.obs_mean) w.f32(v);
  for (float v : p.obs_var) w.f32(v);
  w.f32(p.norm_epsilon);
  w.f32(p.norm_clip);
  w.f32(p.action_scale);
  w.f32(p.action_min);
  w.f32(p.action_max);
  return w.take();
}

FrozenPolicy frozen_from_bytes(const std::string& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(r.data(), kMagic, 4) != 0) throw FrozenMagicError("not a frozen policy file (bad magic)");
  r.skip(4);
  FrozenPolicy p;
  p.version = r.u32("version");
  if (p.version != kFrozenVersion)
    throw FrozenVersionError("unsupported frozen policy version " + std::to_string(p.version) +
                             " (this build reads version " + std::to_string(kFrozenVersion) + ")");
  const std::uint32_t layers = r.u32("layer count");
  if (layers == 0 || layers > kMaxLayers)
    throw FrozenFormatError("frozen policy has invalid layer count " + std::to_string(layers));
  std::uint64_t floats = 0;
  for (std::uint32_t i = 0; i <= layers; ++i) {
    const std::uint32_t d = r.u32("layer dims");
    if (d == 0 || d > kMaxDim)
      throw FrozenFormatError("frozen policy has invalid layer width " + std::to_string(d));
    p.dims.push_back(d);
  }
  p.hidden_activation = activation_id(r.u32("hidden activation"));
  p.output_activation = activation_id(r.u32("output activation"));
  for (std::uint32_t l = 0; l < layers; ++l)
    floats += static_cast<std::uint64_t>(p.dims[l + 1]) * (p.dims[l] + 1);
  floats += 2ull * p.dims[0] + 5;
  const std::uint64_t expected = floats * 4;
  if (r.remaining() < expected) {
    std::ostringstream msg;
    msg << "frozen policy truncated: payload needs " << expected << " bytes after the header, file has "
        << r.remaining();
    throw FrozenTruncatedError(msg.str());
  }
  if (r.remaining() > expected)
    throw FrozenFormatError("frozen policy has " + std::to_string(r.remaining() - expected) +
                            " unexpected trailing bytes");
  for (std::uint32_t l = 0; l < layers; ++l) {
    Eigen::MatrixXf W(p.dims[l + 1], p.dims[l]);
    for (Eigen::Index row = 0; row < W.rows(); ++row)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(row, c) = r.f32("weights");
    Eigen::VectorXf b(p.dims[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = r.f32("biases");
    p.weights.push_back(std::move(W));
    p.biases.push_back(std::move(b));
  }
  p.obs_mean.resize(p.dims[0]);
  p.obs_var.resize(p.dims[0]);
  for (Eigen::Index i = 0; i < p.obs_mean.size(); ++i) p.obs_mean[i] = r.f32("observation mean");
  for (Eigen::Index i = 0; i < p.obs_var.size(); ++i) p.obs_var[i] = r.f32("observation variance");
  p.norm_epsilon = r.f32("normalizer epsilon");
  p.norm_clip = r.f32("normalizer clip");
  p.action_scale = r.f32("action scale");
  p.action_min = r.f32("action min");
  p.action_max = r.f32("action max");
  return p;
}

void export_frozen(const FrozenPolicy& policy, const std::string& path) {
  const std::string bytes = frozen_to_bytes(policy);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write frozen policy to '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing frozen policy to '" + path + "'");
}

FrozenPolicy load_frozen(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open frozen policy '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return frozen_from_bytes(bytes);
}

}  // namespace gamp::harness
