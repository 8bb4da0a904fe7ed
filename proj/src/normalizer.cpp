#include "gamp/normalizer.hpp"

#include "gamp/errors.hpp"

namespace gamp::nets {

RunningNormalizer::RunningNormalizer(int dim, double epsilon, double clip)
    : mean_(Eigen::VectorXd::Zero(dim)),
      var_(Eigen::VectorXd::Ones(dim)),
      epsilon_(epsilon),
      clip_(clip) {}

void RunningNormalizer::update(const Eigen::MatrixXd& batch) {
  if (batch.rows() != dim())
    throw DimensionError("normalizer update: expected " + std::to_string(dim()) +
                         " rows, got " + std::to_string(batch.rows()));
  const double n = static_cast<double>(batch.cols());
  if (n == 0.0) return;
  const Eigen::VectorXd batch_mean = batch.rowwise().mean();
  const Eigen::VectorXd batch_var =
      (batch.colwise() - batch_mean).array().square().rowwise().sum().matrix() / n;
  if (count_ == 0.0) {
    mean_ = batch_mean;
    var_ = batch_var;
    count_ = n;
    return;
  }
  const double total = count_ + n;
  const Eigen::VectorXd delta = batch_mean - mean_;
  mean_ += delta * (n / total);
  var_ = (var_ * count_ + batch_var * n + delta.cwiseAbs2() * (count_ * n / total)) / total;
  count_ = total;
}

Eigen::MatrixXd RunningNormalizer::normalize(const Eigen::MatrixXd& batch) const {
  if (batch.rows() != dim())
    throw DimensionError("normalizer: expected " + std::to_string(dim()) + " rows, got " +
                         std::to_string(batch.rows()));
  const Eigen::VectorXd inv_std = (var_.array() + epsilon_).rsqrt().matrix();
  Eigen::MatrixXd out = (batch.colwise() - mean_).array().colwise() * inv_std.array();
  return out.cwiseMax(-clip_).cwiseMin(clip_);
}

void RunningNormalizer::set_state(double count, Eigen::VectorXd mean, Eigen::VectorXd var) {
  if (mean.size() != var.size()) throw DimensionError("normalizer state size mismatch");
  count_ = count;
  mean_ = std::move(mean);
  var_ = std::move(var);
}

}  // namespace gamp::nets
