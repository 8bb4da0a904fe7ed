#pragma once

#include <Eigen/Dense>

namespace gamp::nets {

// Running per-slot mean and variance, merged batch-wise (Chan et al.).
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(int dim, double epsilon = 1e-8, double clip = 10.0);

  int dim() const { return static_cast<int>(mean_.size()); }
  double count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& variance() const { return var_; }
  double epsilon() const { return epsilon_; }
  double clip() const { return clip_; }

  // batch is column-per-sample.
  void update(const Eigen::MatrixXd& batch);
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& batch) const;

  void set_state(double count, Eigen::VectorXd mean, Eigen::VectorXd var);

 private:
  double count_ = 0.0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd var_;
  double epsilon_ = 1e-8;
  double clip_ = 10.0;
};

}  // namespace gamp::nets
