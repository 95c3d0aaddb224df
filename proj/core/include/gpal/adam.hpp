#pragma once

#include <Eigen/Core>

namespace gpal {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over a flat parameter vector. Bias-corrected moments, one state per
/// optimizer instance.
class Adam {
 public:
  Adam(Eigen::Index num_params, AdamConfig cfg);

  /// params -= lr * m_hat / (sqrt(v_hat) + eps)
  void descend(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad);
  /// Same step in the direction of the gradient (for maximized objectives).
  void ascend(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad);

  long steps() const { return steps_; }

 private:
  AdamConfig cfg_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long steps_ = 0;
};

}  // namespace gpal
