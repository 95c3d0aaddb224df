#include "gpal/adam.hpp"

#include <cmath>

#include "gpal/error.hpp"

namespace gpal {

Adam::Adam(Eigen::Index num_params, AdamConfig cfg)
    : cfg_(cfg), m_(Eigen::VectorXd::Zero(num_params)), v_(Eigen::VectorXd::Zero(num_params)) {
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("Adam: learning rate must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
    throw ValidationError("Adam: decay rates must lie in [0, 1)");
}

void Adam::descend(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw ValidationError("Adam: parameter count changed");
  ++steps_;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  params.array() -= cfg_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.epsilon);
}

void Adam::ascend(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad) {
  descend(params, -grad);
}

}  // namespace gpal
