#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gpal/dataset.hpp"
#include "gpal/train_config.hpp"

namespace gpal::baseline {

/// Linear softmax head over fixed features: p = softmax(W x + b).
struct SoftmaxModel {
  Eigen::MatrixXd weights;  // C x D
  Eigen::VectorXd bias;     // C

  int num_classes() const { return static_cast<int>(weights.rows()); }
  Eigen::Index dim() const { return weights.cols(); }
  void validate() const;
  bool operator==(const SoftmaxModel&) const = default;
};

SoftmaxModel zero_model(int num_classes, Eigen::Index dim);

/// Row-wise class probabilities, n x C.
Eigen::MatrixXd predict_softmax(const SoftmaxModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X);

struct LossAndGrad {
  double loss = 0.0;  // mean cross-entropy
  Eigen::MatrixXd d_weights;
  Eigen::VectorXd d_bias;
};

LossAndGrad cross_entropy(const SoftmaxModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                          std::span<const int> y);

struct SoftmaxTrainResult {
  SoftmaxModel model;
  std::vector<double> loss_trace;  // mean minibatch loss per epoch
};

/// Adam descent on mean cross-entropy, starting from `init` or from zero.
SoftmaxTrainResult train_softmax(const data::FeatureDataset& ds, std::span<const std::size_t> labeled,
                                 const TrainConfig& cfg, const SoftmaxModel* init = nullptr);

}  // namespace gpal::baseline
