#include "gpal/softmax_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "gpal/adam.hpp"
#include "gpal/error.hpp"
#include "gpal/seed.hpp"

namespace gpal::baseline {

void SoftmaxModel::validate() const {
  if (weights.rows() < 2) throw ValidationError("softmax model needs at least two classes");
  if (bias.size() != weights.rows()) throw ValidationError("bias length != class count");
  if (!weights.allFinite() || !bias.allFinite()) throw ValidationError("non-finite softmax parameters");
}

SoftmaxModel zero_model(int num_classes, Eigen::Index dim) {
  return {Eigen::MatrixXd::Zero(num_classes, dim), Eigen::VectorXd::Zero(num_classes)};
}

Eigen::MatrixXd predict_softmax(const SoftmaxModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  model.validate();
  if (X.cols() != model.dim()) throw ValidationError("predict_softmax: dimension mismatch");
  Eigen::MatrixXd logits = (X * model.weights.transpose()).rowwise() + model.bias.transpose();
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  logits.colwise() -= row_max;
  logits = logits.array().exp();
  const Eigen::VectorXd z = logits.rowwise().sum();
  return z.cwiseInverse().asDiagonal() * logits;
}

LossAndGrad cross_entropy(const SoftmaxModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                          std::span<const int> y) {
  if (static_cast<Eigen::Index>(y.size()) != X.rows() || y.empty())
    throw ValidationError("cross_entropy: label count != batch rows");
  const int C = model.num_classes();
  Eigen::MatrixXd residual = predict_softmax(model, X);  // becomes P - Y
  LossAndGrad out;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int yi = y[static_cast<std::size_t>(i)];
    if (yi < 0 || yi >= C) throw ValidationError("label out of range: " + std::to_string(yi));
    out.loss -= std::log(std::max(residual(i, yi), 1e-300));
    residual(i, yi) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(X.rows());
  out.loss *= inv_n;
  out.d_weights = residual.transpose() * X * inv_n;
  out.d_bias = residual.colwise().sum().transpose() * inv_n;
  return out;
}

SoftmaxTrainResult train_softmax(const data::FeatureDataset& ds, std::span<const std::size_t> labeled,
                                 const TrainConfig& cfg, const SoftmaxModel* init) {
  cfg.validate();
  if (labeled.empty()) throw ValidationError("train_softmax: empty labeled set");
  const Eigen::MatrixXd X = ds.rows(labeled);
  std::vector<int> y;
  y.reserve(labeled.size());
  for (auto i : labeled) y.push_back(ds.label_at(i));

  const int C = ds.num_classes();
  const Eigen::Index D = X.cols();
  SoftmaxTrainResult out{zero_model(C, D), {}};
  if (init) {
    init->validate();
    if (init->num_classes() != C || init->dim() != D)
      throw ValidationError("train_softmax: initial model shape mismatch");
    out.model = *init;
  }
  Eigen::VectorXd params(C * D + C);
  params.head(C * D) = Eigen::Map<const Eigen::VectorXd>(out.model.weights.data(), C * D);
  params.tail(C) = out.model.bias;
  Adam adam(params.size(), AdamConfig{.learning_rate = cfg.learning_rate});

  const std::size_t n = labeled.size();
  const std::size_t bs = cfg.minibatch_size == 0 ? n : std::min(cfg.minibatch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(cfg.seed, {0x5348554646ull}));
  Eigen::MatrixXd Xb;
  std::vector<int> yb;
  Eigen::VectorXd grad(params.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += bs, ++batches) {
      const std::size_t len = std::min(bs, n - start);
      Xb.resize(static_cast<Eigen::Index>(len), D);
      yb.resize(len);
      for (std::size_t r = 0; r < len; ++r) {
        Xb.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(order[start + r]));
        yb[r] = y[order[start + r]];
      }
      const auto g = cross_entropy(out.model, Xb, yb);
      sum += g.loss;
      grad.head(C * D) = Eigen::Map<const Eigen::VectorXd>(g.d_weights.data(), C * D);
      grad.tail(C) = g.d_bias;
      adam.descend(params, grad);
      out.model.weights = Eigen::Map<const Eigen::MatrixXd>(params.data(), C, D);
      out.model.bias = params.tail(C);
    }
    out.loss_trace.push_back(sum / batches);
  }
  return out;
}

}  // namespace gpal::baseline
