#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gpal/dataset.hpp"
#include "gpal/gp_math.hpp"
#include "gpal/train_config.hpp"

namespace gpal::svgp {

/**
 * Multi-class sparse variational GP with a softmax likelihood.
 *
 * One latent GP per class, all sharing a single RBF kernel and one set of
 * inducing inputs. The variational posterior over inducing values is stored
 * in whitened coordinates: u_c = L v_c with K_zz = L L^T and
 * q(v_c) = N(q_mu[c], q_sqrt[c] q_sqrt[c]^T), so the prior on v_c is N(0, I).
 */
struct SvgpModel {
  Eigen::MatrixXd inducing;              // M x D
  std::vector<Eigen::VectorXd> q_mu;     // C entries of length M
  std::vector<Eigen::MatrixXd> q_sqrt;   // C lower-triangular M x M
  gp::KernelParams kernel;
  int mc_samples = 256;                  // draws per point for ELBO expectations
  int mc_samples_predict = 512;          // draws per point for predict_proba
  double jitter = gp::kJitterLadderStart;  // relative to the kernel variance

  int num_classes() const { return static_cast<int>(q_mu.size()); }
  Eigen::Index num_inducing() const { return inducing.rows(); }
  Eigen::Index dim() const { return inducing.cols(); }

  void validate() const;
  bool operator==(const SvgpModel&) const = default;
};

/// q(f) marginals, n x C.
struct PredictiveLatent {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd var;
};

/// Monte Carlo mean and unbiased variance of softmax class probabilities, n x C.
struct ClassPosterior {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd var;

  Eigen::Index size() const { return mean.rows(); }
  int num_classes() const { return static_cast<int>(mean.cols()); }
};

/// Variance below this is an error rather than roundoff.
inline constexpr double kVarianceClampFloor = -1e-12;

/**
 * Fresh model over the labeled rows: Z is a seeded uniform subsample of M
 * distinct labeled rows (all rows if fewer, with a warning), q_mu = 0,
 * q_sqrt = I, lengthscale from the median pairwise distance, variance 1.
 * Warnings are logged and, when `warnings` is given, appended there too.
 */
SvgpModel init_model(const data::FeatureDataset& ds, std::span<const std::size_t> labeled,
                     std::size_t num_inducing, std::uint64_t seed,
                     std::vector<std::string>* warnings = nullptr);

PredictiveLatent predict_latent(const SvgpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X);

/// Softmax Monte Carlo over given latent marginals. Noise is Latin hypercube
/// stratified per class: over the S draws of one row, each class's standard
/// normal visits every 1/S quantile stratum exactly once. Deterministic per seed.
ClassPosterior proba_from_latent(const PredictiveLatent& latent, int mc_samples, std::uint64_t seed);

ClassPosterior predict_proba(const SvgpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                             int mc_samples, std::uint64_t seed);

/// Gradient of elbo() with respect to every parameter group.
struct SvgpGradient {
  double value = 0.0;  // the ELBO estimate the gradient belongs to
  std::vector<Eigen::VectorXd> q_mu;
  std::vector<Eigen::MatrixXd> q_sqrt;  // strict upper triangle is zero
  double log_lengthscale = 0.0;
  double log_variance = 0.0;
  Eigen::MatrixXd inducing;
};

/**
 * scale * sum_batch E[log softmax(f)_y] - sum_c KL(q(v_c) || N(0, I)).
 * The expectation uses model.mc_samples reparameterized draws per point,
 * with noise fixed by `seed`, so repeated calls agree to the last bit.
 */
double elbo(const SvgpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
            std::span<const int> y, double scale, std::uint64_t seed);

SvgpGradient elbo_grad(const SvgpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                       std::span<const int> y, double scale, std::uint64_t seed);

struct TrainResult {
  SvgpModel model;
  std::vector<double> elbo_trace;  // mean minibatch ELBO per epoch
};

/// Adam ascent on the ELBO over shuffled minibatches of the labeled rows.
TrainResult train(SvgpModel model, const data::FeatureDataset& ds,
                  std::span<const std::size_t> labeled, const TrainConfig& cfg);

/// Median of pairwise Euclidean distances between rows (0 for fewer than 2 rows).
double median_pairwise_distance(const Eigen::Ref<const Eigen::MatrixXd>& X);

}  // namespace gpal::svgp
