#pragma once

#include <cmath>

#include <Eigen/Core>

namespace gpal::gp {

/// RBF hyperparameters, stored in log space so unconstrained optimizer
/// steps keep lengthscale and variance positive.
struct KernelParams {
  double log_lengthscale = 0.0;
  double log_variance = 0.0;

  double lengthscale() const { return std::exp(log_lengthscale); }
  double variance() const { return std::exp(log_variance); }

  bool operator==(const KernelParams&) const = default;
};

/// k(a, b) = variance * exp(-|a - b|^2 / (2 lengthscale^2)).
double rbf(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
           const KernelParams& p);

/// Pairwise squared Euclidean distances between the rows of X and Y.
Eigen::MatrixXd squared_distances(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  const Eigen::Ref<const Eigen::MatrixXd>& Y);

/// Kernel matrix between the rows of X (n x D) and Y (m x D).
Eigen::MatrixXd gram(const Eigen::Ref<const Eigen::MatrixXd>& X,
                     const Eigen::Ref<const Eigen::MatrixXd>& Y, const KernelParams& p);

/// k(x, x) for n inputs: constant variance for a stationary kernel.
Eigen::VectorXd kernel_diag(Eigen::Index n, const KernelParams& p);

/// Lower Cholesky factor of A + jitter I. `jitter` is the value that
/// actually succeeded, which may be larger than the one requested.
struct CholeskyFactor {
  Eigen::MatrixXd lower;
  double jitter = 0.0;

  Eigen::Index order() const { return lower.rows(); }
  Eigen::MatrixXd reconstruct() const { return lower * lower.transpose(); }
};

/// Relative jitter ladder bounds (multiples of mean(diag(A))).
inline constexpr double kJitterLadderStart = 1e-8;
inline constexpr double kJitterLadderStop = 1e-2;

/**
 * Factors A + jitter I. If that fails, retries with jitter stepping through
 * 1e-8 * mean(diag A), 1e-7 * mean(diag A), ..., 1e-2 * mean(diag A)
 * (skipping rungs not larger than the requested jitter).
 *
 * Throws ValidationError for a non-square or asymmetric A, and
 * NumericalError carrying every jitter tried when no rung succeeds.
 */
CholeskyFactor cholesky(const Eigen::Ref<const Eigen::MatrixXd>& A, double jitter);

enum class TriSide { Lower, LowerTranspose };

/// Solves L X = B (Lower) or L^T X = B (LowerTranspose).
Eigen::MatrixXd tri_solve(const CholeskyFactor& L, const Eigen::Ref<const Eigen::MatrixXd>& B,
                          TriSide side);

/// KL(N(m, L_S L_S^T) || N(0, I)). L_S must be lower triangular with a
/// positive diagonal.
double gauss_kl_whitened(const Eigen::Ref<const Eigen::VectorXd>& m,
                         const Eigen::Ref<const Eigen::MatrixXd>& L_S);

}  // namespace gpal::gp
