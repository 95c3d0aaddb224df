#include "gpal/gp_math.hpp"

#include <algorithm>
#include <sstream>
#include <vector>

#include <Eigen/Cholesky>

#include "gpal/error.hpp"

namespace gpal::gp {

double rbf(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
           const KernelParams& p) {
  if (a.size() != b.size()) throw ValidationError("rbf: dimension mismatch");
  const double r2 = (a - b).squaredNorm();
  const double l = p.lengthscale();
  return p.variance() * std::exp(-r2 / (2.0 * l * l));
}

Eigen::MatrixXd squared_distances(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  const Eigen::Ref<const Eigen::MatrixXd>& Y) {
  if (X.cols() != Y.cols()) throw ValidationError("gram: dimension mismatch");
  Eigen::MatrixXd r2(X.rows(), Y.rows());
  // Direct differences: the |x|^2 + |y|^2 - 2xy expansion loses the exact
  // zero on the diagonal, which the prior-variance identities rely on.
  for (Eigen::Index j = 0; j < Y.rows(); ++j)
    r2.col(j) = (X.rowwise() - Y.row(j)).rowwise().squaredNorm();
  return r2;
}

Eigen::MatrixXd gram(const Eigen::Ref<const Eigen::MatrixXd>& X,
                     const Eigen::Ref<const Eigen::MatrixXd>& Y, const KernelParams& p) {
  const double l = p.lengthscale();
  const double inv = -1.0 / (2.0 * l * l);
  return (squared_distances(X, Y) * inv).array().exp().matrix() * p.variance();
}

Eigen::VectorXd kernel_diag(Eigen::Index n, const KernelParams& p) {
  return Eigen::VectorXd::Constant(n, p.variance());
}

CholeskyFactor cholesky(const Eigen::Ref<const Eigen::MatrixXd>& A, double jitter) {
  if (A.rows() != A.cols()) throw ValidationError("cholesky: matrix is not square");
  if (!(jitter >= 0.0)) throw ValidationError("cholesky: jitter must be >= 0");
  if (A.size() > 0) {
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw ValidationError("cholesky: matrix is not symmetric");
  }

  const Eigen::Index m = A.rows();
  const double mean_diag = m > 0 ? A.diagonal().mean() : 0.0;
  std::vector<double> ladder{jitter};
  for (double rel = kJitterLadderStart; rel <= kJitterLadderStop * 1.0000001; rel *= 10.0) {
    const double j = rel * std::abs(mean_diag);
    if (j > ladder.back()) ladder.push_back(j);
  }

  std::vector<double> tried;
  Eigen::MatrixXd work;
  for (double j : ladder) {
    tried.push_back(j);
    work = A;
    work.diagonal().array() += j;
    Eigen::LLT<Eigen::MatrixXd> llt(work);
    if (llt.info() != Eigen::Success) continue;
    CholeskyFactor f{llt.matrixL(), j};
    if ((f.lower.diagonal().array() > 0.0).all() && f.lower.allFinite()) return f;
  }
  std::ostringstream msg;
  msg << "cholesky: matrix not positive definite after jitter ladder [";
  for (std::size_t i = 0; i < tried.size(); ++i) msg << (i ? ", " : "") << tried[i];
  msg << "]";
  throw NumericalError(msg.str(), std::move(tried));
}

Eigen::MatrixXd tri_solve(const CholeskyFactor& L, const Eigen::Ref<const Eigen::MatrixXd>& B,
                          TriSide side) {
  if (B.rows() != L.order()) throw ValidationError("tri_solve: shape mismatch");
  if (side == TriSide::Lower) return L.lower.triangularView<Eigen::Lower>().solve(B);
  return L.lower.triangularView<Eigen::Lower>().transpose().solve(B);
}

double gauss_kl_whitened(const Eigen::Ref<const Eigen::VectorXd>& m,
                         const Eigen::Ref<const Eigen::MatrixXd>& L_S) {
  const Eigen::Index M = m.size();
  if (L_S.rows() != M || L_S.cols() != M) throw ValidationError("gauss_kl_whitened: shape mismatch");
  if (!(L_S.diagonal().array() > 0.0).all())
    throw ValidationError("gauss_kl_whitened: diagonal of L_S must be positive");
  const auto lower = L_S.triangularView<Eigen::Lower>();
  const double trace = Eigen::MatrixXd(lower).squaredNorm();
  const double logdet = L_S.diagonal().array().log().sum();
  return 0.5 * (m.squaredNorm() + trace - static_cast<double>(M) - 2.0 * logdet);
}

}  // namespace gpal::gp
