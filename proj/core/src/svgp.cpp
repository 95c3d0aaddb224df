#include "gpal/svgp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "gpal/adam.hpp"
#include "gpal/error.hpp"
#include "gpal/log.hpp"
#include "gpal/seed.hpp"

namespace gpal::svgp {
namespace {

// Keeps stratified uniforms off the endpoints where the normal quantile is infinite.
constexpr double kUnitFloor = 1e-15;

// Shared forward pass. Everything the gradient needs is kept here.
struct Forward {
  Eigen::MatrixXd kzz;        // noiseless K_zz
  gp::CholeskyFactor chol;    // of K_zz + jitter I
  Eigen::MatrixXd r2zx;       // squared distances Z to X
  Eigen::MatrixXd kzx;
  Eigen::MatrixXd a;          // L^{-1} K_zx, M x n
  Eigen::MatrixXd mean;       // n x C
  Eigen::MatrixXd var;        // n x C, clamped
  Eigen::MatrixXd var_active; // 1 where the variance was not clamped
};

Forward forward(const SvgpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  model.validate();
  if (X.cols() != model.dim())
    throw ValidationError("input dimension " + std::to_string(X.cols()) + " != model dimension " +
                          std::to_string(model.dim()));
  Forward fw;
  const double sf2 = model.kernel.variance();
  fw.kzz = gp::gram(model.inducing, model.inducing, model.kernel);
  fw.chol = gp::cholesky(fw.kzz, model.jitter * sf2);
  fw.r2zx = gp::squared_distances(model.inducing, X);
  const double l = model.kernel.lengthscale();
  fw.kzx = (fw.r2zx * (-1.0 / (2.0 * l * l))).array().exp().matrix() * sf2;
  fw.a = gp::tri_solve(fw.chol, fw.kzx, gp::TriSide::Lower);

  const Eigen::Index n = X.rows();
  const int C = model.num_classes();
  fw.mean.resize(n, C);
  fw.var.resize(n, C);
  fw.var_active.resize(n, C);
  const Eigen::VectorXd prior_var = Eigen::VectorXd::Constant(n, sf2) - fw.a.colwise().squaredNorm().transpose();
  for (int c = 0; c < C; ++c) {
    fw.mean.col(c) = fw.a.transpose() * model.q_mu[c];
    const Eigen::MatrixXd b = model.q_sqrt[c].triangularView<Eigen::Lower>().transpose() * fw.a;
    fw.var.col(c) = prior_var + b.colwise().squaredNorm().transpose();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < C; ++c) {
      double& v = fw.var(i, c);
      if (v < 0.0) {
        if (v < kVarianceClampFloor)
          throw NumericalError("negative predictive variance " + std::to_string(v));
        v = 0.0;
      }
      fw.var_active(i, c) = v > 0.0 ? 1.0 : 0.0;
    }
  }
  return fw;
}

void check_labels(std::span<const int> y, Eigen::Index n, int num_classes) {
  if (static_cast<Eigen::Index>(y.size()) != n) throw ValidationError("label count != batch rows");
  for (int v : y)
    if (v < 0 || v >= num_classes) throw ValidationError("label out of range: " + std::to_string(v));
}

// Monte Carlo log-likelihood with optional gradients wrt latent mean/variance.
double expected_loglik(const Forward& fw, std::span<const int> y, int S, std::uint64_t seed,
                       Eigen::MatrixXd* g_mean, Eigen::MatrixXd* g_var) {
  const Eigen::Index n = fw.mean.rows();
  const Eigen::Index C = fw.mean.cols();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd eps(C), f(C), p(C), sd(C);
  if (g_mean) g_mean->setZero(n, C);
  if (g_var) g_var->setZero(n, C);
  double total = 0.0;
  const double inv_s = 1.0 / static_cast<double>(S);
  for (Eigen::Index i = 0; i < n; ++i) {
    sd = fw.var.row(i).transpose().cwiseSqrt();
    const int yi = y[static_cast<std::size_t>(i)];
    double row_sum = 0.0;
    for (int s = 0; s < S; ++s) {
      for (Eigen::Index c = 0; c < C; ++c) eps(c) = normal(rng);
      f = fw.mean.row(i).transpose() + sd.cwiseProduct(eps);
      const double fmax = f.maxCoeff();
      p = (f.array() - fmax).exp();
      const double z = p.sum();
      row_sum += f(yi) - fmax - std::log(z);
      if (g_mean) {
        p /= z;
        for (Eigen::Index c = 0; c < C; ++c) {
          const double g = (c == yi ? 1.0 : 0.0) - p(c);
          (*g_mean)(i, c) += g * inv_s;
          if (sd(c) > 0.0) (*g_var)(i, c) += g * eps(c) / (2.0 * sd(c)) * inv_s;
        }
      }
    }
    total += row_sum * inv_s;
  }
  return total;
}

// tril(X) with the diagonal halved.
Eigen::MatrixXd phi(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x.triangularView<Eigen::Lower>();
  out.diagonal() *= 0.5;
  return out;
}

// Packing order: q_mu, lower triangles of q_sqrt (column-major), then
// optionally log lengthscale, log variance, and inducing inputs.
struct Layout {
  int C;
  Eigen::Index M, D;
  bool hyper, inducing;

  Eigen::Index tri() const { return M * (M + 1) / 2; }
  Eigen::Index size() const {
    return C * M + C * tri() + (hyper ? 2 : 0) + (inducing ? M * D : 0);
  }
};

Eigen::VectorXd pack(const Layout& lay, const std::vector<Eigen::VectorXd>& mu,
                     const std::vector<Eigen::MatrixXd>& sq, double log_l, double log_v,
                     const Eigen::MatrixXd& z) {
  Eigen::VectorXd out(lay.size());
  Eigen::Index k = 0;
  for (int c = 0; c < lay.C; ++c)
    for (Eigen::Index i = 0; i < lay.M; ++i) out(k++) = mu[c](i);
  for (int c = 0; c < lay.C; ++c)
    for (Eigen::Index j = 0; j < lay.M; ++j)
      for (Eigen::Index i = j; i < lay.M; ++i) out(k++) = sq[c](i, j);
  if (lay.hyper) {
    out(k++) = log_l;
    out(k++) = log_v;
  }
  if (lay.inducing)
    for (Eigen::Index j = 0; j < lay.D; ++j)
      for (Eigen::Index i = 0; i < lay.M; ++i) out(k++) = z(i, j);
  return out;
}

void unpack(const Layout& lay, const Eigen::VectorXd& v, SvgpModel& m) {
  Eigen::Index k = 0;
  for (int c = 0; c < lay.C; ++c)
    for (Eigen::Index i = 0; i < lay.M; ++i) m.q_mu[c](i) = v(k++);
  for (int c = 0; c < lay.C; ++c)
    for (Eigen::Index j = 0; j < lay.M; ++j)
      for (Eigen::Index i = j; i < lay.M; ++i) m.q_sqrt[c](i, j) = v(k++);
  if (lay.hyper) {
    m.kernel.log_lengthscale = v(k++);
    m.kernel.log_variance = v(k++);
  }
  if (lay.inducing)
    for (Eigen::Index j = 0; j < lay.D; ++j)
      for (Eigen::Index i = 0; i < lay.M; ++i) m.inducing(i, j) = v(k++);
}

}  // namespace

void SvgpModel::validate() const {
  const Eigen::Index M = inducing.rows();
  if (M < 1) throw ValidationError("model needs at least one inducing point");
  if (inducing.cols() < 1) throw ValidationError("model dimension must be >= 1");
  if (q_mu.size() < 2 || q_sqrt.size() != q_mu.size())
    throw ValidationError("model needs at least two classes with matching q_mu/q_sqrt");
  if (!inducing.allFinite()) throw ValidationError("non-finite inducing inputs");
  if (!std::isfinite(kernel.log_lengthscale) || !std::isfinite(kernel.log_variance))
    throw ValidationError("non-finite kernel parameters");
  if (mc_samples < 1 || mc_samples_predict < 2) throw ValidationError("mc sample counts too small");
  for (std::size_t c = 0; c < q_mu.size(); ++c) {
    if (q_mu[c].size() != M || q_sqrt[c].rows() != M || q_sqrt[c].cols() != M)
      throw ValidationError("variational parameter shape mismatch");
    if (!(q_sqrt[c].diagonal().array() > 0.0).all())
      throw ValidationError("q_sqrt diagonal must be positive");
    if (!q_sqrt[c].isLowerTriangular(0.0)) throw ValidationError("q_sqrt must be lower triangular");
  }
}

double median_pairwise_distance(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  const Eigen::Index n = X.rows();
  if (n < 2) return 0.0;
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((X.row(i) - X.row(j)).norm());
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(d.begin(), mid);
  return 0.5 * (lo + hi);
}

SvgpModel init_model(const data::FeatureDataset& ds, std::span<const std::size_t> labeled,
                     std::size_t num_inducing, std::uint64_t seed,
                     std::vector<std::string>* warnings) {
  if (labeled.empty()) throw ValidationError("init_model: empty labeled set");
  if (num_inducing < 1) throw ValidationError("init_model: need at least one inducing point");
  auto warn = [&](const std::string& msg) {
    log().warn("{}", msg);
    if (warnings) warnings->push_back(msg);
  };

  const int C = ds.num_classes();
  std::vector<bool> present(static_cast<std::size_t>(C), false);
  for (auto i : labeled) present[static_cast<std::size_t>(ds.label_at(i))] = true;
  for (int c = 0; c < C; ++c)
    if (!present[static_cast<std::size_t>(c)])
      warn("class '" + ds.class_names[static_cast<std::size_t>(c)] + "' absent from labeled set");

  std::size_t M = num_inducing;
  if (M > labeled.size()) {
    warn("inducing count " + std::to_string(M) + " capped to labeled size " +
         std::to_string(labeled.size()));
    M = labeled.size();
  }

  std::vector<std::size_t> pick(labeled.begin(), labeled.end());
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: first M entries are a uniform sample without replacement.
  for (std::size_t k = 0; k < M; ++k) {
    std::uniform_int_distribution<std::size_t> u(k, pick.size() - 1);
    std::swap(pick[k], pick[u(rng)]);
  }
  pick.resize(M);

  SvgpModel m;
  m.inducing = ds.rows(pick);
  const auto Mi = static_cast<Eigen::Index>(M);
  m.q_mu.assign(static_cast<std::size_t>(C), Eigen::VectorXd::Zero(Mi));
  m.q_sqrt.assign(static_cast<std::size_t>(C), Eigen::MatrixXd::Identity(Mi, Mi));
  const double med = median_pairwise_distance(ds.rows(labeled));
  m.kernel.log_lengthscale = med > 0.0 ? std::log(med) : 0.0;
  m.kernel.log_variance = 0.0;
  return m;
}

PredictiveLatent predict_latent(const SvgpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  Forward fw = forward(model, X);
  return {std::move(fw.mean), std::move(fw.var)};
}

ClassPosterior proba_from_latent(const PredictiveLatent& latent, int mc_samples, std::uint64_t seed) {
  if (mc_samples < 2) throw ValidationError("predict_proba needs at least 2 Monte Carlo samples");
  const Eigen::Index n = latent.mean.rows();
  const Eigen::Index C = latent.mean.cols();
  if (latent.var.rows() != n || latent.var.cols() != C)
    throw ValidationError("latent mean/variance shape mismatch");
  if ((latent.var.array() < 0.0).any()) throw ValidationError("negative latent variance");

  ClassPosterior out{Eigen::MatrixXd::Zero(n, C), Eigen::MatrixXd::Zero(n, C)};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const boost::math::normal std_normal;
  const double inv_s = 1.0 / static_cast<double>(mc_samples);
  std::vector<std::vector<int>> strata(static_cast<std::size_t>(C), std::vector<int>(static_cast<std::size_t>(mc_samples)));
  Eigen::VectorXd f(C), p(C), mean(C), m2(C), delta(C);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd sd = latent.var.row(i).transpose().cwiseSqrt();
    // Latin hypercube: each class's noise visits every 1/S quantile stratum once.
    for (auto& perm : strata) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
    }
    mean.setZero();
    m2.setZero();
    for (int s = 0; s < mc_samples; ++s) {
      for (Eigen::Index c = 0; c < C; ++c) {
        const double u = (strata[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)] + unit(rng)) * inv_s;
        const double eps = boost::math::quantile(std_normal, std::clamp(u, kUnitFloor, 1.0 - kUnitFloor));
        f(c) = latent.mean(i, c) + sd(c) * eps;
      }
      p = (f.array() - f.maxCoeff()).exp();
      p /= p.sum();
      // Welford update
      delta = p - mean;
      mean += delta / static_cast<double>(s + 1);
      m2 += delta.cwiseProduct(p - mean);
    }
    out.mean.row(i) = mean.transpose();
    out.var.row(i) = (m2 / static_cast<double>(mc_samples - 1)).transpose();
  }
  return out;
}

ClassPosterior predict_proba(const SvgpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                             int mc_samples, std::uint64_t seed) {
  return proba_from_latent(predict_latent(model, X), mc_samples, seed);
}

double elbo(const SvgpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
            std::span<const int> y, double scale, std::uint64_t seed) {
  check_labels(y, X.rows(), model.num_classes());
  const Forward fw = forward(model, X);
  double kl = 0.0;
  for (int c = 0; c < model.num_classes(); ++c) kl += gp::gauss_kl_whitened(model.q_mu[c], model.q_sqrt[c]);
  return scale * expected_loglik(fw, y, model.mc_samples, seed, nullptr, nullptr) - kl;
}

SvgpGradient elbo_grad(const SvgpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                       std::span<const int> y, double scale, std::uint64_t seed) {
  check_labels(y, X.rows(), model.num_classes());
  const Forward fw = forward(model, X);
  const int C = model.num_classes();
  const Eigen::Index M = model.num_inducing();

  Eigen::MatrixXd g_mean, g_var;
  double kl = 0.0;
  for (int c = 0; c < C; ++c) kl += gp::gauss_kl_whitened(model.q_mu[c], model.q_sqrt[c]);
  SvgpGradient g;
  g.value = scale * expected_loglik(fw, y, model.mc_samples, seed, &g_mean, &g_var) - kl;
  g_mean *= scale;
  g_var = (g_var * scale).cwiseProduct(fw.var_active);

  const Eigen::MatrixXd& A = fw.a;
  Eigen::MatrixXd a_bar = Eigen::MatrixXd::Zero(M, A.cols());
  g.q_mu.resize(static_cast<std::size_t>(C));
  g.q_sqrt.resize(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    const auto& mu = model.q_mu[c];
    const auto& Ls = model.q_sqrt[c];
    const auto Lsv = Ls.triangularView<Eigen::Lower>();
    g.q_mu[c] = A * g_mean.col(c) - mu;

    // d var_i / d L_S = 2 a_i a_i^T L_S
    const Eigen::MatrixXd ag = A * g_var.col(c).asDiagonal();
    const Eigen::MatrixXd aga = ag * A.transpose();
    const Eigen::MatrixXd dl = 2.0 * (aga * Lsv);
    Eigen::MatrixXd kl_grad = Ls.triangularView<Eigen::Lower>();
    kl_grad.diagonal() -= Ls.diagonal().cwiseInverse();
    g.q_sqrt[c] = Eigen::MatrixXd(dl.triangularView<Eigen::Lower>()) - kl_grad;

    // dmean/dA and dvar/dA, var = k - a^T a + a^T S a
    a_bar.noalias() += mu * g_mean.col(c).transpose();
    const Eigen::MatrixXd lt_ag = Lsv.transpose() * ag;
    const Eigen::MatrixXd s_ag = Lsv * lt_ag;
    a_bar += 2.0 * (s_ag - ag);
  }

  // A = L^{-1} K_zx
  const Eigen::MatrixXd kzx_bar = gp::tri_solve(fw.chol, a_bar, gp::TriSide::LowerTranspose);
  const Eigen::MatrixXd l_bar = -kzx_bar * A.transpose();
  // Cholesky reverse mode: K_bar = L^{-T} Phi(L^T L_bar) L^{-1}, symmetrized.
  const Eigen::MatrixXd& L = fw.chol.lower;
  const Eigen::MatrixXd P = phi(L.transpose() * Eigen::MatrixXd(l_bar.triangularView<Eigen::Lower>()));
  const Eigen::MatrixXd t = gp::tri_solve(fw.chol, P, gp::TriSide::LowerTranspose);
  const Eigen::MatrixXd u = gp::tri_solve(fw.chol, t.transpose(), gp::TriSide::LowerTranspose).transpose();
  const Eigen::MatrixXd kzz_bar = 0.5 * (u + u.transpose());

  const double sf2 = model.kernel.variance();
  const double l = model.kernel.lengthscale();
  const double inv_l2 = 1.0 / (l * l);
  Eigen::MatrixXd kzz_jit = fw.kzz;
  kzz_jit.diagonal().array() += fw.chol.jitter;
  const Eigen::MatrixXd r2zz = gp::squared_distances(model.inducing, model.inducing);

  // d k / d log var = k (the jitter is proportional to the variance too).
  g.log_variance = kzz_bar.cwiseProduct(kzz_jit).sum() + kzx_bar.cwiseProduct(fw.kzx).sum() +
                   g_var.sum() * sf2;
  // d k / d log l = k r^2 / l^2
  const Eigen::MatrixXd wzz = kzz_bar.cwiseProduct(fw.kzz);
  const Eigen::MatrixXd wzx = kzx_bar.cwiseProduct(fw.kzx);
  g.log_lengthscale = (wzz.cwiseProduct(r2zz).sum() + wzx.cwiseProduct(fw.r2zx).sum()) * inv_l2;

  // d k(z_i, x) / d z_i = k (x - z_i) / l^2; K_zz contributes twice by symmetry.
  const auto& Z = model.inducing;
  g.inducing = (wzx * X - wzx.rowwise().sum().asDiagonal() * Z) * inv_l2;
  g.inducing += 2.0 * (wzz * Z - wzz.rowwise().sum().asDiagonal() * Z) * inv_l2;
  return g;
}

TrainResult train(SvgpModel model, const data::FeatureDataset& ds,
                  std::span<const std::size_t> labeled, const TrainConfig& cfg) {
  cfg.validate();
  if (labeled.empty()) throw ValidationError("train: empty labeled set");
  model.validate();
  const Eigen::MatrixXd X = ds.rows(labeled);
  std::vector<int> y;
  y.reserve(labeled.size());
  for (auto i : labeled) y.push_back(ds.label_at(i));

  const std::size_t n = labeled.size();
  const std::size_t bs = cfg.minibatch_size == 0 ? n : std::min(cfg.minibatch_size, n);
  const Layout lay{model.num_classes(), model.num_inducing(), model.dim(), cfg.train_hyperparams,
                   cfg.train_inducing};
  Eigen::VectorXd params = pack(lay, model.q_mu, model.q_sqrt, model.kernel.log_lengthscale,
                                model.kernel.log_variance, model.inducing);
  Adam adam(params.size(), AdamConfig{.learning_rate = cfg.learning_rate});

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {0x5348554646ull}));

  TrainResult out;
  Eigen::MatrixXd Xb;
  std::vector<int> yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += bs, ++batches) {
      const std::size_t len = std::min(bs, n - start);
      Xb.resize(static_cast<Eigen::Index>(len), X.cols());
      yb.resize(len);
      for (std::size_t r = 0; r < len; ++r) {
        Xb.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(order[start + r]));
        yb[r] = y[order[start + r]];
      }
      const double scale = static_cast<double>(n) / static_cast<double>(len);
      const auto mc_seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch),
                                                  static_cast<std::uint64_t>(batches)});
      SvgpGradient g;
      try {
        g = elbo_grad(model, Xb, yb, scale, mc_seed);
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) +
                                 ": " + e.what(),
                             e.jitter_ladder());
      }
      epoch_sum += g.value;
      adam.ascend(params, pack(lay, g.q_mu, g.q_sqrt, g.log_lengthscale, g.log_variance, g.inducing));
      unpack(lay, params, model);
      // Keep the Cholesky factor of S strictly positive on the diagonal.
      for (auto& s : model.q_sqrt) s.diagonal() = s.diagonal().cwiseMax(1e-8);
    }
    out.elbo_trace.push_back(epoch_sum / batches);
    log().debug("svgp epoch {} elbo {:.6f}", epoch, out.elbo_trace.back());
  }
  out.model = std::move(model);
  return out;
}

}  // namespace gpal::svgp

namespace gpal {

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning_rate must be positive");
}

}  // namespace gpal
