#include <numeric>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "gpal/acquisition.hpp"
#include "gpal/gp_math.hpp"
#include "gpal/svgp.hpp"

using namespace gpal;

namespace {

Eigen::MatrixXd normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

svgp::SvgpModel desk_model(std::mt19937_64& rng, Eigen::Index M, int C, Eigen::Index D) {
  svgp::SvgpModel m;
  m.inducing = normal_matrix(rng, M, D);
  for (int c = 0; c < C; ++c) {
    m.q_mu.push_back(0.5 * normal_matrix(rng, M, 1).col(0));
    Eigen::MatrixXd L = 0.05 * normal_matrix(rng, M, M);
    L = L.triangularView<Eigen::StrictlyLower>();
    L.diagonal().setConstant(0.5);
    m.q_sqrt.push_back(L);
  }
  m.kernel.log_lengthscale = std::log(4.0);
  return m;
}

void BM_Gram(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n = state.range(0);
  const Eigen::MatrixXd X = normal_matrix(rng, n, 16);
  const Eigen::MatrixXd Z = normal_matrix(rng, 128, 16);
  gp::KernelParams p;
  for (auto _ : state) benchmark::DoNotOptimize(gp::gram(X, Z, p));
  state.SetItemsProcessed(state.iterations() * n * 128);
}
BENCHMARK(BM_Gram)->Arg(64)->Arg(512)->Arg(2000);

void BM_Cholesky(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto M = state.range(0);
  const Eigen::MatrixXd Z = normal_matrix(rng, M, 16);
  const Eigen::MatrixXd K = gp::gram(Z, Z, gp::KernelParams{});
  for (auto _ : state) benchmark::DoNotOptimize(gp::cholesky(K, 1e-6));
}
BENCHMARK(BM_Cholesky)->Arg(32)->Arg(128)->Arg(256);

// One Adam step's worth of work at the desk setting: minibatch 64, M = 128, C = 3.
void BM_ElboGrad(benchmark::State& state) {
  std::mt19937_64 rng(3);
  auto model = desk_model(rng, 128, 3, 16);
  model.mc_samples = static_cast<int>(state.range(0));
  const Eigen::MatrixXd X = normal_matrix(rng, 64, 16);
  std::vector<int> y(64);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 3);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(svgp::elbo_grad(model, X, y, 10.0, ++seed));
}
BENCHMARK(BM_ElboGrad)->Arg(16)->Arg(256)->Unit(benchmark::kMillisecond);

// Scoring the whole desk pool once per cycle.
void BM_PredictProba(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const auto model = desk_model(rng, 128, 3, 16);
  const Eigen::MatrixXd X = normal_matrix(rng, state.range(0), 16);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(svgp::predict_proba(model, X, 512, ++seed));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PredictProba)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_SelectTop(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const auto n = static_cast<std::size_t>(state.range(0));
  svgp::ClassPosterior post{Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), 3, 1.0 / 3.0),
                            (0.1 * normal_matrix(rng, static_cast<Eigen::Index>(n), 3)).cwiseAbs()};
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (auto _ : state) {
    const auto scores = acq::score_uncertainty(post, pool);
    benchmark::DoNotOptimize(acq::select_top(scores, 40, 1));
  }
}
BENCHMARK(BM_SelectTop)->Arg(2000)->Arg(20000);

}  // namespace
BENCHMARK_MAIN();
