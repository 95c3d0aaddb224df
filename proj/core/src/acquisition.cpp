#include "gpal/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "gpal/error.hpp"
#include "gpal/seed.hpp"

namespace gpal::acq {

std::string_view to_string(Strategy s) {
  return s == Strategy::Uncertainty ? "uncertainty" : "random";
}

Strategy strategy_from_string(std::string_view s) {
  if (s == "uncertainty") return Strategy::Uncertainty;
  if (s == "random") return Strategy::Random;
  throw ValidationError("unknown acquisition strategy '" + std::string(s) + "'");
}

std::vector<AcquisitionScore> score_uncertainty(const svgp::ClassPosterior& post,
                                                std::span<const std::size_t> pool) {
  if (post.size() != static_cast<Eigen::Index>(pool.size()))
    throw ValidationError("posterior rows must match the pool size");
  if (post.num_classes() < 1) throw ValidationError("posterior has no classes");
  std::vector<AcquisitionScore> out;
  out.reserve(pool.size());
  for (std::size_t r = 0; r < pool.size(); ++r) {
    const double s = post.var.row(static_cast<Eigen::Index>(r)).mean();
    if (!std::isfinite(s)) throw ValidationError("non-finite acquisition score");
    out.push_back({pool[r], s});
  }
  return out;
}

BatchSelection select_top(std::span<const AcquisitionScore> scores, std::size_t batch_size, int cycle) {
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  BatchSelection sel;
  sel.strategy = Strategy::Uncertainty;
  sel.cycle = cycle;
  if (scores.empty()) {
    sel.pool_exhausted = true;
    return sel;
  }
  std::vector<AcquisitionScore> ranked(scores.begin(), scores.end());
  const auto k = std::min(batch_size, ranked.size());
  const auto by_rank = [](const AcquisitionScore& a, const AcquisitionScore& b) {
    return a.score != b.score ? a.score > b.score : a.index < b.index;
  };
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                    by_rank);
  for (std::size_t i = 0; i < k; ++i) {
    sel.indices.push_back(ranked[i].index);
    sel.scores.push_back(ranked[i].score);
  }
  return sel;
}

BatchSelection select_random(std::span<const std::size_t> pool, std::size_t batch_size,
                             std::uint64_t seed, int cycle) {
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  BatchSelection sel;
  sel.strategy = Strategy::Random;
  sel.cycle = cycle;
  if (pool.empty()) {
    sel.pool_exhausted = true;
    return sel;
  }
  std::vector<std::size_t> items(pool.begin(), pool.end());
  const auto k = std::min(batch_size, items.size());
  std::mt19937_64 rng(derive_seed(seed, {0x52414E44ull, static_cast<std::uint64_t>(cycle)}));
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> u(i, items.size() - 1);
    std::swap(items[i], items[u(rng)]);
  }
  for (std::size_t i = 0; i < k; ++i) {
    sel.indices.push_back(items[i]);
    sel.scores.push_back(static_cast<double>(k - i) / static_cast<double>(k));
  }
  return sel;
}

}  // namespace gpal::acq
