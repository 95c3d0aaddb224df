#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "gpal/svgp.hpp"

namespace gpal::acq {

enum class Strategy { Uncertainty, Random };

std::string_view to_string(Strategy s);
/// Accepts "uncertainty" and "random".
Strategy strategy_from_string(std::string_view s);

/// Score of one pool sample. For uncertainty sampling this is the mean over
/// classes of the class-probability variance; for random selection it is a
/// rank key that reproduces the draw order when sorted descending.
struct AcquisitionScore {
  std::size_t index = 0;
  double score = 0.0;
};

struct BatchSelection {
  std::vector<std::size_t> indices;
  std::vector<double> scores;  // parallel to indices, non-increasing
  Strategy strategy = Strategy::Uncertainty;
  int cycle = 0;
  bool pool_exhausted = false;  // the pool was empty; nothing was selected
};

/// score_i = (1/C) sum_c var_{i,c}. Row r of the posterior belongs to pool[r].
std::vector<AcquisitionScore> score_uncertainty(const svgp::ClassPosterior& post,
                                                std::span<const std::size_t> pool);

/// Highest `batch_size` scores, ties broken by ascending sample index.
BatchSelection select_top(std::span<const AcquisitionScore> scores, std::size_t batch_size,
                          int cycle = 0);

/// Uniform sample without replacement; a pure function of (pool, batch_size, seed, cycle).
BatchSelection select_random(std::span<const std::size_t> pool, std::size_t batch_size,
                             std::uint64_t seed, int cycle = 0);

}  // namespace gpal::acq
