#pragma once

#include <cstddef>
#include <cstdint>

namespace gpal {

/// Optimizer schedule shared by the GP classifier and the softmax baseline.
struct TrainConfig {
  int epochs = 24;
  double learning_rate = 1e-3;
  std::size_t minibatch_size = 64;  // 0 = full batch
  std::uint64_t seed = 0;
  bool train_hyperparams = true;
  bool train_inducing = false;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

}  // namespace gpal
