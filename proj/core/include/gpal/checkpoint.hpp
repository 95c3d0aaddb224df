#pragma once

#include <cstdint>
#include <filesystem>

#include "gpal/al_engine.hpp"
#include "gpal/train_config.hpp"

namespace gpal::io {

enum class ModelTag : std::uint32_t { Svgp = 1, Softmax = 2 };

/// Checkpoint container; layout documented in docs/checkpoint_format.md.
struct Checkpoint {
  al::TrainedModel model;
  TrainConfig train;  // config the model was created with
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gpal::io
