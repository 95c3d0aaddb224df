#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "gpal/al_engine.hpp"
#include "gpal/dataset.hpp"

namespace gpal::io {

/// Parses a run config (snake_case ALConfig field names). Keys absent from
/// the document keep their value from `base`; unknown keys are rejected.
al::ALConfig parse_al_config(std::string_view json_text, const al::ALConfig& base = {});
std::string dump_al_config(const al::ALConfig& cfg);

TrainConfig parse_train_config(std::string_view json_text, const TrainConfig& base = {});
std::string dump_train_config(const TrainConfig& cfg);

/// Keys: n_per_class, test_per_class, dim, centers, center_radius, spread,
/// seed, class_names.
data::SynthSpec parse_synth_spec(std::string_view json_text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace gpal::io
