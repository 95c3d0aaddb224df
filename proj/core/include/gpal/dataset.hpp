#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace gpal::data {

enum class Split : std::uint8_t { TrainPool, Test };

std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

/**
 * Feature vectors with per-sample metadata.
 *
 * Features live in memory as doubles; on disk they are f32, so any dataset
 * produced by load_features() or synth_blobs() round-trips exactly.
 * Labels are optional per sample so that oracle-mode files can ship with
 * labels withheld.
 */
struct FeatureDataset {
  Eigen::MatrixXd features;  // N x D, row-major semantics (row = sample)
  std::vector<std::optional<int>> labels;
  std::vector<std::string> sample_ids;
  std::vector<std::optional<std::string>> image_uris;
  std::vector<std::string> class_names;
  std::vector<Split> splits;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  int num_classes() const { return static_cast<int>(class_names.size()); }

  /// Indices of all samples carrying the given split tag, ascending.
  std::vector<std::size_t> indices(Split s) const;

  /// Label of sample i; throws ValidationError when withheld.
  int label_at(std::size_t i) const;

  /// Gathers the given rows into a dense matrix.
  Eigen::MatrixXd rows(std::span<const std::size_t> idx) const;

  /// Throws ValidationError on the first broken invariant.
  void validate() const;

  bool operator==(const FeatureDataset&) const = default;
};

struct ClassStats {
  std::vector<std::size_t> counts;
  std::vector<double> fractions;
  std::size_t total = 0;
};

/// Counts and fractions per class over `subset`. Throws on an empty subset,
/// an out-of-range index or a withheld label.
ClassStats class_stats(const FeatureDataset& ds, std::span<const std::size_t> subset);

/// Same computation over raw label values.
ClassStats class_stats_from_labels(std::span<const int> labels, int num_classes);

struct SynthSpec {
  std::vector<std::size_t> n_per_class{1400, 480, 120};
  /// Held-out test samples per class; empty means no test split.
  std::vector<std::size_t> test_per_class{350, 120, 30};
  std::size_t dim = 16;
  /// C x D; empty means draw on a sphere of `center_radius` from `seed`.
  Eigen::MatrixXd centers;
  double center_radius = 3.0;
  double spread = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::string> class_names;

  void validate() const;
};

/// Isotropic Gaussian blobs. Pure function of `spec`; values are rounded
/// through f32 so that save/load is lossless.
FeatureDataset synth_blobs(const SynthSpec& spec);

/// Rescales every row to unit Euclidean norm (zero rows are left alone).
void l2_normalize_rows(FeatureDataset& ds);

/// Sidecar path for a feature file: same stem, ".meta.json".
std::filesystem::path sidecar_path(const std::filesystem::path& feature_path);

void save_features(const FeatureDataset& ds, const std::filesystem::path& path);
FeatureDataset load_features(const std::filesystem::path& path);

}  // namespace gpal::data
