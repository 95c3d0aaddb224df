#include "gpal/dataset.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "gpal/error.hpp"

namespace gpal::data {
namespace {

constexpr std::array<char, 8> kMagic = {'G', 'P', 'A', 'L', 'F', 'T', '0', '1'};
constexpr std::size_t kHeaderBytes = 8 + 8 + 8;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), b.size());
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  out.write(b.data(), b.size());
}

float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(ss).str();
}

}  // namespace

std::string_view to_string(Split s) {
  return s == Split::TrainPool ? "train_pool" : "test";
}

Split split_from_string(std::string_view s) {
  if (s == "train_pool") return Split::TrainPool;
  if (s == "test") return Split::Test;
  throw FormatError("unknown split tag '" + std::string(s) + "'");
}

std::vector<std::size_t> FeatureDataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(i);
  return out;
}

int FeatureDataset::label_at(std::size_t i) const {
  if (i >= labels.size()) throw ValidationError("sample index out of range");
  if (!labels[i]) throw ValidationError("label withheld for sample '" + sample_ids[i] + "'");
  return *labels[i];
}

Eigen::MatrixXd FeatureDataset::rows(std::span<const std::size_t> idx) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), features.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= size()) throw ValidationError("row index out of range");
    out.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(idx[r]));
  }
  return out;
}

void FeatureDataset::validate() const {
  const std::size_t n = size();
  if (features.cols() < 1) throw ValidationError("feature dimension must be >= 1");
  if (class_names.size() < 2) throw ValidationError("need at least two classes");
  if (labels.size() != n || sample_ids.size() != n || image_uris.size() != n || splits.size() != n)
    throw ValidationError("per-sample field lengths disagree with N");
  std::unordered_set<std::string_view> seen;
  seen.reserve(n);
  for (const auto& id : sample_ids)
    if (!seen.insert(id).second) throw ValidationError("duplicate sample id '" + id + "'");
  const int c = num_classes();
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] && (*labels[i] < 0 || *labels[i] >= c))
      throw ValidationError("label out of range for sample '" + sample_ids[i] + "'");
  if (!features.allFinite()) throw ValidationError("non-finite feature value");
}

ClassStats class_stats_from_labels(std::span<const int> labels, int num_classes) {
  if (labels.empty()) throw ValidationError("class statistics of an empty subset");
  ClassStats st;
  st.counts.assign(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ValidationError("label out of range");
    ++st.counts[static_cast<std::size_t>(y)];
  }
  st.total = labels.size();
  st.fractions.reserve(st.counts.size());
  for (auto k : st.counts)
    st.fractions.push_back(static_cast<double>(k) / static_cast<double>(st.total));
  return st;
}

ClassStats class_stats(const FeatureDataset& ds, std::span<const std::size_t> subset) {
  std::vector<int> ys;
  ys.reserve(subset.size());
  for (auto i : subset) {
    if (i >= ds.size()) throw ValidationError("subset index out of range");
    ys.push_back(ds.label_at(i));
  }
  return class_stats_from_labels(ys, ds.num_classes());
}

void SynthSpec::validate() const {
  if (n_per_class.size() < 2) throw ValidationError("synth spec needs at least two classes");
  for (auto n : n_per_class)
    if (n < 1) throw ValidationError("n_per_class entries must be >= 1");
  if (!test_per_class.empty() && test_per_class.size() != n_per_class.size())
    throw ValidationError("test_per_class length must match n_per_class");
  if (dim < 1) throw ValidationError("dim must be >= 1");
  if (!(spread > 0.0) || !std::isfinite(spread)) throw ValidationError("spread must be positive");
  if (centers.size() != 0 &&
      (centers.rows() != static_cast<Eigen::Index>(n_per_class.size()) ||
       centers.cols() != static_cast<Eigen::Index>(dim)))
    throw ValidationError("centers must be C x D");
  if (!class_names.empty() && class_names.size() != n_per_class.size())
    throw ValidationError("class_names length must match n_per_class");
}

FeatureDataset synth_blobs(const SynthSpec& spec) {
  spec.validate();
  const auto num_classes = spec.n_per_class.size();
  const auto d = static_cast<Eigen::Index>(spec.dim);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd centers = spec.centers;
  if (centers.size() == 0) {
    centers.resize(static_cast<Eigen::Index>(num_classes), d);
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      for (Eigen::Index j = 0; j < d; ++j) centers(c, j) = normal(rng);
      const double nrm = centers.row(c).norm();
      centers.row(c) *= spec.center_radius / (nrm > 0.0 ? nrm : 1.0);
    }
  }

  std::size_t total = 0;
  for (std::size_t c = 0; c < num_classes; ++c)
    total += spec.n_per_class[c] + (spec.test_per_class.empty() ? 0 : spec.test_per_class[c]);

  FeatureDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(total), d);
  ds.labels.reserve(total);
  ds.sample_ids.reserve(total);
  ds.image_uris.assign(total, std::nullopt);
  ds.splits.reserve(total);
  for (std::size_t c = 0; c < num_classes; ++c)
    ds.class_names.push_back(spec.class_names.empty() ? "class_" + std::to_string(c)
                                                      : spec.class_names[c]);

  std::size_t row = 0;
  auto emit = [&](std::size_t c, Split split) {
    const auto r = static_cast<Eigen::Index>(row);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = centers(static_cast<Eigen::Index>(c), j) + spec.spread * normal(rng);
      ds.features(r, j) = static_cast<double>(static_cast<float>(v));
    }
    ds.labels.emplace_back(static_cast<int>(c));
    char id[32];
    std::snprintf(id, sizeof id, "s%06zu", row);
    ds.sample_ids.emplace_back(id);
    ds.splits.push_back(split);
    ++row;
  };
  for (std::size_t c = 0; c < num_classes; ++c)
    for (std::size_t k = 0; k < spec.n_per_class[c]; ++k) emit(c, Split::TrainPool);
  if (!spec.test_per_class.empty())
    for (std::size_t c = 0; c < num_classes; ++c)
      for (std::size_t k = 0; k < spec.test_per_class[c]; ++k) emit(c, Split::Test);
  return ds;
}

void l2_normalize_rows(FeatureDataset& ds) {
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    const double nrm = ds.features.row(i).norm();
    if (nrm > 0.0) ds.features.row(i) /= nrm;
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& feature_path) {
  auto p = feature_path;
  p.replace_extension(".meta.json");
  return p;
}

void save_features(const FeatureDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put_u64(out, ds.size());
    put_u64(out, ds.dim());
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
      for (Eigen::Index j = 0; j < ds.features.cols(); ++j)
        put_f32(out, static_cast<float>(ds.features(i, j)));
    if (!out) throw IoError("write failed: " + path.string());
  }

  nlohmann::ordered_json meta;
  meta["class_names"] = ds.class_names;
  auto samples = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    nlohmann::ordered_json s;
    s["id"] = ds.sample_ids[i];
    s["label"] = ds.labels[i] ? nlohmann::ordered_json(*ds.labels[i]) : nlohmann::ordered_json();
    s["split"] = to_string(ds.splits[i]);
    s["image_uri"] =
        ds.image_uris[i] ? nlohmann::ordered_json(*ds.image_uris[i]) : nlohmann::ordered_json();
    samples.push_back(std::move(s));
  }
  meta["samples"] = std::move(samples);
  const auto side = sidecar_path(path);
  std::ofstream out(side, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + side.string());
  out << meta.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + side.string());
}

FeatureDataset load_features(const std::filesystem::path& path) {
  const std::string blob = read_file(path);
  if (blob.size() < kMagic.size() || std::memcmp(blob.data(), kMagic.data(), kMagic.size()) != 0)
    throw FormatError(path.string() + ": missing GPALFT01 header");
  if (blob.size() < kHeaderBytes)
    throw TruncationError(path.string() + ": header cut short at " + std::to_string(blob.size()) + " bytes");
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  const std::uint64_t n = get_u64(bytes + 8);
  const std::uint64_t d = get_u64(bytes + 16);
  if (d == 0) throw FormatError(path.string() + ": feature dimension is zero");
  const std::uint64_t payload = blob.size() - kHeaderBytes;
  if (n != 0 && d > (std::numeric_limits<std::uint64_t>::max() / 4) / n)
    throw FormatError(path.string() + ": header dimensions overflow");
  const std::uint64_t want = n * d * 4;
  if (payload < want)
    throw TruncationError(path.string() + ": header declares " + std::to_string(n) + "x" +
                          std::to_string(d) + " values, payload holds " +
                          std::to_string(payload / 4));
  if (payload > want) throw FormatError(path.string() + ": trailing bytes after payload");

  FeatureDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const unsigned char* p = bytes + kHeaderBytes;
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j, p += 4)
      ds.features(i, j) = static_cast<double>(get_f32(p));

  const auto side = sidecar_path(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(side));
    ds.class_names = meta.at("class_names").get<std::vector<std::string>>();
    const auto& samples = meta.at("samples");
    if (!samples.is_array()) throw FormatError(side.string() + ": 'samples' must be an array");
    if (samples.size() != n)
      throw FormatError(side.string() + ": sidecar lists " + std::to_string(samples.size()) +
                        " samples, feature file has " + std::to_string(n));
    for (const auto& s : samples) {
      ds.sample_ids.push_back(s.at("id").get<std::string>());
      const auto& lab = s.at("label");
      ds.labels.push_back(lab.is_null() ? std::nullopt : std::optional<int>(lab.get<int>()));
      ds.splits.push_back(split_from_string(s.at("split").get<std::string>()));
      const auto uri = s.find("image_uri");
      ds.image_uris.push_back(uri == s.end() || uri->is_null()
                                  ? std::nullopt
                                  : std::optional<std::string>(uri->get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(side.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

}  // namespace gpal::data
