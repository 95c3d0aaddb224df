#include "gpal/config_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gpal/error.hpp"

namespace gpal::io {
namespace {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

json parse_object(std::string_view text, const char* what) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string(what) + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ValidationError(std::string(what) + ": expected a JSON object");
  return doc;
}

void reject_unknown(const json& doc, const std::set<std::string>& allowed, const char* what) {
  for (const auto& [key, _] : doc.items())
    if (!allowed.contains(key))
      throw ValidationError(std::string(what) + ": unknown key '" + key + "'");
}

template <typename T>
void read_into(const json& doc, const char* key, T& out) {
  const auto it = doc.find(key);
  if (it == doc.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
}

TrainConfig train_from(const json& doc, TrainConfig cfg) {
  reject_unknown(doc,
                 {"epochs", "learning_rate", "minibatch_size", "seed", "train_hyperparams",
                  "train_inducing"},
                 "train config");
  read_into(doc, "epochs", cfg.epochs);
  read_into(doc, "learning_rate", cfg.learning_rate);
  read_into(doc, "minibatch_size", cfg.minibatch_size);
  read_into(doc, "seed", cfg.seed);
  read_into(doc, "train_hyperparams", cfg.train_hyperparams);
  read_into(doc, "train_inducing", cfg.train_inducing);
  return cfg;
}

ojson train_to(const TrainConfig& cfg) {
  ojson j;
  j["epochs"] = cfg.epochs;
  j["learning_rate"] = cfg.learning_rate;
  j["minibatch_size"] = cfg.minibatch_size;
  j["seed"] = cfg.seed;
  j["train_hyperparams"] = cfg.train_hyperparams;
  j["train_inducing"] = cfg.train_inducing;
  return j;
}

}  // namespace

al::ALConfig parse_al_config(std::string_view json_text, const al::ALConfig& base) {
  const json doc = parse_object(json_text, "run config");
  reject_unknown(doc,
                 {"comment", "initial_size", "batch_size", "max_cycles", "stop_accuracy", "strategy",
                  "model_kind", "train", "num_inducing", "mc_samples_train", "mc_samples_predict",
                  "eval_every_cycle", "seed", "warm_start", "l2_normalize"},
                 "run config");
  al::ALConfig cfg = base;
  read_into(doc, "initial_size", cfg.initial_size);
  read_into(doc, "batch_size", cfg.batch_size);
  read_into(doc, "max_cycles", cfg.max_cycles);
  if (const auto it = doc.find("stop_accuracy"); it != doc.end()) {
    if (it->is_null())
      cfg.stop_accuracy.reset();
    else if (it->is_number())
      cfg.stop_accuracy = it->get<double>();
    else
      throw ValidationError("config key 'stop_accuracy' must be a number or null");
  }
  std::string s;
  if (doc.contains("strategy")) {
    read_into(doc, "strategy", s);
    cfg.strategy = acq::strategy_from_string(s);
  }
  if (doc.contains("model_kind")) {
    read_into(doc, "model_kind", s);
    cfg.model_kind = al::model_kind_from_string(s);
  }
  if (const auto it = doc.find("train"); it != doc.end()) {
    if (!it->is_object()) throw ValidationError("config key 'train' must be an object");
    cfg.train = train_from(*it, cfg.train);
  }
  read_into(doc, "num_inducing", cfg.num_inducing);
  read_into(doc, "mc_samples_train", cfg.mc_samples_train);
  read_into(doc, "mc_samples_predict", cfg.mc_samples_predict);
  read_into(doc, "eval_every_cycle", cfg.eval_every_cycle);
  read_into(doc, "seed", cfg.seed);
  read_into(doc, "warm_start", cfg.warm_start);
  read_into(doc, "l2_normalize", cfg.l2_normalize);
  cfg.validate();
  return cfg;
}

std::string dump_al_config(const al::ALConfig& cfg) {
  ojson j;
  j["initial_size"] = cfg.initial_size;
  j["batch_size"] = cfg.batch_size;
  j["max_cycles"] = cfg.max_cycles;
  j["stop_accuracy"] = cfg.stop_accuracy ? ojson(*cfg.stop_accuracy) : ojson();
  j["strategy"] = acq::to_string(cfg.strategy);
  j["model_kind"] = al::to_string(cfg.model_kind);
  j["train"] = train_to(cfg.train);
  j["num_inducing"] = cfg.num_inducing;
  j["mc_samples_train"] = cfg.mc_samples_train;
  j["mc_samples_predict"] = cfg.mc_samples_predict;
  j["eval_every_cycle"] = cfg.eval_every_cycle;
  j["seed"] = cfg.seed;
  j["warm_start"] = cfg.warm_start;
  j["l2_normalize"] = cfg.l2_normalize;
  return j.dump(2);
}

TrainConfig parse_train_config(std::string_view json_text, const TrainConfig& base) {
  TrainConfig cfg = train_from(parse_object(json_text, "train config"), base);
  cfg.validate();
  return cfg;
}

std::string dump_train_config(const TrainConfig& cfg) { return train_to(cfg).dump(); }

data::SynthSpec parse_synth_spec(std::string_view json_text) {
  const json doc = parse_object(json_text, "synth spec");
  reject_unknown(doc,
                 {"comment", "n_per_class", "test_per_class", "dim", "centers", "center_radius",
                  "spread", "seed", "class_names"},
                 "synth spec");
  data::SynthSpec spec;
  read_into(doc, "n_per_class", spec.n_per_class);
  read_into(doc, "test_per_class", spec.test_per_class);
  read_into(doc, "dim", spec.dim);
  read_into(doc, "center_radius", spec.center_radius);
  read_into(doc, "spread", spec.spread);
  read_into(doc, "seed", spec.seed);
  read_into(doc, "class_names", spec.class_names);
  if (const auto it = doc.find("centers"); it != doc.end() && !it->is_null()) {
    std::vector<std::vector<double>> rows;
    read_into(doc, "centers", rows);
    if (rows.empty()) throw ValidationError("synth spec: 'centers' is empty");
    spec.centers.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size()) throw ValidationError("synth spec: ragged 'centers'");
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        spec.centers(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  spec.validate();
  return spec;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace gpal::io
