#include "gpal_tools/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpal/al_engine.hpp"
#include "gpal/checkpoint.hpp"
#include "gpal/config_io.hpp"
#include "gpal/dataset.hpp"
#include "gpal/error.hpp"
#include "gpal/label_service.hpp"
#include "gpal/log.hpp"
#include "gpal/report_io.hpp"
#include "gpal/seed.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a _res macro.
#include <httplib.h>

namespace gpal::cli {
namespace fs = std::filesystem;

namespace {

// Same stream tag the engine uses for model initialization.
constexpr std::uint64_t kModelInitTag = 2;

void ensure_parent(const fs::path& file) {
  if (!file.has_parent_path()) return;
  std::error_code ec;
  fs::create_directories(file.parent_path(), ec);
  if (ec) throw IoError("cannot create " + file.parent_path().string() + ": " + ec.message());
}

struct SynthArgs {
  fs::path spec;
  fs::path out;
};

struct TrainArgs {
  fs::path data;
  std::string labels_from = "all";
  std::optional<fs::path> config;
  std::optional<std::string> model_kind;
  fs::path out;
};

struct AlArgs {
  fs::path config;
  fs::path data;
  fs::path out;
  std::string seeds;
};

struct EvalArgs {
  fs::path model;
  fs::path data;
  std::string split = "test";
  std::uint64_t seed = 0;
};

struct ServeArgs {
  fs::path data;
  std::optional<fs::path> config;
  int port = 8080;
  std::string host = "127.0.0.1";
  std::optional<fs::path> static_dir;
  std::optional<fs::path> image_root;
  std::optional<fs::path> report_dir;
  bool async = false;
};

struct ReportArgs {
  fs::path runs;
  bool aggregate = false;
};

al::ALConfig load_al_config(const std::optional<fs::path>& path) {
  if (!path) return {};
  return io::parse_al_config(io::read_text(*path));
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char c) { return std::isspace(c); }),
              tok.end());
    if (tok.empty()) continue;
    if (!std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); }))
      throw ValidationError("--seeds expects comma-separated non-negative integers, got '" + tok + "'");
    try {
      seeds.push_back(std::stoull(tok));
    } catch (const std::out_of_range&) {
      throw ValidationError("seed out of range: " + tok);
    }
  }
  if (seeds.empty()) throw ValidationError("--seeds is empty");
  auto sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ValidationError("--seeds contains duplicates");
  return seeds;
}

std::vector<std::size_t> resolve_labeled(const data::FeatureDataset& ds, const std::string& labels_from) {
  std::vector<std::size_t> out;
  if (labels_from == "all") {
    for (auto i : ds.indices(data::Split::TrainPool))
      if (ds.labels[i]) out.push_back(i);
  } else {
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < ds.size(); ++i) by_id.emplace(ds.sample_ids[i], i);
    std::istringstream in(io::read_text(labels_from));
    std::string line;
    std::vector<char> seen(ds.size(), 0);
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto it = by_id.find(line);
      if (it == by_id.end()) throw ValidationError("--labels-from: unknown sample id '" + line + "'");
      const auto i = it->second;
      if (ds.splits[i] != data::Split::TrainPool)
        throw ValidationError("--labels-from: '" + line + "' is not a train_pool sample");
      if (!ds.labels[i]) throw ValidationError("--labels-from: '" + line + "' has no label");
      if (seen[i]++) throw ValidationError("--labels-from: duplicate id '" + line + "'");
      out.push_back(i);
    }
  }
  if (out.empty()) throw ValidationError("no labeled train_pool samples to train on");
  return out;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto spec = io::parse_synth_spec(io::read_text(a.spec));
  const auto ds = data::synth_blobs(spec);
  ensure_parent(a.out);
  data::save_features(ds, a.out);
  out << "wrote " << ds.size() << " samples (" << ds.dim() << " dims, " << ds.num_classes()
      << " classes) to " << a.out.string() << '\n';
  return kOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  auto cfg = load_al_config(a.config);
  if (a.model_kind) cfg.model_kind = al::model_kind_from_string(*a.model_kind);
  auto ds = data::load_features(a.data);
  if (cfg.l2_normalize) data::l2_normalize_rows(ds);
  const auto labeled = resolve_labeled(ds, a.labels_from);

  io::Checkpoint ck;
  ck.train = cfg.train;
  double objective = 0.0;
  if (cfg.model_kind == al::ModelKind::Svgp) {
    auto init = svgp::init_model(ds, labeled, cfg.num_inducing, derive_seed(cfg.seed, {kModelInitTag}));
    init.mc_samples = cfg.mc_samples_train;
    init.mc_samples_predict = cfg.mc_samples_predict;
    auto res = svgp::train(std::move(init), ds, labeled, cfg.train);
    objective = res.elbo_trace.empty() ? 0.0 : res.elbo_trace.back();
    ck.model = std::move(res.model);
  } else {
    auto res = baseline::train_softmax(ds, labeled, cfg.train);
    objective = res.loss_trace.empty() ? 0.0 : res.loss_trace.back();
    ck.model = std::move(res.model);
  }
  ensure_parent(a.out);
  io::save_checkpoint(ck, a.out);
  nlohmann::ordered_json j;
  j["model_kind"] = al::to_string(cfg.model_kind);
  j["labeled_count"] = labeled.size();
  j[cfg.model_kind == al::ModelKind::Svgp ? "final_elbo" : "final_loss"] = objective;
  j["checkpoint"] = a.out.string();
  out << j.dump() << '\n';
  return kOk;
}

int cmd_al(const AlArgs& a, std::ostream& out) {
  const auto base = io::parse_al_config(io::read_text(a.config));
  const auto ds = data::load_features(a.data);

  if (a.seeds.empty()) {
    al::SimulatedOracle oracle(ds);
    const auto report = al::run_al(ds, base, oracle);
    io::write_run(report, a.out);
    out << io::curve_csv(report);
    return report.complete ? kOk : kValidation;
  }

  const auto seeds = parse_seeds(a.seeds);
  std::vector<al::RunReport> reports(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k; (k = next++) < seeds.size();) {
      try {
        auto cfg = base;
        cfg.seed = seeds[k];
        al::SimulatedOracle oracle(ds);
        reports[k] = al::run_al(ds, cfg, oracle);
        io::write_run(reports[k], a.out / ("seed_" + std::to_string(seeds[k])));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const auto hw = std::max(1u, std::thread::hardware_concurrency());
  const auto n_threads = std::min<std::size_t>(hw, seeds.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  bool complete = true;
  for (const auto& r : reports) complete = complete && r.complete;
  out << io::aggregate_csv(al::aggregate_runs(reports), reports.front());
  return complete ? kOk : kValidation;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto ck = io::load_checkpoint(a.model);
  auto ds = data::load_features(a.data);
  const auto split = data::split_from_string(a.split);
  const auto acc = al::evaluate_detailed(ck.model, ds, split, a.seed);
  nlohmann::ordered_json j;
  j["split"] = a.split;
  j["n"] = ds.indices(split).size();
  j["accuracy"] = acc.overall;
  j["balanced_accuracy"] = acc.balanced;
  out << j.dump() << '\n';
  return kOk;
}

std::atomic<httplib::Server*> g_server{nullptr};

extern "C" void stop_server(int) {
  if (auto* s = g_server.load()) s->stop();
}

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  const auto cfg = load_al_config(a.config);
  auto ds = data::load_features(a.data);
  service::ServiceOptions opts;
  opts.image_root = a.image_root ? *a.image_root : fs::absolute(a.data).parent_path();
  opts.static_dir = a.static_dir;
  opts.session.async_retrain = a.async;
  opts.session.report_dir = a.report_dir;
  if (a.port < 0 || a.port > 65535) throw ValidationError("--port out of range");

  service::LabelService svc(std::move(ds), cfg, opts);
  httplib::Server server;
  svc.mount(server);
  if (!server.bind_to_port(a.host, a.port)) throw IoError("cannot bind " + a.host + ":" + std::to_string(a.port));
  out << "listening on http://" << a.host << ':' << a.port << std::endl;
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  server.listen_after_bind();
  g_server = nullptr;
  return kOk;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  std::vector<fs::path> dirs;
  if (fs::is_regular_file(a.runs / io::kCurveFile)) dirs.push_back(a.runs);
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(a.runs, ec))
    if (entry.is_directory() && fs::is_regular_file(entry.path() / io::kCurveFile))
      dirs.push_back(entry.path());
  if (ec) throw IoError("cannot list " + a.runs.string() + ": " + ec.message());
  if (dirs.empty()) throw IoError("no " + std::string(io::kCurveFile) + " under " + a.runs.string());
  std::sort(dirs.begin(), dirs.end());

  std::vector<al::RunReport> reports;
  for (const auto& d : dirs) reports.push_back(io::read_run(d));
  if (a.aggregate) {
    out << io::aggregate_csv(al::aggregate_runs(reports), reports.front());
  } else {
    bool header = true;
    for (const auto& r : reports) {
      const auto csv = io::curve_csv(r);
      out << (header ? csv : csv.substr(csv.find('\n') + 1));
      header = false;
    }
  }
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaussian-process active learning on precomputed embeddings", "gpal"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a Gaussian-blob feature file");
  s_synth->add_option("--spec", synth.spec, "Blob spec (JSON)")->required();
  s_synth->add_option("--out", synth.out, "Output feature file")->required();

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "Train one model and write a checkpoint");
  s_train->add_option("--data", train.data, "Feature file")->required();
  s_train->add_option("--labels-from", train.labels_from,
                      "File of sample ids (one per line) or 'all' for every labeled train_pool sample")
      ->capture_default_str();
  s_train->add_option("--config", train.config, "Run config (JSON)");
  s_train->add_option("--model-kind", train.model_kind, "svgp or softmax");
  s_train->add_option("--out", train.out, "Checkpoint path")->required();

  AlArgs al_args;
  auto* s_al = app.add_subcommand("al", "Run active learning with the simulated oracle");
  s_al->add_option("--config", al_args.config, "Run config (JSON)")->required();
  s_al->add_option("--data", al_args.data, "Feature file")->required();
  s_al->add_option("--out", al_args.out, "Output directory")->required();
  s_al->add_option("--seeds", al_args.seeds, "Comma-separated seeds; one seed_<n>/ directory each");

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  s_eval->add_option("--model", eval.model, "Checkpoint path")->required();
  s_eval->add_option("--data", eval.data, "Feature file")->required();
  s_eval->add_option("--split", eval.split, "train_pool or test")->capture_default_str();
  s_eval->add_option("--seed", eval.seed, "Monte Carlo seed for GP prediction")->capture_default_str();

  ServeArgs serve;
  auto* s_serve = app.add_subcommand("serve", "Serve a labeling session over HTTP");
  s_serve->add_option("--data", serve.data, "Feature file")->required();
  s_serve->add_option("--config", serve.config, "Default run config (JSON)");
  s_serve->add_option("--port", serve.port, "TCP port")->capture_default_str();
  s_serve->add_option("--host", serve.host, "Bind address")->capture_default_str();
  s_serve->add_option("--static-dir", serve.static_dir, "Directory of the built UI");
  s_serve->add_option("--image-root", serve.image_root, "Root for image_uri paths (default: data directory)");
  s_serve->add_option("--report-dir", serve.report_dir, "Where to write the run report when a session finishes");
  s_serve->add_flag("--async", serve.async, "Return from label submission before retraining");

  ReportArgs report;
  auto* s_report = app.add_subcommand("report", "Print run curves as CSV");
  s_report->add_option("--runs", report.runs, "Run directory (or a parent of seed directories)")->required();
  s_report->add_flag("--aggregate", report.aggregate, "Mean and standard deviation across runs");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code != 0) {
      const auto parsed = app.get_subcommands();
      err << (parsed.empty() ? app.help() : parsed.front()->help());
    }
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*s_synth) return cmd_synth(synth, out);
    if (*s_train) return cmd_train(train, out);
    if (*s_al) return cmd_al(al_args, out);
    if (*s_eval) return cmd_eval(eval, out);
    if (*s_serve) return cmd_serve(serve, out);
    if (*s_report) return cmd_report(report, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kIo;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kValidation;
}

}  // namespace gpal::cli
