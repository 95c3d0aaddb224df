#include "gpal/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "gpal/config_io.hpp"
#include "gpal/error.hpp"

namespace gpal::io {
namespace {

using ojson = nlohmann::ordered_json;

std::string fmt_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

ojson real_or_null(double v) { return std::isnan(v) ? ojson() : ojson(v); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string curve_csv(const al::RunReport& report) {
  std::ostringstream out;
  out << "cycle,labeled_count,test_accuracy,seed,strategy,model_kind\n";
  for (const auto& p : report.curve)
    out << p.cycle << ',' << p.labeled_count << ',' << fmt_real(p.test_accuracy) << ','
        << report.config.seed << ',' << acq::to_string(report.config.strategy) << ','
        << al::to_string(report.config.model_kind) << '\n';
  return out.str();
}

std::string batches_csv(const al::RunReport& report) {
  std::ostringstream out;
  out << "cycle,class_name,fraction\n";
  if (report.batches.empty()) return out.str();
  const auto table = al::batch_composition(report);
  auto emit = [&](const al::CompositionRow& row) {
    for (std::size_t c = 0; c < row.fractions.size(); ++c)
      out << row.cycle << ',' << table.class_names[c] << ',' << fmt_real(row.fractions[c]) << '\n';
  };
  if (table.baseline) emit(*table.baseline);
  for (const auto& row : table.rows) emit(row);
  return out.str();
}

std::string report_json(const al::RunReport& report) {
  ojson j;
  j["config"] = ojson::parse(dump_al_config(report.config));
  j["seed"] = report.config.seed;
  j["class_names"] = report.class_names;
  j["complete"] = report.complete;
  j["stop_reason"] = report.stop_reason;
  if (!report.error.empty()) j["error"] = report.error;
  j["train_pool_size"] = report.train_pool_size;
  j["test_size"] = report.test_size;
  j["final_labeled_count"] = report.curve.empty() ? 0 : report.curve.back().labeled_count;

  auto curve = ojson::array();
  for (const auto& p : report.curve) {
    ojson row;
    row["cycle"] = p.cycle;
    row["labeled_count"] = p.labeled_count;
    row["test_accuracy"] = real_or_null(p.test_accuracy);
    row["balanced_accuracy"] = real_or_null(p.balanced_accuracy);
    curve.push_back(std::move(row));
  }
  j["curve"] = std::move(curve);

  auto batches = ojson::array();
  for (const auto& b : report.batches) {
    ojson row;
    row["cycle"] = b.cycle;
    row["ids"] = b.ids;
    row["labels"] = b.labels;
    row["scores"] = b.scores;
    batches.push_back(std::move(row));
  }
  j["batches"] = std::move(batches);

  if (report.pool_baseline) j["pool_baseline"] = report.pool_baseline->fractions;
  else j["pool_baseline"] = nullptr;
  auto comp = ojson::array();
  if (!report.batches.empty())
    for (const auto& row : al::batch_composition(report).rows)
      comp.push_back({{"cycle", row.cycle}, {"fractions", row.fractions}});
  j["batch_composition"] = std::move(comp);
  return j.dump(2) + "\n";
}

void write_run(const al::RunReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / kCurveFile, curve_csv(report));
  write_text(dir / kBatchesFile, batches_csv(report));
  write_text(dir / kReportFile, report_json(report));
}

al::RunReport read_curve_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "cycle,labeled_count,test_accuracy,seed,strategy,model_kind")
    throw FormatError(path.string() + ": unexpected curve.csv header");
  al::RunReport r;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 6) throw FormatError(path.string() + ": bad row " + std::to_string(row));
    try {
      al::CycleRecord p;
      p.cycle = std::stoi(cells[0]);
      p.labeled_count = std::stoull(cells[1]);
      p.test_accuracy = cells[2] == "nan" ? std::nan("") : std::stod(cells[2]);
      p.balanced_accuracy = std::nan("");
      r.curve.push_back(p);
      r.config.seed = std::stoull(cells[3]);
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": bad number in row " + std::to_string(row));
    }
    try {
      r.config.strategy = acq::strategy_from_string(cells[4]);
      r.config.model_kind = al::model_kind_from_string(cells[5]);
    } catch (const ValidationError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return r;
}

al::RunReport read_run(const std::filesystem::path& dir) {
  const auto json_path = dir / kReportFile;
  if (!std::filesystem::is_regular_file(json_path)) return read_curve_csv(dir / kCurveFile);
  const std::string name = json_path.string();
  al::RunReport r;
  try {
    const auto j = ojson::parse(read_text(json_path));
    r.config = parse_al_config(j.at("config").dump());
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    r.complete = j.at("complete").get<bool>();
    r.stop_reason = j.at("stop_reason").get<std::string>();
    r.train_pool_size = j.at("train_pool_size").get<std::size_t>();
    r.test_size = j.at("test_size").get<std::size_t>();
    for (const auto& row : j.at("curve")) {
      al::CycleRecord p;
      p.cycle = row.at("cycle").get<int>();
      p.labeled_count = row.at("labeled_count").get<std::size_t>();
      const auto& acc = row.at("test_accuracy");
      const auto& bal = row.at("balanced_accuracy");
      p.test_accuracy = acc.is_null() ? std::nan("") : acc.get<double>();
      p.balanced_accuracy = bal.is_null() ? std::nan("") : bal.get<double>();
      r.curve.push_back(p);
    }
  } catch (const ojson::exception& e) {
    throw FormatError(name + ": " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(name + ": " + e.what());
  }
  return r;
}

std::string aggregate_csv(const al::AggregateCurve& agg, const al::RunReport& like) {
  std::ostringstream out;
  out << "cycle,labeled_count,mean_accuracy,std_accuracy,runs,strategy,model_kind\n";
  for (std::size_t k = 0; k < agg.mean.size(); ++k)
    out << agg.cycle[k] << ',' << agg.labeled_count[k] << ',' << fmt_real(agg.mean[k]) << ','
        << fmt_real(agg.std[k]) << ',' << agg.runs << ',' << acq::to_string(like.config.strategy)
        << ',' << al::to_string(like.config.model_kind) << '\n';
  return out.str();
}

}  // namespace gpal::io
