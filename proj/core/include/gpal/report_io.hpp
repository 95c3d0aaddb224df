#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gpal/al_engine.hpp"

namespace gpal::io {

inline constexpr const char* kCurveFile = "curve.csv";
inline constexpr const char* kBatchesFile = "batches.csv";
inline constexpr const char* kReportFile = "report.json";

/// cycle,labeled_count,test_accuracy,seed,strategy,model_kind
std::string curve_csv(const al::RunReport& report);
/// cycle,class_name,fraction  (cycle 0 rows are the whole-pool baseline)
std::string batches_csv(const al::RunReport& report);
std::string report_json(const al::RunReport& report);

/// Writes curve.csv, batches.csv and report.json into `dir` (created if needed).
void write_run(const al::RunReport& report, const std::filesystem::path& dir);

/// Rebuilds the curve (and seed/strategy/model kind) from a curve.csv.
al::RunReport read_curve_csv(const std::filesystem::path& path);

/// Config, curve and stop status of a run directory. Reads report.json when
/// present (full precision), otherwise falls back to curve.csv.
al::RunReport read_run(const std::filesystem::path& dir);

/// cycle,labeled_count,mean_accuracy,std_accuracy,runs,strategy,model_kind
std::string aggregate_csv(const al::AggregateCurve& agg, const al::RunReport& like);

}  // namespace gpal::io
