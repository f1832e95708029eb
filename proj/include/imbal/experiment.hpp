#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "imbal/error.hpp"
#include "imbal/evaluator.hpp"

namespace imbal {

enum class FeatureSetting { kBinary, kText, kHybrid };

const char* to_string(FeatureSetting s);

inline constexpr int kConfigSchemaVersion = 1;

/// Parsed experiment config. Relative paths resolve against the directory
/// holding the config file.
struct ExperimentConfig {
  FeatureSetting setting = FeatureSetting::kText;
  std::vector<std::filesystem::path> embedding_paths;
  std::optional<std::filesystem::path> tabular_path;
  std::filesystem::path labels_path;
  ResamplerConfig resampler;
  TrainConfig train;
  int folds = 5;
  std::uint64_t master_seed = 0;
  std::filesystem::path output_dir = "out";
  CvOptions options;

  /// Throws kConfig on schema violations.
  static ExperimentConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir);
  static ExperimentConfig from_file(const std::filesystem::path& path);

  /// Per-stage seeds fanned out from master_seed by fixed labels.
  void apply_master_seed();
};

/// Loads and fuses the features for the configured setting and attaches labels.
LabeledDataset load_experiment_data(const ExperimentConfig& config);

struct ExperimentOutputs {
  EvalReport report;
  std::string report_json;
  std::vector<std::string> fold_roc_csv;
  std::string roc_svg;
};

/// Runs cross-validation and renders every artifact in memory.
ExperimentOutputs compute_experiment(const ExperimentConfig& config);

/// Writes report.json, roc_fold<i>.csv and roc_mean.svg into `dir`. Files
/// are staged under temporary names and renamed once all are written.
void write_experiment_outputs(const ExperimentOutputs& outputs,
                              const std::filesystem::path& dir);

/// Full pipeline; returns the process exit code and reports errors to `err`.
int run_experiment(const ExperimentConfig& config, std::ostream& err);

/// Standalone SVG: unit-square axes, chance diagonal, one polyline per curve
/// in data coordinates, legend "<label> (AUC = x.xx)".
std::string render_roc_svg(std::span<const RocCurve> curves,
                           std::span<const std::string> labels);
void emit_roc_svg(std::span<const RocCurve> curves, std::span<const std::string> labels,
                  const std::filesystem::path& path);

/// 2 for config/usage, 3 for data and I/O, 4 for numeric failures.
int exit_code_for(ErrorKind kind);

/// Writes `contents` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace imbal
