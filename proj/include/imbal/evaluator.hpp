#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "imbal/featurestore.hpp"
#include "imbal/netclassifier.hpp"
#include "imbal/resampler.hpp"

namespace imbal {

struct FoldAssignment {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;  // one entry per record, in [0, k)

  std::vector<std::size_t> members(int fold) const;
  std::vector<std::size_t> complement(int fold) const;
};

/// Shuffles each class with the seeded generator and deals records to folds
/// round-robin, continuing the deal across classes.
FoldAssignment stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
};

/// Records with score > threshold are predicted positive.
inline constexpr double kDecisionThreshold = 0.5;

ConfusionCounts confusion_at(std::span<const double> scores, std::span<const int> labels,
                             double threshold = kDecisionThreshold);

struct Metrics {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

/// Zero-denominator ratios are reported as 0.
Metrics classification_metrics(const ConfusionCounts& c);

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;
};

struct RocCurve {
  std::vector<RocPoint> points;  // first (0,0) at the sentinel, last (1,1)
  double auc = 0.0;
};

/// One point per distinct score (descending) plus a sentinel above the max;
/// AUC by the trapezoidal rule on exact cumulative counts.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Fraction of (positive, negative) pairs ranked correctly, ties count 1/2.
double auc_pair_count(std::span<const double> scores, std::span<const int> labels);

/// TPR averaged over fold curves on an even FPR grid.
RocCurve mean_roc(std::span<const RocCurve> curves, int grid_points = 101);

enum class Aggregation { kMean, kPooled };

struct CvOptions {
  int threads = 1;
  bool standardize = false;
  Aggregation aggregation = Aggregation::kMean;
};

struct FoldResult {
  int fold = 0;
  std::size_t n_train = 0;         // before resampling
  std::size_t n_train_resampled = 0;
  std::size_t n_synthetic = 0;
  std::size_t n_tomek_links = 0;
  std::size_t n_validation_pos = 0;
  std::size_t n_validation_neg = 0;
  ClassWeights class_weights{1.0, 1.0};
  double final_train_loss = 0.0;
  ConfusionCounts counts;
  Metrics metrics;
  double auc = 0.0;
  RocCurve roc;
  std::vector<std::string> validation_ids;
  std::vector<double> validation_scores;
  std::vector<std::string> lineage;
};

struct EvalReport {
  int k = 0;
  std::uint64_t seed = 0;
  ResamplerConfig resampler;
  TrainConfig train;
  CvOptions options;
  std::size_t n_records = 0;
  std::size_t input_dim = 0;
  std::string source_tag;
  std::vector<FoldResult> folds;
  Metrics mean_metrics;
  double mean_auc = 0.0;
  /// Metrics from counts summed over folds; AUC from all out-of-fold scores.
  Metrics pooled_metrics;
  double pooled_auc = 0.0;

  /// The headline numbers under options.aggregation.
  Metrics headline_metrics() const;
  double headline_auc() const;
};

/// Stratified k-fold: resample the training part only, weight classes on
/// the processed training part, train, score the untouched validation fold.
EvalReport cross_validate(const LabeledDataset& data, const ResamplerConfig& resampler,
                          const TrainConfig& train, int k, std::uint64_t seed,
                          const CvOptions& options = {});

/// Stable key order; includes per-fold validation ids and ROC points.
nlohmann::ordered_json report_to_json(const EvalReport& report);

/// CSV `fpr,tpr,threshold`.
std::string roc_to_csv(const RocCurve& curve);

}  // namespace imbal
