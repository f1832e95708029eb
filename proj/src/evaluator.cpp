#include "imbal/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "format.hpp"
#include "imbal/error.hpp"
#include "imbal/random.hpp"

namespace imbal {

std::vector<std::size_t> FoldAssignment::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(i);
  }
  return out;
}

FoldAssignment stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::kUsage, "k-fold needs k >= 2");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1) fail(ErrorKind::kData, "labels must be 0 or 1");
    by_class[y].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < static_cast<std::size_t>(k)) {
      fail(ErrorKind::kUsage, "class " + std::to_string(c) + " has " +
                                  std::to_string(by_class[c].size()) +
                                  " records, fewer than k=" + std::to_string(k));
    }
  }
  FoldAssignment out{k, seed, std::vector<int>(labels.size(), -1)};
  Rng rng(seed);
  std::size_t deal = 0;
  for (auto& members : by_class) {
    shuffle(std::span<std::size_t>(members), rng);
    for (std::size_t idx : members) {
      out.fold_of[idx] = static_cast<int>(deal++ % static_cast<std::size_t>(k));
    }
  }
  return out;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

ConfusionCounts confusion_at(std::span<const double> scores, std::span<const int> labels,
                             double threshold) {
  if (scores.size() != labels.size()) {
    fail(ErrorKind::kUsage, "confusion: scores and labels differ in length");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > threshold;
    if (labels[i] == 1) {
      predicted ? ++c.tp : ++c.fn;
    } else {
      predicted ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

Metrics classification_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) fail(ErrorKind::kUsage, "metrics: all counts are zero");
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  Metrics m;
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  return m;
}

namespace {

void check_scored(std::span<const double> scores, std::span<const int> labels,
                  std::size_t& n_pos, std::size_t& n_neg) {
  if (scores.size() != labels.size()) {
    fail(ErrorKind::kUsage, "scores and labels differ in length");
  }
  n_pos = n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) fail(ErrorKind::kData, "non-finite score");
    if (labels[i] == 1) {
      ++n_pos;
    } else if (labels[i] == 0) {
      ++n_neg;
    } else {
      fail(ErrorKind::kData, "labels must be 0 or 1");
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    fail(ErrorKind::kUsage, "ROC needs both classes present");
  }
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  std::size_t n_pos, n_neg;
  check_scored(scores, labels, n_pos, n_neg);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const auto P = static_cast<double>(n_pos);
  const auto N = static_cast<double>(n_neg);
  RocCurve curve;
  curve.points.push_back({0.0, 0.0, scores[order.front()] + 1.0});
  std::uint64_t tp = 0, fp = 0;
  std::uint64_t twice_area = 0;  // in units of 1/(P*N)
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const std::uint64_t tp_before = tp, fp_before = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      labels[order[i]] == 1 ? ++tp : ++fp;
    }
    twice_area += (fp - fp_before) * (tp + tp_before);
    curve.points.push_back({static_cast<double>(fp) / N, static_cast<double>(tp) / P, s});
  }
  curve.auc = static_cast<double>(twice_area) / (2.0 * P * N);
  return curve;
}

double auc_pair_count(std::span<const double> scores, std::span<const int> labels) {
  std::size_t n_pos, n_neg;
  check_scored(scores, labels, n_pos, n_neg);
  std::uint64_t twice_wins = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) {
        twice_wins += 2;
      } else if (scores[i] == scores[j]) {
        twice_wins += 1;
      }
    }
  }
  return static_cast<double>(twice_wins) /
         (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

// Upper envelope of the piecewise-linear curve at `fpr`.
double interpolate_tpr(const RocCurve& c, double fpr) {
  double best = 0.0;
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const auto& p = c.points[i];
    if (p.fpr == fpr) best = std::max(best, p.tpr);
    if (i + 1 < c.points.size()) {
      const auto& q = c.points[i + 1];
      if (p.fpr < fpr && fpr < q.fpr) {
        const double t = (fpr - p.fpr) / (q.fpr - p.fpr);
        best = std::max(best, p.tpr + t * (q.tpr - p.tpr));
      }
    }
  }
  return best;
}

}  // namespace

RocCurve mean_roc(std::span<const RocCurve> curves, int grid_points) {
  if (curves.empty()) fail(ErrorKind::kUsage, "mean_roc: no curves");
  if (grid_points < 2) fail(ErrorKind::kUsage, "mean_roc: grid needs >= 2 points");
  RocCurve mean;
  mean.points.push_back({0.0, 0.0, 0.0});
  for (int g = 0; g < grid_points; ++g) {
    const double f = static_cast<double>(g) / (grid_points - 1);
    double sum = 0.0;
    for (const auto& c : curves) sum += interpolate_tpr(c, f);
    double tpr = sum / static_cast<double>(curves.size());
    if (g == grid_points - 1) tpr = 1.0;
    mean.points.push_back({f, tpr, 0.0});
  }
  double area = 0.0;
  for (std::size_t i = 1; i < mean.points.size(); ++i) {
    const auto& a = mean.points[i - 1];
    const auto& b = mean.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  mean.auc = area;
  return mean;
}

Metrics EvalReport::headline_metrics() const {
  return options.aggregation == Aggregation::kMean ? mean_metrics : pooled_metrics;
}

double EvalReport::headline_auc() const {
  return options.aggregation == Aggregation::kMean ? mean_auc : pooled_auc;
}

namespace {

FoldResult run_fold(const LabeledDataset& data, const FoldAssignment& folds, int fold,
                    const ResamplerConfig& resampler, const TrainConfig& train,
                    const CvOptions& options) {
  const std::string label = "fold" + std::to_string(fold);
  const auto train_rows = folds.complement(fold);
  const auto val_rows = folds.members(fold);

  LabeledDataset train_set = data.select(train_rows);
  FeatureMatrix val_features = data.features.select(val_rows);
  if (options.standardize) {
    const auto z = Standardizer::fit(train_set.features.values());
    train_set.features = z.apply(train_set.features);
    val_features = z.apply(val_features);
    train_set.lineage.push_back("standardize");
  }

  ResamplerConfig rcfg = resampler;
  rcfg.seed = derive_seed(resampler.seed, label);
  ResampleResult resampled = resample(train_set, rcfg);

  TrainConfig tcfg = train;
  tcfg.shuffle_seed = derive_seed(train.shuffle_seed, label);
  tcfg.init_seed = derive_seed(train.init_seed, label);
  FitResult fitted = fit(resampled.dataset, tcfg);

  FoldResult r;
  r.fold = fold;
  r.n_train = train_rows.size();
  r.n_train_resampled = resampled.dataset.size();
  r.n_synthetic = resampled.n_synthetic;
  r.n_tomek_links = resampled.tomek_pairs.size();
  r.class_weights = fitted.class_weights;
  r.final_train_loss = fitted.loss_history.back();
  r.validation_ids = val_features.record_ids();
  r.validation_scores = predict_scores(fitted.model, val_features);
  std::vector<int> val_labels;
  val_labels.reserve(val_rows.size());
  for (std::size_t i : val_rows) val_labels.push_back(data.labels[i]);
  r.n_validation_pos = static_cast<std::size_t>(std::count(val_labels.begin(), val_labels.end(), 1));
  r.n_validation_neg = val_labels.size() - r.n_validation_pos;
  r.counts = confusion_at(r.validation_scores, val_labels);
  r.metrics = classification_metrics(r.counts);
  r.roc = roc_curve(r.validation_scores, val_labels);
  r.auc = r.roc.auc;
  r.lineage = resampled.dataset.lineage;
  r.lineage.push_back(std::string("train(weighting=") + to_string(train.class_weighting) +
                      ",epochs=" + std::to_string(train.epochs) + ")");
  return r;
}

}  // namespace

EvalReport cross_validate(const LabeledDataset& data, const ResamplerConfig& resampler,
                          const TrainConfig& train, int k, std::uint64_t seed,
                          const CvOptions& options) {
  resampler.validate();
  train.validate();
  const FoldAssignment folds = stratified_kfold(data.labels, k, seed);

  std::vector<FoldResult> results(static_cast<std::size_t>(k));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int f = next++; f < k; f = next++) {
      try {
        results[static_cast<std::size_t>(f)] =
            run_fold(data, folds, f, resampler, train, options);
      } catch (...) {
        errors[static_cast<std::size_t>(f)] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(options.threads, 1, k);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (int f = 0; f < k; ++f) {
    if (!errors[static_cast<std::size_t>(f)]) continue;
    try {
      std::rethrow_exception(errors[static_cast<std::size_t>(f)]);
    } catch (const Error& e) {
      fail(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
    }
  }

  EvalReport report;
  report.k = k;
  report.seed = seed;
  report.resampler = resampler;
  report.train = train;
  report.options = options;
  report.n_records = data.size();
  report.input_dim = data.features.dim();
  report.source_tag = data.features.source_tag();
  report.folds = std::move(results);

  ConfusionCounts pooled;
  std::vector<double> all_scores;
  std::vector<int> all_labels;
  for (const auto& f : report.folds) {
    report.mean_metrics.recall += f.metrics.recall / k;
    report.mean_metrics.precision += f.metrics.precision / k;
    report.mean_metrics.f1 += f.metrics.f1 / k;
    report.mean_metrics.accuracy += f.metrics.accuracy / k;
    report.mean_auc += f.auc / k;
    pooled += f.counts;
    all_scores.insert(all_scores.end(), f.validation_scores.begin(), f.validation_scores.end());
  }
  for (int f = 0; f < k; ++f) {
    for (std::size_t i : folds.members(f)) all_labels.push_back(data.labels[i]);
  }
  report.pooled_metrics = classification_metrics(pooled);
  report.pooled_auc = roc_curve(all_scores, all_labels).auc;
  return report;
}

namespace {

nlohmann::ordered_json metrics_json(const Metrics& m, double auc) {
  nlohmann::ordered_json j;
  j["recall"] = m.recall;
  j["precision"] = m.precision;
  j["f1"] = m.f1;
  j["accuracy"] = m.accuracy;
  j["auc"] = auc;
  return j;
}

}  // namespace

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format"] = "imbal-report/1";

  ordered_json& cfg = j["config"];
  cfg["k"] = r.k;
  cfg["seed"] = r.seed;
  cfg["resampler"] = {{"strategy", to_string(r.resampler.strategy)},
                      {"k_neighbors", r.resampler.k_neighbors},
                      {"target_ratio", r.resampler.target_ratio},
                      {"removal_policy", to_string(r.resampler.removal_policy)},
                      {"seed", r.resampler.seed}};
  cfg["train"] = {{"learning_rate", r.train.learning_rate},
                  {"momentum", r.train.momentum},
                  {"batch_size", r.train.batch_size},
                  {"epochs", r.train.epochs},
                  {"class_weighting", to_string(r.train.class_weighting)},
                  {"hidden_layers", r.train.hidden_layers},
                  {"shuffle_seed", r.train.shuffle_seed},
                  {"init_seed", r.train.init_seed}};
  cfg["standardize"] = r.options.standardize;
  cfg["aggregation"] = r.options.aggregation == Aggregation::kMean ? "mean" : "pooled";
  cfg["decision_threshold"] = kDecisionThreshold;

  j["dataset"] = {{"source", r.source_tag},
                  {"n_records", r.n_records},
                  {"input_dim", r.input_dim}};

  ordered_json folds = ordered_json::array();
  for (const auto& f : r.folds) {
    ordered_json fj;
    fj["fold"] = f.fold;
    fj["n_train"] = f.n_train;
    fj["n_train_resampled"] = f.n_train_resampled;
    fj["n_synthetic"] = f.n_synthetic;
    fj["n_tomek_links"] = f.n_tomek_links;
    fj["class_weights"] = {f.class_weights.first, f.class_weights.second};
    fj["final_train_loss"] = f.final_train_loss;
    fj["confusion"] = {{"tp", f.counts.tp}, {"fp", f.counts.fp},
                       {"tn", f.counts.tn}, {"fn", f.counts.fn}};
    fj["metrics"] = metrics_json(f.metrics, f.auc);
    fj["validation"] = {{"n_pos", f.n_validation_pos},
                        {"n_neg", f.n_validation_neg},
                        {"ids", f.validation_ids}};
    ordered_json fpr = ordered_json::array(), tpr = ordered_json::array(),
                 thr = ordered_json::array();
    for (const auto& p : f.roc.points) {
      fpr.push_back(p.fpr);
      tpr.push_back(p.tpr);
      thr.push_back(p.threshold);
    }
    fj["roc"] = {{"fpr", fpr}, {"tpr", tpr}, {"threshold", thr}};
    fj["lineage"] = f.lineage;
    folds.push_back(std::move(fj));
  }
  j["folds"] = std::move(folds);
  j["mean"] = metrics_json(r.mean_metrics, r.mean_auc);
  j["pooled"] = metrics_json(r.pooled_metrics, r.pooled_auc);
  j["headline"] = metrics_json(r.headline_metrics(), r.headline_auc());
  return j;
}

std::string roc_to_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr,threshold\n";
  for (const auto& p : curve.points) {
    out += detail::shortest(p.fpr) + ',' + detail::shortest(p.tpr) + ',' +
           detail::shortest(p.threshold) + '\n';
  }
  return out;
}

}  // namespace imbal
