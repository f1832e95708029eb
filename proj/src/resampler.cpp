#include "imbal/resampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "imbal/error.hpp"

namespace imbal {

const char* to_string(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::kNone: return "none";
    case SamplingStrategy::kSmote: return "smote";
    case SamplingStrategy::kTomek: return "tomek";
    case SamplingStrategy::kSmoteTomek: return "smote_tomek";
  }
  return "?";
}

const char* to_string(RemovalPolicy p) {
  return p == RemovalPolicy::kBoth ? "both" : "majority_only";
}

SamplingStrategy parse_sampling_strategy(std::string_view name) {
  for (auto s : {SamplingStrategy::kNone, SamplingStrategy::kSmote,
                 SamplingStrategy::kTomek, SamplingStrategy::kSmoteTomek}) {
    if (name == to_string(s)) return s;
  }
  fail(ErrorKind::kConfig, "unknown sampling strategy '" + std::string(name) + "'");
}

RemovalPolicy parse_removal_policy(std::string_view name) {
  if (name == "both") return RemovalPolicy::kBoth;
  if (name == "majority_only") return RemovalPolicy::kMajorityOnly;
  fail(ErrorKind::kConfig, "unknown removal policy '" + std::string(name) + "'");
}

void ResamplerConfig::validate() const {
  if (k_neighbors < 1) fail(ErrorKind::kUsage, "k_neighbors must be >= 1");
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) {
    fail(ErrorKind::kUsage, "target_ratio must lie in (0, 1]");
  }
}

namespace {

double squared_distance(const RowMatrix& points, std::size_t a, std::size_t b) {
  const auto cols = points.cols();
  const double* pa = points.data() + static_cast<Eigen::Index>(a) * cols;
  const double* pb = points.data() + static_cast<Eigen::Index>(b) * cols;
  double sum = 0.0;
  for (Eigen::Index c = 0; c < cols; ++c) {
    const double d = pa[c] - pb[c];
    sum += d * d;
  }
  return sum;
}

struct Candidate {
  double dist;
  std::size_t index;
  bool operator<(const Candidate& o) const {
    return dist < o.dist || (dist == o.dist && index < o.index);
  }
};

/// Single nearest neighbour of every row.
std::vector<std::size_t> all_nearest(const RowMatrix& points) {
  const auto n = static_cast<std::size_t>(points.rows());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<Candidate> best(n, Candidate{kInf, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = squared_distance(points, i, j);
      if (Candidate{d, j} < best[i]) best[i] = {d, j};
      if (Candidate{d, i} < best[j]) best[j] = {d, i};
    }
  }
  std::vector<std::size_t> nn(n);
  for (std::size_t i = 0; i < n; ++i) nn[i] = best[i].index;
  return nn;
}

std::string format_ratio(double r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

// Minority is the smaller class; class 1 on an exact tie.
int minority_label(const LabeledDataset& data) {
  return data.count(1) <= data.count(0) ? 1 : 0;
}

LabeledDataset drop_rows(const LabeledDataset& data,
                         const std::vector<bool>& drop) {
  std::vector<std::size_t> keep;
  keep.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!drop[i]) keep.push_back(i);
  }
  return data.select(keep);
}

}  // namespace

std::vector<std::size_t> nearest_neighbors(const RowMatrix& points,
                                           std::size_t query_index,
                                           std::size_t k) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (query_index >= n) fail(ErrorKind::kUsage, "nearest_neighbors: query out of range");
  if (k == 0 || k > n - 1) {
    fail(ErrorKind::kUsage, "nearest_neighbors: k=" + std::to_string(k) +
                                " with " + std::to_string(n) + " points");
  }
  std::vector<Candidate> cands;
  cands.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != query_index) cands.push_back({squared_distance(points, query_index, j), j});
  }
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k),
                    cands.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = cands[i].index;
  return out;
}

ResampleResult smote_oversample(const LabeledDataset& data,
                                const ResamplerConfig& config,
                                const GapSampler& gap) {
  config.validate();
  const std::size_t n0 = data.count(0);
  const std::size_t n1 = data.count(1);
  if (n0 == 0 || n1 == 0) {
    fail(ErrorKind::kResample, "SMOTE needs both classes present");
  }
  const int minority = minority_label(data);
  const std::size_t n_min = minority == 1 ? n1 : n0;
  const std::size_t n_maj = minority == 1 ? n0 : n1;
  if (n_min < 2) {
    fail(ErrorKind::kResample, "SMOTE needs at least 2 minority records, found " +
                                   std::to_string(n_min));
  }
  for (const auto& id : data.features.record_ids()) {
    if (is_synthetic_id(id)) {
      fail(ErrorKind::kResample, "input already contains synthetic id '" + id + "'");
    }
  }

  const auto target = static_cast<std::size_t>(
      std::floor(config.target_ratio * static_cast<double>(n_maj)));
  const std::size_t n_new = target > n_min ? target - n_min : 0;
  const std::size_t k =
      std::min(static_cast<std::size_t>(config.k_neighbors), n_min - 1);

  std::vector<std::size_t> minority_rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == minority) minority_rows.push_back(i);
  }
  const RowMatrix& x = data.features.values();
  RowMatrix pool(static_cast<Eigen::Index>(n_min), x.cols());
  for (std::size_t i = 0; i < n_min; ++i) {
    pool.row(static_cast<Eigen::Index>(i)) =
        x.row(static_cast<Eigen::Index>(minority_rows[i]));
  }
  std::vector<std::vector<std::size_t>> neighbours(n_min);
  if (n_new > 0) {
    for (std::size_t i = 0; i < n_min; ++i) {
      neighbours[i] = nearest_neighbors(pool, i, k);
    }
  }

  Rng rng(config.seed);
  const std::size_t n = data.size();
  RowMatrix out(static_cast<Eigen::Index>(n + n_new), x.cols());
  out.topRows(static_cast<Eigen::Index>(n)) = x;
  std::vector<std::string> ids = data.features.record_ids();
  std::vector<int> labels = data.labels;
  ids.reserve(n + n_new);
  labels.reserve(n + n_new);
  for (std::size_t s = 0; s < n_new; ++s) {
    const std::size_t base = s % n_min;
    const std::size_t nb = neighbours[base][uniform_below(rng, k)];
    const double lambda = gap ? gap(rng) : uniform_unit(rng);
    out.row(static_cast<Eigen::Index>(n + s)) =
        pool.row(static_cast<Eigen::Index>(base)) +
        lambda * (pool.row(static_cast<Eigen::Index>(nb)) -
                  pool.row(static_cast<Eigen::Index>(base)));
    ids.push_back(std::string(kSyntheticPrefix) + std::to_string(s));
    labels.push_back(minority);
  }

  auto lineage = data.lineage;
  lineage.push_back("smote(k=" + std::to_string(k) +
                    ",ratio=" + format_ratio(config.target_ratio) +
                    ",seed=" + std::to_string(config.seed) +
                    ",synthetic=" + std::to_string(n_new) + ")");
  return ResampleResult{
      LabeledDataset(FeatureMatrix(data.features.source_tag(), std::move(ids),
                                   std::move(out)),
                     std::move(labels), std::move(lineage)),
      n_new,
      {}};
}

std::vector<std::pair<std::size_t, std::size_t>> find_tomek_links(
    const LabeledDataset& data) {
  std::vector<std::pair<std::size_t, std::size_t>> links;
  if (data.size() < 2) return links;
  const auto nn = all_nearest(data.features.values());
  for (std::size_t a = 0; a < nn.size(); ++a) {
    const std::size_t b = nn[a];
    if (a < b && nn[b] == a && data.labels[a] != data.labels[b]) {
      links.emplace_back(a, b);
    }
  }
  return links;
}

ResampleResult tomek_clean(const LabeledDataset& data,
                           const ResamplerConfig& config) {
  config.validate();
  const auto links = find_tomek_links(data);
  const int majority = data.count(0) >= data.count(1) ? 0 : 1;
  std::vector<bool> drop(data.size(), false);
  ResampleResult result{data, 0, {}};
  const auto& ids = data.features.record_ids();
  for (const auto& [a, b] : links) {
    result.tomek_pairs.emplace_back(ids[a], ids[b]);
    if (config.removal_policy == RemovalPolicy::kBoth) {
      drop[a] = drop[b] = true;
    } else {
      drop[data.labels[a] == majority ? a : b] = true;
    }
  }
  result.dataset = drop_rows(data, drop);
  result.dataset.lineage.push_back(
      std::string("tomek(policy=") + to_string(config.removal_policy) +
      ",links=" + std::to_string(links.size()) + ")");
  return result;
}

ResampleResult smote_tomek(const LabeledDataset& data,
                           const ResamplerConfig& config) {
  ResampleResult smoted = smote_oversample(data, config);
  ResampleResult cleaned = tomek_clean(smoted.dataset, config);
  cleaned.n_synthetic = smoted.n_synthetic;
  return cleaned;
}

ResampleResult resample(const LabeledDataset& data,
                        const ResamplerConfig& config) {
  switch (config.strategy) {
    case SamplingStrategy::kNone: {
      ResampleResult r{data, 0, {}};
      r.dataset.lineage.push_back("none");
      return r;
    }
    case SamplingStrategy::kSmote: return smote_oversample(data, config);
    case SamplingStrategy::kTomek: return tomek_clean(data, config);
    case SamplingStrategy::kSmoteTomek: return smote_tomek(data, config);
  }
  fail(ErrorKind::kUsage, "unknown sampling strategy");
}

}  // namespace imbal
