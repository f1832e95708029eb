#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "imbal/featurestore.hpp"
#include "imbal/random.hpp"

namespace imbal {

enum class SamplingStrategy { kNone, kSmote, kTomek, kSmoteTomek };
enum class RemovalPolicy { kBoth, kMajorityOnly };

const char* to_string(SamplingStrategy s);
const char* to_string(RemovalPolicy p);
SamplingStrategy parse_sampling_strategy(std::string_view name);
RemovalPolicy parse_removal_policy(std::string_view name);

struct ResamplerConfig {
  int k_neighbors = 5;
  SamplingStrategy strategy = SamplingStrategy::kNone;
  /// Minority/majority ratio reached by SMOTE, in (0, 1].
  double target_ratio = 1.0;
  RemovalPolicy removal_policy = RemovalPolicy::kBoth;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ResampleResult {
  LabeledDataset dataset;
  std::size_t n_synthetic = 0;
  /// Tomek link members as (lower-index id, higher-index id).
  std::vector<std::pair<std::string, std::string>> tomek_pairs;
};

/// Ids of SMOTE records start with this prefix.
inline constexpr std::string_view kSyntheticPrefix = "syn:";

inline bool is_synthetic_id(std::string_view id) {
  return id.substr(0, kSyntheticPrefix.size()) == kSyntheticPrefix;
}

/// Indices of the k rows closest to `query_index` (Euclidean), nearest
/// first; exact distance ties go to the lower row index.
std::vector<std::size_t> nearest_neighbors(const RowMatrix& points,
                                           std::size_t query_index,
                                           std::size_t k);

/// Draws the interpolation gap for one synthetic point. The default draws
/// uniformly from [0, 1).
using GapSampler = std::function<double(Rng&)>;

/// SMOTE: adds max(0, floor(ratio * n_majority) - n_minority) minority
/// records, each x_i + gap * (x_nn - x_i) for one of x_i's k nearest minority
/// neighbours. Base records are visited round-robin in dataset order.
ResampleResult smote_oversample(const LabeledDataset& data,
                                const ResamplerConfig& config,
                                const GapSampler& gap = {});

/// Opposite-class mutual nearest-neighbour pairs, lower index first.
std::vector<std::pair<std::size_t, std::size_t>> find_tomek_links(
    const LabeledDataset& data);

/// Finds Tomek links and drops their members per the removal policy.
ResampleResult tomek_clean(const LabeledDataset& data,
                           const ResamplerConfig& config);

/// SMOTE followed by Tomek-link cleaning of the augmented set.
ResampleResult smote_tomek(const LabeledDataset& data,
                           const ResamplerConfig& config);

/// Dispatches on config.strategy.
ResampleResult resample(const LabeledDataset& data,
                        const ResamplerConfig& config);

}  // namespace imbal
