#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace imbal {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense per-record feature vectors keyed by record id.
///
/// Construction validates the invariants (unique ids, finite values, one row
/// per id, positive dim) and the object is immutable afterwards.
class FeatureMatrix {
 public:
  FeatureMatrix(std::string source_tag, std::vector<std::string> record_ids,
                RowMatrix values);

  const std::string& source_tag() const { return source_tag_; }
  const std::vector<std::string>& record_ids() const { return record_ids_; }
  const RowMatrix& values() const { return values_; }
  std::size_t rows() const { return record_ids_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(values_.cols()); }

  /// Row index of `id`, or rows() when absent.
  std::size_t find(const std::string& id) const;

  /// Copy holding only the given rows, in the given order.
  FeatureMatrix select(std::span<const std::size_t> rows) const;

  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b);

 private:
  std::string source_tag_;
  std::vector<std::string> record_ids_;
  RowMatrix values_;
};

/// Features plus binary labels. Class 1 is the positive class.
struct LabeledDataset {
  FeatureMatrix features;
  std::vector<int> labels;
  std::vector<std::string> lineage;

  LabeledDataset(FeatureMatrix f, std::vector<int> l,
                 std::vector<std::string> lin = {"loaded"});

  std::size_t size() const { return labels.size(); }
  std::size_t count(int label) const;
  /// Throws unless both classes are present.
  void require_both_classes(const char* context) const;
  LabeledDataset select(std::span<const std::size_t> rows) const;
};

/// Reads an EMB1 file: "EMB1", u32 n, u32 dim, u32 id-block length,
/// newline-separated ids, n*dim little-endian float32 payload.
FeatureMatrix load_embedding_file(const std::filesystem::path& path);

/// Writes `m` as EMB1. Values are narrowed to float32.
void write_embedding_file(const FeatureMatrix& m,
                          const std::filesystem::path& path);

/// CSV `id,<col>,...` whose cells are 0 or 1.
FeatureMatrix load_tabular_features(const std::filesystem::path& path);

/// Column names of a tabular features file (header minus the id column).
std::vector<std::string> tabular_columns(const std::filesystem::path& path);

/// Id-aligned concatenation in argument order. Row order follows the first
/// matrix; the source tag is the '+'-join of the input tags.
FeatureMatrix fuse(std::span<const FeatureMatrix> matrices);

/// Pairs `features` with labels from CSV `id,label`.
LabeledDataset assemble_dataset(FeatureMatrix features,
                                const std::filesystem::path& labels_path);

/// Writes CSV `id,label` in dataset order.
void write_labels_file(const LabeledDataset& data,
                       const std::filesystem::path& path);

/// Per-column z-score. Columns with zero spread are centred only.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const RowMatrix& values);
  FeatureMatrix apply(const FeatureMatrix& m) const;
};

}  // namespace imbal
