#include "imbal/featurestore.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "csv.hpp"
#include "imbal/error.hpp"

namespace imbal {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kAlignment: return "alignment error";
    case ErrorKind::kResample: return "resample error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kConfig: return "config error";
  }
  return "error";
}

FeatureMatrix::FeatureMatrix(std::string source_tag,
                             std::vector<std::string> record_ids,
                             RowMatrix values)
    : source_tag_(std::move(source_tag)),
      record_ids_(std::move(record_ids)),
      values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.rows()) != record_ids_.size()) {
    fail(ErrorKind::kData, "feature matrix '" + source_tag_ + "': " +
                               std::to_string(values_.rows()) + " rows for " +
                               std::to_string(record_ids_.size()) + " ids");
  }
  if (values_.cols() <= 0) {
    fail(ErrorKind::kData,
         "feature matrix '" + source_tag_ + "' has no feature columns");
  }
  std::unordered_set<std::string_view> seen;
  seen.reserve(record_ids_.size());
  for (const auto& id : record_ids_) {
    if (id.empty()) fail(ErrorKind::kData, "empty record id");
    if (!seen.insert(id).second) {
      fail(ErrorKind::kData, "duplicate record id '" + id + "'");
    }
  }
  for (Eigen::Index r = 0; r < values_.rows(); ++r) {
    for (Eigen::Index c = 0; c < values_.cols(); ++c) {
      if (!std::isfinite(values_(r, c))) {
        fail(ErrorKind::kData, "non-finite value at record '" +
                                   record_ids_[r] + "' column " +
                                   std::to_string(c));
      }
    }
  }
}

std::size_t FeatureMatrix::find(const std::string& id) const {
  for (std::size_t i = 0; i < record_ids_.size(); ++i) {
    if (record_ids_[i] == id) return i;
  }
  return record_ids_.size();
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> rows) const {
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  RowMatrix vals(static_cast<Eigen::Index>(rows.size()), values_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.push_back(record_ids_.at(rows[i]));
    vals.row(static_cast<Eigen::Index>(i)) =
        values_.row(static_cast<Eigen::Index>(rows[i]));
  }
  return FeatureMatrix(source_tag_, std::move(ids), std::move(vals));
}

bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
  return a.source_tag_ == b.source_tag_ && a.record_ids_ == b.record_ids_ &&
         a.values_.rows() == b.values_.rows() &&
         a.values_.cols() == b.values_.cols() && a.values_ == b.values_;
}

LabeledDataset::LabeledDataset(FeatureMatrix f, std::vector<int> l,
                               std::vector<std::string> lin)
    : features(std::move(f)), labels(std::move(l)), lineage(std::move(lin)) {
  if (labels.size() != features.rows()) {
    fail(ErrorKind::kAlignment,
         std::to_string(labels.size()) + " labels for " +
             std::to_string(features.rows()) + " feature rows");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) {
      fail(ErrorKind::kData, "label " + std::to_string(y) + " not in {0,1}");
    }
  }
}

std::size_t LabeledDataset::count(int label) const {
  return static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), label));
}

void LabeledDataset::require_both_classes(const char* context) const {
  if (count(0) == 0 || count(1) == 0) {
    fail(ErrorKind::kUsage,
         std::string(context) + ": both classes must be present");
  }
}

LabeledDataset LabeledDataset::select(std::span<const std::size_t> rows) const {
  std::vector<int> sub;
  sub.reserve(rows.size());
  for (std::size_t r : rows) sub.push_back(labels.at(r));
  return LabeledDataset(features.select(rows), std::move(sub), lineage);
}

namespace {

constexpr std::array<char, 4> kEmbMagic = {'E', 'M', 'B', '1'};

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::kIo, "read failed for '" + path.string() + "'");
  return bytes;
}

std::string tag_from_path(const std::filesystem::path& path) {
  return path.stem().string();
}

}  // namespace

FeatureMatrix load_embedding_file(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::string where = "'" + path.string() + "'";
  constexpr std::size_t kHeader = 16;
  if (bytes.size() < kHeader ||
      std::memcmp(bytes.data(), kEmbMagic.data(), kEmbMagic.size()) != 0) {
    fail(ErrorKind::kFormat, where + ": missing EMB1 magic or short header");
  }
  const std::uint64_t n = read_u32_le(p + 4);
  const std::uint64_t dim = read_u32_le(p + 8);
  const std::uint64_t id_len = read_u32_le(p + 12);
  if (dim == 0) fail(ErrorKind::kFormat, where + ": dim is zero");
  const std::uint64_t expected = kHeader + id_len + n * dim * 4;
  if (bytes.size() != expected) {
    fail(ErrorKind::kFormat, where + ": size " + std::to_string(bytes.size()) +
                                 " bytes, header implies " +
                                 std::to_string(expected));
  }

  std::string_view block(bytes.data() + kHeader, id_len);
  if (!block.empty() && block.back() == '\n') block.remove_suffix(1);
  std::vector<std::string> ids;
  ids.reserve(n);
  if (n > 0) {
    std::size_t start = 0;
    while (true) {
      const std::size_t nl = block.find('\n', start);
      ids.emplace_back(block.substr(start, nl - start));
      if (nl == std::string_view::npos) break;
      start = nl + 1;
    }
  } else if (!block.empty()) {
    fail(ErrorKind::kFormat, where + ": ids present for zero records");
  }
  if (ids.size() != n) {
    fail(ErrorKind::kFormat, where + ": id block holds " +
                                 std::to_string(ids.size()) + " ids, header declares " +
                                 std::to_string(n));
  }

  RowMatrix values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  const unsigned char* payload = p + kHeader + id_len;
  for (std::uint64_t r = 0; r < n; ++r) {
    for (std::uint64_t c = 0; c < dim; ++c) {
      const float f = std::bit_cast<float>(read_u32_le(payload + 4 * (r * dim + c)));
      if (!std::isfinite(f)) {
        fail(ErrorKind::kData, where + ": non-finite value at row " +
                                   std::to_string(r) + " column " +
                                   std::to_string(c));
      }
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f;
    }
  }
  return FeatureMatrix(tag_from_path(path), std::move(ids), std::move(values));
}

void write_embedding_file(const FeatureMatrix& m,
                          const std::filesystem::path& path) {
  std::string ids;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto& id = m.record_ids()[i];
    if (id.find('\n') != std::string::npos) {
      fail(ErrorKind::kData, "record id contains a newline");
    }
    if (i > 0) ids.push_back('\n');
    ids += id;
  }
  std::string out(kEmbMagic.begin(), kEmbMagic.end());
  append_u32_le(out, static_cast<std::uint32_t>(m.rows()));
  append_u32_le(out, static_cast<std::uint32_t>(m.dim()));
  append_u32_le(out, static_cast<std::uint32_t>(ids.size()));
  out += ids;
  out.reserve(out.size() + m.rows() * m.dim() * 4);
  const RowMatrix& v = m.values();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      append_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v(r, c))));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

std::vector<std::string> tabular_columns(const std::filesystem::path& path) {
  const auto table = detail::read_csv(path);
  if (table.header.empty()) {
    fail(ErrorKind::kData, "'" + path.string() + "': missing header");
  }
  return {table.header.begin() + 1, table.header.end()};
}

FeatureMatrix load_tabular_features(const std::filesystem::path& path) {
  const auto table = detail::read_csv(path);
  const std::string where = "'" + path.string() + "'";
  if (table.header.size() < 2) {
    fail(ErrorKind::kData, where + ": no feature columns after the id column");
  }
  const std::size_t dim = table.header.size() - 1;
  std::vector<std::string> ids;
  RowMatrix values(static_cast<Eigen::Index>(table.rows.size()),
                   static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string line = where + " line " + std::to_string(r + 2);
    if (row.size() != table.header.size()) {
      fail(ErrorKind::kData, line + ": expected " +
                                 std::to_string(table.header.size()) +
                                 " cells, found " + std::to_string(row.size()));
    }
    if (row[0].empty()) fail(ErrorKind::kData, line + ": missing id");
    ids.push_back(row[0]);
    for (std::size_t c = 0; c < dim; ++c) {
      const std::string& cell = row[c + 1];
      double v;
      if (cell == "0") {
        v = 0.0;
      } else if (cell == "1") {
        v = 1.0;
      } else {
        fail(ErrorKind::kData, line + ": column '" + table.header[c + 1] +
                                   "' value '" + cell + "' not in {0,1}");
      }
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return FeatureMatrix(tag_from_path(path), std::move(ids), std::move(values));
}

FeatureMatrix fuse(std::span<const FeatureMatrix> matrices) {
  if (matrices.empty()) fail(ErrorKind::kUsage, "fuse: no matrices given");
  if (matrices.size() == 1) return matrices.front();

  const FeatureMatrix& lead = matrices.front();
  std::size_t total_dim = 0;
  std::string tag;
  std::vector<std::unordered_map<std::string_view, std::size_t>> index(
      matrices.size());
  for (std::size_t m = 0; m < matrices.size(); ++m) {
    const FeatureMatrix& fm = matrices[m];
    if (fm.rows() != lead.rows()) {
      fail(ErrorKind::kAlignment, "fuse: '" + fm.source_tag() + "' has " +
                                      std::to_string(fm.rows()) + " records, '" +
                                      lead.source_tag() + "' has " +
                                      std::to_string(lead.rows()));
    }
    total_dim += fm.dim();
    tag += (m == 0 ? "" : "+") + fm.source_tag();
    for (std::size_t r = 0; r < fm.rows(); ++r) {
      index[m].emplace(fm.record_ids()[r], r);
    }
  }

  RowMatrix out(static_cast<Eigen::Index>(lead.rows()),
                static_cast<Eigen::Index>(total_dim));
  for (std::size_t r = 0; r < lead.rows(); ++r) {
    const std::string& id = lead.record_ids()[r];
    Eigen::Index col = 0;
    for (std::size_t m = 0; m < matrices.size(); ++m) {
      const auto it = index[m].find(id);
      if (it == index[m].end()) {
        fail(ErrorKind::kAlignment, "fuse: id '" + id + "' missing from '" +
                                        matrices[m].source_tag() + "'");
      }
      const auto d = static_cast<Eigen::Index>(matrices[m].dim());
      out.block(static_cast<Eigen::Index>(r), col, 1, d) =
          matrices[m].values().row(static_cast<Eigen::Index>(it->second));
      col += d;
    }
  }
  return FeatureMatrix(std::move(tag), lead.record_ids(), std::move(out));
}

LabeledDataset assemble_dataset(FeatureMatrix features,
                                const std::filesystem::path& labels_path) {
  const auto table = detail::read_csv(labels_path);
  const std::string where = "'" + labels_path.string() + "'";
  if (table.header.size() != 2) {
    fail(ErrorKind::kData, where + ": expected header 'id,label'");
  }
  std::unordered_map<std::string, int> by_id;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string line = where + " line " + std::to_string(r + 2);
    if (row.size() != 2 || row[0].empty()) {
      fail(ErrorKind::kData, line + ": expected 'id,label'");
    }
    int y;
    if (row[1] == "0") {
      y = 0;
    } else if (row[1] == "1") {
      y = 1;
    } else {
      fail(ErrorKind::kData, line + ": label '" + row[1] + "' not in {0,1}");
    }
    if (!by_id.emplace(row[0], y).second) {
      fail(ErrorKind::kData, line + ": duplicate id '" + row[0] + "'");
    }
  }
  std::vector<int> labels;
  labels.reserve(features.rows());
  for (const auto& id : features.record_ids()) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      fail(ErrorKind::kAlignment, where + ": no label for id '" + id + "'");
    }
    labels.push_back(it->second);
  }
  return LabeledDataset(std::move(features), std::move(labels));
}

void write_labels_file(const LabeledDataset& data,
                       const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  f << "id,label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    f << data.features.record_ids()[i] << ',' << data.labels[i] << '\n';
  }
  if (!f) fail(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

Standardizer Standardizer::fit(const RowMatrix& values) {
  if (values.rows() == 0) fail(ErrorKind::kUsage, "standardize: no rows");
  Standardizer s;
  s.mean = values.colwise().mean();
  const RowMatrix centred = values.rowwise() - s.mean;
  s.scale = (centred.array().square().colwise().sum() /
             static_cast<double>(values.rows()))
                .sqrt()
                .matrix();
  for (Eigen::Index c = 0; c < s.scale.size(); ++c) {
    if (!(s.scale(c) > 0.0)) s.scale(c) = 1.0;
  }
  return s;
}

FeatureMatrix Standardizer::apply(const FeatureMatrix& m) const {
  if (static_cast<Eigen::Index>(m.dim()) != mean.size()) {
    fail(ErrorKind::kUsage, "standardize: dim mismatch");
  }
  RowMatrix v = (m.values().rowwise() - mean).array().rowwise() / scale.array();
  return FeatureMatrix(m.source_tag(), m.record_ids(), std::move(v));
}

}  // namespace imbal
