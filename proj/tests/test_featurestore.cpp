#include "imbal/featurestore.hpp"

#include <algorithm>
#include <limits>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace imbal;
using namespace testing_support;

namespace {

FeatureMatrix random_matrix(const std::string& tag, std::vector<std::string> ids,
                            std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  RowMatrix v(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(dim));
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      v(r, c) = static_cast<float>(normal(rng));
    }
  }
  return FeatureMatrix(tag, std::move(ids), std::move(v));
}

}  // namespace

TEST(FeatureMatrix, RejectsDuplicateIdsAndNonFinite) {
  RowMatrix v = RowMatrix::Zero(2, 3);
  EXPECT_ERROR_KIND(FeatureMatrix("t", {"a", "a"}, v), ErrorKind::kData);
  v(1, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_ERROR_KIND(FeatureMatrix("t", {"a", "b"}, v), ErrorKind::kData);
  v(1, 2) = std::numeric_limits<double>::infinity();
  EXPECT_ERROR_KIND(FeatureMatrix("t", {"a", "b"}, v), ErrorKind::kData);
  EXPECT_ERROR_KIND(FeatureMatrix("t", {"a"}, RowMatrix::Zero(2, 3)), ErrorKind::kData);
}

TEST(Emb1, LoadsDeclaredShapeInFileOrder) {
  TempDir dir;
  const std::vector<float> payload = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12.5f};
  write_text(dir / "x.emb", emb1_bytes({"c", "a", "b"}, 4, payload));
  const FeatureMatrix m = load_embedding_file(dir / "x.emb");
  EXPECT_EQ(m.rows(), 3u);
  EXPECT_EQ(m.dim(), 4u);
  EXPECT_EQ(m.record_ids(), (std::vector<std::string>{"c", "a", "b"}));
  EXPECT_EQ(m.values()(2, 3), 12.5);
  EXPECT_EQ(m.values()(1, 0), 5.0);
  EXPECT_EQ(m.source_tag(), "x");
}

TEST(Emb1, PooledOutputWidthSurvivesLoading) {
  TempDir dir;
  std::vector<float> payload(10 * 768);
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(i % 97) / 97.0f;
  write_text(dir / "bert.emb", emb1_bytes(make_ids(10, "va"), 768, payload));
  const FeatureMatrix m = load_embedding_file(dir / "bert.emb");
  EXPECT_EQ(m.rows(), 10u);
  EXPECT_EQ(m.dim(), 768u);
}

TEST(Emb1, AcceptsTrailingNewlineInIdBlock) {
  TempDir dir;
  write_text(dir / "x.emb", emb1_bytes({"a", "b"}, 1, {1.0f, 2.0f}, true));
  EXPECT_EQ(load_embedding_file(dir / "x.emb").record_ids(),
            (std::vector<std::string>{"a", "b"}));
}

TEST(Emb1, RejectsNaNPayload) {
  TempDir dir;
  std::vector<float> payload(12, 0.5f);
  payload[7] = std::numeric_limits<float>::quiet_NaN();
  write_text(dir / "x.emb", emb1_bytes({"a", "b", "c"}, 4, payload));
  EXPECT_ERROR_KIND(load_embedding_file(dir / "x.emb"), ErrorKind::kData);
}

TEST(Emb1, RejectsMalformedHeaders) {
  TempDir dir;
  std::string good = emb1_bytes({"a", "b"}, 2, {1, 2, 3, 4});

  std::string bad_magic = good;
  bad_magic[3] = '2';
  write_text(dir / "m.emb", bad_magic);
  EXPECT_ERROR_KIND(load_embedding_file(dir / "m.emb"), ErrorKind::kFormat);

  write_text(dir / "t.emb", good.substr(0, good.size() - 4));
  EXPECT_ERROR_KIND(load_embedding_file(dir / "t.emb"), ErrorKind::kFormat);

  write_text(dir / "x.emb", good + "junk");
  EXPECT_ERROR_KIND(load_embedding_file(dir / "x.emb"), ErrorKind::kFormat);

  write_text(dir / "s.emb", "EMB1");
  EXPECT_ERROR_KIND(load_embedding_file(dir / "s.emb"), ErrorKind::kFormat);

  // Two ids declared, three present.
  std::string wrong_ids = emb1_bytes({"a", "b", "c"}, 2, {1, 2, 3, 4, 5, 6});
  wrong_ids[4] = 2;
  wrong_ids.resize(wrong_ids.size() - 8);
  write_text(dir / "i.emb", wrong_ids);
  EXPECT_ERROR_KIND(load_embedding_file(dir / "i.emb"), ErrorKind::kFormat);

  EXPECT_ERROR_KIND(load_embedding_file(dir / "missing.emb"), ErrorKind::kIo);
}

TEST(Emb1, RejectsDuplicateIds) {
  TempDir dir;
  write_text(dir / "x.emb", emb1_bytes({"a", "a"}, 1, {1.0f, 2.0f}));
  EXPECT_ERROR_KIND(load_embedding_file(dir / "x.emb"), ErrorKind::kData);
}

TEST(Emb1, WriterMatchesHandAssembledBytes) {
  TempDir dir;
  RowMatrix v(2, 2);
  v << 1.5, -2.0, 0.25, 3.0;
  write_embedding_file(FeatureMatrix("t", {"p", "q"}, v), dir / "w.emb");
  EXPECT_EQ(read_bytes(dir / "w.emb"), emb1_bytes({"p", "q"}, 2, {1.5f, -2.0f, 0.25f, 3.0f}));
}

TEST(Emb1, RoundTripIsBitExact) {
  TempDir dir;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const auto n = 1 + uniform_below(rng, 40);
    const auto d = 1 + uniform_below(rng, 30);
    const FeatureMatrix m = random_matrix("rt", make_ids(n, "id-"), d, seed);
    write_embedding_file(m, dir / "rt.emb");
    const FeatureMatrix back = load_embedding_file(dir / "rt.emb");
    ASSERT_EQ(back, m) << "seed " << seed;
  }
}

TEST(Tabular, ParsesBinaryRowsInColumnOrder) {
  TempDir dir;
  write_text(dir / "va.csv",
             "id,female,tuber,diabetes,men-con,cough,ch-cough,diarr,exc-urine,exc-drink\n"
             "d1,0,1,0,0,1,1,0,0,1\n"
             "d2,1,0,0,0,1,1,1,0,0\r\n");
  const FeatureMatrix m = load_tabular_features(dir / "va.csv");
  ASSERT_EQ(m.dim(), 9u);
  const std::vector<double> expected = {0, 1, 0, 0, 1, 1, 0, 0, 1};
  for (std::size_t c = 0; c < 9; ++c) EXPECT_EQ(m.values()(0, c), expected[c]);
  EXPECT_EQ(m.values()(1, 6), 1.0);
  EXPECT_EQ(tabular_columns(dir / "va.csv").front(), "female");
}

TEST(Tabular, RejectsBadInputs) {
  TempDir dir;
  write_text(dir / "ids.csv", "id\na\nb\n");
  EXPECT_ERROR_KIND(load_tabular_features(dir / "ids.csv"), ErrorKind::kData);
  write_text(dir / "two.csv", "id,x,y\na,0,2\n");
  EXPECT_ERROR_KIND(load_tabular_features(dir / "two.csv"), ErrorKind::kData);
  write_text(dir / "noid.csv", "id,x\n,1\n");
  EXPECT_ERROR_KIND(load_tabular_features(dir / "noid.csv"), ErrorKind::kData);
  write_text(dir / "short.csv", "id,x,y\na,1\n");
  EXPECT_ERROR_KIND(load_tabular_features(dir / "short.csv"), ErrorKind::kData);
}

TEST(Fuse, ConcatenatedWidthIsSumOfInputs) {
  const auto ids = make_ids(4);
  const FeatureMatrix elmo = random_matrix("elmo", ids, 1024, 1);
  const FeatureMatrix bert = random_matrix("bert", ids, 768, 2);
  const std::vector<FeatureMatrix> parts{elmo, bert};
  const FeatureMatrix fused = fuse(parts);
  EXPECT_EQ(fused.dim(), 1792u);
  EXPECT_EQ(fused.source_tag(), "elmo+bert");
}

TEST(Fuse, SingleMatrixIsIdentity) {
  const FeatureMatrix a = random_matrix("a", make_ids(5), 3, 7);
  const std::vector<FeatureMatrix> parts{a};
  EXPECT_EQ(fuse(parts), a);
}

TEST(Fuse, AlignsByIdNotRowPosition) {
  const auto ids = make_ids(30);
  auto shuffled = ids;
  Rng rng(3);
  shuffle(std::span<std::string>(shuffled), rng);
  const FeatureMatrix a = random_matrix("a", ids, 3, 11);
  const FeatureMatrix b = random_matrix("b", shuffled, 2, 12);
  const std::vector<FeatureMatrix> parts{a, b};
  const FeatureMatrix fused = fuse(parts);

  // Brute-force: linear scan of each input for the id.
  for (std::size_t r = 0; r < fused.rows(); ++r) {
    const std::string& id = fused.record_ids()[r];
    std::vector<double> expected;
    for (const auto* m : {&a, &b}) {
      for (std::size_t s = 0; s < m->rows(); ++s) {
        if (m->record_ids()[s] != id) continue;
        for (std::size_t c = 0; c < m->dim(); ++c) expected.push_back(m->values()(s, c));
      }
    }
    ASSERT_EQ(expected.size(), fused.dim());
    for (std::size_t c = 0; c < fused.dim(); ++c) EXPECT_EQ(fused.values()(r, c), expected[c]);
  }
}

TEST(Fuse, IsAssociative) {
  const auto ids = make_ids(12);
  auto rev = ids;
  std::reverse(rev.begin(), rev.end());
  const FeatureMatrix a = random_matrix("a", ids, 2, 1);
  const FeatureMatrix b = random_matrix("b", rev, 3, 2);
  const FeatureMatrix c = random_matrix("c", ids, 4, 3);
  const std::vector<FeatureMatrix> bc{b, c};
  const std::vector<FeatureMatrix> nested{a, fuse(bc)};
  const std::vector<FeatureMatrix> flat{a, b, c};
  const FeatureMatrix x = fuse(nested);
  const FeatureMatrix y = fuse(flat);
  EXPECT_EQ(x.record_ids(), y.record_ids());
  EXPECT_EQ(x.values(), y.values());
}

TEST(Fuse, RejectsMismatchedIdSetsAndEmptyInput) {
  const FeatureMatrix a = random_matrix("a", {"x", "y"}, 2, 1);
  const FeatureMatrix b = random_matrix("b", {"x", "z"}, 2, 2);
  const FeatureMatrix c = random_matrix("c", {"x"}, 2, 3);
  const std::vector<FeatureMatrix> ab{a, b}, ac{a, c}, none;
  EXPECT_ERROR_KIND(fuse(ab), ErrorKind::kAlignment);
  EXPECT_ERROR_KIND(fuse(ac), ErrorKind::kAlignment);
  EXPECT_ERROR_KIND(fuse(none), ErrorKind::kUsage);
}

TEST(AssembleDataset, OrdersLabelsByFeatureRows) {
  TempDir dir;
  const FeatureMatrix f = random_matrix("f", {"a", "b", "c", "d", "e"}, 2, 5);
  write_text(dir / "labels.csv", "id,label\nd,1\nb,0\ne,0\na,1\nc,0\n");
  const LabeledDataset ds = assemble_dataset(f, dir / "labels.csv");
  ASSERT_EQ(ds.size(), 5u);
  EXPECT_EQ(ds.lineage, (std::vector<std::string>{"loaded"}));

  // Direct per-id lookup against the file contents.
  const std::vector<std::pair<std::string, int>> file = {
      {"d", 1}, {"b", 0}, {"e", 0}, {"a", 1}, {"c", 0}};
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (const auto& [id, y] : file) {
      if (id == ds.features.record_ids()[r]) EXPECT_EQ(ds.labels[r], y);
    }
  }
}

TEST(AssembleDataset, ReportsMissingAndInvalidLabels) {
  TempDir dir;
  const FeatureMatrix f = random_matrix("f", {"a", "b", "c", "d", "e"}, 2, 5);
  write_text(dir / "missing.csv", "id,label\na,0\nb,1\nd,0\ne,1\n");
  EXPECT_ERROR_KIND(assemble_dataset(f, dir / "missing.csv"), ErrorKind::kAlignment);
  write_text(dir / "bad.csv", "id,label\na,0\nb,1\nc,2\nd,0\ne,1\n");
  EXPECT_ERROR_KIND(assemble_dataset(f, dir / "bad.csv"), ErrorKind::kData);
  write_text(dir / "dup.csv", "id,label\na,0\na,1\nb,1\nc,0\nd,0\ne,1\n");
  EXPECT_ERROR_KIND(assemble_dataset(f, dir / "dup.csv"), ErrorKind::kData);
}

TEST(Standardizer, UsesOnlyFittedStatistics) {
  RowMatrix train(4, 2);
  train << 1, 5, 3, 5, 5, 5, 7, 5;
  const auto z = Standardizer::fit(train);
  EXPECT_DOUBLE_EQ(z.mean(0), 4.0);
  EXPECT_DOUBLE_EQ(z.scale(0), std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(z.scale(1), 1.0);  // constant column: centred only
  RowMatrix other(1, 2);
  other << 4 + std::sqrt(5.0), 6;
  const auto out = z.apply(FeatureMatrix("v", {"q"}, other));
  EXPECT_DOUBLE_EQ(out.values()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(out.values()(0, 1), 1.0);
}
