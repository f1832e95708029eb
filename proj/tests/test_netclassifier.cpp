#include "imbal/netclassifier.hpp"

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace imbal;
using namespace testing_support;

namespace {

std::vector<int> labels_with_counts(std::size_t n0, std::size_t n1) {
  std::vector<int> y(n0, 0);
  y.insert(y.end(), n1, 1);
  return y;
}

Eigen::MatrixX2d probs_from(std::initializer_list<std::pair<double, double>> rows) {
  Eigen::MatrixX2d p(static_cast<Eigen::Index>(rows.size()), 2);
  Eigen::Index i = 0;
  for (auto [a, b] : rows) {
    p(i, 0) = a;
    p(i, 1) = b;
    ++i;
  }
  return p;
}

RowMatrix random_inputs(std::size_t n, std::size_t d, Rng& rng) {
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = normal(rng);
  }
  return x;
}

double loss_at(const MlpModel& m, const RowMatrix& x, const std::vector<int>& y,
               ClassWeights w) {
  return weighted_ce_loss(m.forward(x), y, w);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.hidden_layers = {16};
  cfg.learning_rate = 0.01;
  cfg.epochs = 30;
  return cfg;
}

}  // namespace

TEST(ClassWeights, InverseFrequency) {
  const auto [w0, w1] = compute_class_weights(labels_with_counts(90, 10));
  EXPECT_NEAR(w0, 0.5556, 5e-5);
  EXPECT_DOUBLE_EQ(w1, 5.0);

  const auto [b0, b1] = compute_class_weights(labels_with_counts(50, 50));
  EXPECT_DOUBLE_EQ(b0, 1.0);
  EXPECT_DOUBLE_EQ(b1, 1.0);
}

TEST(ClassWeights, ReproducesPublishedRatio) {
  // 9398 / (2 * 9306) and 9398 / (2 * 92), to eight decimals.
  const auto [w0, w1] = compute_class_weights(labels_with_counts(9306, 92));
  EXPECT_NEAR(w0, 0.50494305, 5e-9);
  EXPECT_NEAR(w1, 51.07608696, 5e-9);
}

TEST(ClassWeights, SingleClassIsUsageError) {
  EXPECT_ERROR_KIND(compute_class_weights(labels_with_counts(5, 0)), ErrorKind::kUsage);
}

TEST(WeightedLoss, HandComputedValues) {
  const std::vector<int> one{1};
  EXPECT_NEAR(weighted_ce_loss(probs_from({{0.5, 0.5}}), one, {1.0, 1.0}), 0.693147, 1e-6);

  const std::vector<int> two{0, 1};
  EXPECT_NEAR(weighted_ce_loss(probs_from({{0.5, 0.5}, {0.75, 0.25}}), two, {1.0, 2.0}),
              1.732868, 1e-6);

  const std::vector<int> perfect{0, 1, 1};
  EXPECT_NEAR(weighted_ce_loss(probs_from({{1, 0}, {0, 1}, {0, 1}}), perfect, {3.0, 0.5}), 0.0,
              1e-11);
}

TEST(WeightedLoss, UniformWeightsEqualPlainMeanCrossEntropy) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + uniform_below(rng, 30);
    Eigen::MatrixX2d p(static_cast<Eigen::Index>(n), 2);
    std::vector<int> y(n);
    double plain = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = 0.01 + 0.98 * uniform_unit(rng);
      p(static_cast<Eigen::Index>(i), 0) = 1.0 - q;
      p(static_cast<Eigen::Index>(i), 1) = q;
      y[i] = static_cast<int>(uniform_below(rng, 2));
      plain -= std::log(y[i] ? q : 1.0 - q);
    }
    const double loss = weighted_ce_loss(p, y, {1.0, 1.0});
    EXPECT_NEAR(loss, plain / static_cast<double>(n), 1e-14);
    EXPECT_GE(loss, 0.0);
  }
}

TEST(WeightedLoss, LengthMismatchIsUsageError) {
  const std::vector<int> y{0, 1};
  EXPECT_ERROR_KIND(weighted_ce_loss(probs_from({{0.5, 0.5}}), y, {1, 1}), ErrorKind::kUsage);
}

TEST(Gradient, MatchesCentralDifferences) {
  Rng rng(31337);
  for (int draw = 0; draw < 25; ++draw) {
    std::vector<int> dims{static_cast<int>(1 + uniform_below(rng, 6))};
    const auto hidden = uniform_below(rng, 3);
    for (std::uint64_t h = 0; h < hidden; ++h) dims.push_back(static_cast<int>(1 + uniform_below(rng, 8)));
    dims.push_back(2);
    MlpModel m = MlpModel::initialize(dims, rng());
    const std::size_t n = 1 + uniform_below(rng, 10);
    const RowMatrix x = random_inputs(n, static_cast<std::size_t>(dims.front()), rng);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(uniform_below(rng, 2));
    const ClassWeights w{0.2 + 3 * uniform_unit(rng), 0.2 + 3 * uniform_unit(rng)};

    // Nonzero biases keep pre-activations off the ReLU kink at exactly zero.
    auto params = m.flat_parameters();
    for (auto& v : params) v += 0.2 * uniform_unit(rng) - 0.1;
    m.set_flat_parameters(params);

    const auto analytic = loss_gradient(m, x, y, w);
    EXPECT_NEAR(analytic.loss, loss_at(m, x, y, w), 1e-12);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + 1e-5;
      m.set_flat_parameters(params);
      const double up = loss_at(m, x, y, w);
      params[i] = saved - 1e-5;
      m.set_flat_parameters(params);
      const double down = loss_at(m, x, y, w);
      params[i] = saved;
      m.set_flat_parameters(params);
      const double numeric = (up - down) / 2e-5;
      const double a = analytic.gradient[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      EXPECT_LE(rel, 1e-4) << "draw " << draw << " param " << i << " analytic " << a
                           << " numeric " << numeric;
    }
  }
}

TEST(Gradient, LogisticRegressionClosedForm) {
  // No hidden layer: dL/dW = (P - Y)^T X / N, dL/db = column sums of (P - Y) / N.
  MlpModel m = MlpModel::zeros({2, 2});
  std::vector<double> params{0.3, -0.2, 0.1, 0.4, 0.05, -0.05};
  m.set_flat_parameters(params);
  RowMatrix x(3, 2);
  x << 1.0, 2.0, -1.0, 0.5, 0.0, -2.0;
  const std::vector<int> y{1, 0, 1};

  std::vector<double> expected(6, 0.0);
  for (int i = 0; i < 3; ++i) {
    const double z0 = 0.3 * x(i, 0) - 0.2 * x(i, 1) + 0.05;
    const double z1 = 0.1 * x(i, 0) + 0.4 * x(i, 1) - 0.05;
    const double p1 = 1.0 / (1.0 + std::exp(z0 - z1));
    const double g0 = (1.0 - p1 - (y[i] == 0)) / 3.0;
    const double g1 = (p1 - (y[i] == 1)) / 3.0;
    expected[0] += g0 * x(i, 0);
    expected[1] += g0 * x(i, 1);
    expected[2] += g1 * x(i, 0);
    expected[3] += g1 * x(i, 1);
    expected[4] += g0;
    expected[5] += g1;
  }
  const auto g = loss_gradient(m, x, y, {1.0, 1.0});
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(g.gradient[i], expected[i], 1e-15);
}

TEST(Gradient, ScalesWithCommonClassWeightFactor) {
  Rng rng(12);
  MlpModel m = MlpModel::initialize({3, 5, 2}, 9);
  const RowMatrix x = random_inputs(8, 3, rng);
  const std::vector<int> y{0, 1, 0, 0, 1, 0, 1, 1};
  const double c = 3.5;
  const auto base = loss_gradient(m, x, y, {0.7, 2.0});
  const auto scaled = loss_gradient(m, x, y, {0.7 * c, 2.0 * c});
  EXPECT_NEAR(scaled.loss, c * base.loss, 1e-12);
  for (std::size_t i = 0; i < base.gradient.size(); ++i) {
    EXPECT_NEAR(scaled.gradient[i], c * base.gradient[i], 1e-12);
  }

  // Same trajectory only when the learning rate is divided by c.
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  TrainConfig cfg_scaled = cfg;
  cfg_scaled.learning_rate = cfg.learning_rate / c;
  MlpModel a = m, b = m, d = m;
  for (int step = 0; step < 5; ++step) {
    loss_gradient_step(a, x, y, {0.7, 2.0}, cfg);
    loss_gradient_step(b, x, y, {0.7 * c, 2.0 * c}, cfg_scaled);
    loss_gradient_step(d, x, y, {0.7 * c, 2.0 * c}, cfg);
  }
  const auto pa = a.flat_parameters(), pb = b.flat_parameters(), pd = d.flat_parameters();
  double max_diff = 0.0, max_unscaled_diff = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(pa[i] - pb[i]));
    max_unscaled_diff = std::max(max_unscaled_diff, std::abs(pa[i] - pd[i]));
  }
  EXPECT_LE(max_diff, 1e-12);
  EXPECT_GT(max_unscaled_diff, 1e-6);
}

TEST(GradientStep, ZeroLearningRateLeavesParameters) {
  Rng rng(1);
  MlpModel m = MlpModel::initialize({4, 6, 2}, 3);
  const MlpModel before = m;
  const RowMatrix x = random_inputs(5, 4, rng);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  const double loss = loss_gradient_step(m, x, std::vector<int>{0, 1, 0, 1, 1}, {1, 1}, cfg);
  EXPECT_GT(loss, 0.0);
  EXPECT_EQ(m, before);
}

TEST(GradientStep, NonFiniteInputIsNumericError) {
  MlpModel m = MlpModel::initialize({1, 2}, 3);
  RowMatrix x(1, 1);
  x << 1e308;
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  EXPECT_ERROR_KIND(
      {
        for (int i = 0; i < 5; ++i) loss_gradient_step(m, x, std::vector<int>{1}, {1, 1}, cfg);
      },
      ErrorKind::kNumeric);
}

TEST(GradientStep, RejectsShapeMismatch) {
  MlpModel m = MlpModel::initialize({3, 2}, 3);
  RowMatrix x = RowMatrix::Zero(2, 4);
  EXPECT_ERROR_KIND(loss_gradient_step(m, x, std::vector<int>{0, 1}, {1, 1}, TrainConfig{}),
                    ErrorKind::kUsage);
}

TEST(Fit, DeterministicForEqualSeeds) {
  const auto ds = gaussian_blobs(80, 20, 4, 1.5, 3);
  TrainConfig cfg = small_config();
  cfg.epochs = 5;
  cfg.init_seed = 10;
  cfg.shuffle_seed = 11;
  const auto a = fit(ds, cfg);
  const auto b = fit(ds, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.loss_history.size(), 5u);
  cfg.shuffle_seed = 12;
  EXPECT_FALSE(fit(ds, cfg).model == a.model);
}

TEST(Fit, DefaultsReduceTrainingLoss) {
  const auto ds = gaussian_blobs(100, 100, 2, 4.0, 5);
  const TrainConfig cfg;
  MlpModel init = MlpModel::initialize({2, 256, 64, 2}, cfg.init_seed);
  const double before = loss_at(init, ds.features.values(), ds.labels, {1, 1});
  const auto r = fit(ds, cfg);
  const double after = loss_at(r.model, ds.features.values(), ds.labels, {1, 1});
  EXPECT_LT(after, before);
  EXPECT_LT(r.loss_history.back(), r.loss_history.front());
}

TEST(Fit, RequiresBothClasses) {
  const auto ds = gaussian_blobs(10, 0, 2, 0, 1);
  EXPECT_ERROR_KIND(fit(ds, small_config()), ErrorKind::kUsage);
}

TEST(Fit, InverseFrequencyWeightingRaisesMinorityRecall) {
  double recall_uniform = 0.0, recall_weighted = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto train = gaussian_blobs(380, 20, 2, 1.5, 100 + seed);
    const auto test = gaussian_blobs(0, 200, 2, 1.5, 200 + seed);
    TrainConfig cfg = small_config();
    cfg.init_seed = seed;
    cfg.shuffle_seed = seed + 50;
    for (auto weighting : {ClassWeighting::kUniform, ClassWeighting::kInverseFrequency}) {
      cfg.class_weighting = weighting;
      const auto model = fit(train, cfg).model;
      const auto scores = predict_scores(model, test.features);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < scores.size(); ++i) hits += scores[i] > 0.5;
      const double recall = static_cast<double>(hits) / 200.0;
      (weighting == ClassWeighting::kUniform ? recall_uniform : recall_weighted) += recall / 10;
    }
  }
  EXPECT_GT(recall_weighted, recall_uniform);
}

TEST(Predict, ZeroModelScoresOneHalf) {
  const MlpModel m = MlpModel::zeros({3, 4, 2});
  Rng rng(1);
  for (double s : predict_scores(m, random_inputs(10, 3, rng))) EXPECT_EQ(s, 0.5);
}

TEST(Predict, ProbabilitiesSumToOne) {
  Rng rng(2);
  const MlpModel m = MlpModel::initialize({5, 7, 3, 2}, 4);
  RowMatrix x = random_inputs(50, 5, rng) * 30.0;
  const auto p = m.forward(x);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    EXPECT_NEAR(p(i, 0) + p(i, 1), 1.0, 1e-9);
    EXPECT_GE(p(i, 1), 0.0);
    EXPECT_LE(p(i, 1), 1.0);
  }
}

TEST(Predict, SeparatesTrainedClusters) {
  const auto ds = gaussian_blobs(100, 100, 2, 4.0, 9);
  const auto model = fit(ds, small_config()).model;
  const auto scores = predict_scores(model, ds.features);
  const double neg = std::accumulate(scores.begin(), scores.begin() + 100, 0.0) / 100;
  const double pos = std::accumulate(scores.begin() + 100, scores.end(), 0.0) / 100;
  EXPECT_GT(pos, neg);
}

TEST(Predict, RejectsDimMismatch) {
  const MlpModel m = MlpModel::zeros({3, 2});
  EXPECT_ERROR_KIND(predict_scores(m, RowMatrix::Zero(2, 4)), ErrorKind::kUsage);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  TempDir dir;
  const MlpModel m = MlpModel::initialize({7, 5, 3, 2}, 0xfeedULL);
  m.save(dir / "m.ckpt");
  const MlpModel back = MlpModel::load(dir / "m.ckpt");
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.layer_dims(), m.layer_dims());
  EXPECT_EQ(back.seed(), 0xfeedULL);
  back.save(dir / "again.ckpt");
  EXPECT_EQ(read_bytes(dir / "m.ckpt"), read_bytes(dir / "again.ckpt"));
}

TEST(Checkpoint, RejectsCorruptFiles) {
  TempDir dir;
  MlpModel::initialize({2, 2}, 1).save(dir / "m.ckpt");
  std::string bytes = read_bytes(dir / "m.ckpt");
  write_text(dir / "short.ckpt", bytes.substr(0, bytes.size() - 3));
  EXPECT_ERROR_KIND(MlpModel::load(dir / "short.ckpt"), ErrorKind::kFormat);
  bytes[0] = 'X';
  write_text(dir / "magic.ckpt", bytes);
  EXPECT_ERROR_KIND(MlpModel::load(dir / "magic.ckpt"), ErrorKind::kFormat);
}

TEST(Model, InitializationIsFanInScaledAndSeeded) {
  const MlpModel a = MlpModel::initialize({100, 50, 2}, 5);
  const MlpModel b = MlpModel::initialize({100, 50, 2}, 5);
  EXPECT_EQ(a, b);
  const double limit = std::sqrt(6.0 / 100.0);
  EXPECT_LE(a.weight(0).cwiseAbs().maxCoeff(), limit);
  EXPECT_GT(a.weight(0).cwiseAbs().maxCoeff(), 0.9 * limit);
  EXPECT_EQ(a.bias(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_ERROR_KIND(MlpModel::initialize({3, 3}, 1), ErrorKind::kUsage);
}
