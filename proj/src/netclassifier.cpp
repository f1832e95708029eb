#include "imbal/netclassifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "imbal/error.hpp"
#include "imbal/random.hpp"

namespace imbal {

const char* to_string(ClassWeighting w) {
  return w == ClassWeighting::kUniform ? "uniform" : "inverse_frequency";
}

ClassWeighting parse_class_weighting(std::string_view name) {
  if (name == "uniform") return ClassWeighting::kUniform;
  if (name == "inverse_frequency") return ClassWeighting::kInverseFrequency;
  fail(ErrorKind::kConfig, "unknown class weighting '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorKind::kUsage, "learning_rate must be a finite non-negative number");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    fail(ErrorKind::kUsage, "momentum must lie in [0, 1)");
  }
  if (batch_size < 1) fail(ErrorKind::kUsage, "batch_size must be >= 1");
  if (epochs < 1) fail(ErrorKind::kUsage, "epochs must be >= 1");
  for (int h : hidden_layers) {
    if (h < 1) fail(ErrorKind::kUsage, "hidden layer widths must be >= 1");
  }
}

MlpModel::MlpModel(std::vector<int> dims, std::uint64_t seed)
    : dims_(std::move(dims)), seed_(seed) {
  if (dims_.size() < 2) fail(ErrorKind::kUsage, "model needs at least input and output layers");
  if (dims_.back() != 2) fail(ErrorKind::kUsage, "output layer must have 2 units");
  for (int d : dims_) {
    if (d < 1) fail(ErrorKind::kUsage, "layer widths must be positive");
  }
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    weights_.push_back(Eigen::MatrixXd::Zero(dims_[l + 1], dims_[l]));
    biases_.push_back(Eigen::VectorXd::Zero(dims_[l + 1]));
    weight_velocity_.push_back(Eigen::MatrixXd::Zero(dims_[l + 1], dims_[l]));
    bias_velocity_.push_back(Eigen::VectorXd::Zero(dims_[l + 1]));
  }
}

MlpModel MlpModel::zeros(std::vector<int> layer_dims) {
  return MlpModel(std::move(layer_dims), 0);
}

MlpModel MlpModel::initialize(std::vector<int> layer_dims, std::uint64_t seed) {
  MlpModel m(std::move(layer_dims), seed);
  Rng rng(seed);
  for (auto& w : m.weights_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
    // Row-major fill so the draw order matches the flat layout.
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = (2.0 * uniform_unit(rng) - 1.0) * limit;
      }
    }
  }
  return m;
}

std::size_t MlpModel::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

std::vector<double> MlpModel::flat_parameters() const {
  std::vector<double> out;
  out.reserve(num_parameters());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto& w = weights_[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) out.push_back(w(r, c));
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) out.push_back(biases_[l](r));
  }
  return out;
}

void MlpModel::set_flat_parameters(std::span<const double> params) {
  if (params.size() != num_parameters()) {
    fail(ErrorKind::kUsage, "parameter count mismatch");
  }
  std::size_t i = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto& w = weights_[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = params[i++];
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l](r) = params[i++];
  }
}

namespace {

void softmax_rows(Eigen::MatrixX2d& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = std::max(z(i, 0), z(i, 1));
    const double e0 = std::exp(z(i, 0) - m);
    const double e1 = std::exp(z(i, 1) - m);
    const double s = e0 + e1;
    z(i, 0) = e0 / s;
    z(i, 1) = e1 / s;
  }
}

void check_input(const MlpModel& model, const RowMatrix& x) {
  if (x.cols() != model.input_dim()) {
    fail(ErrorKind::kUsage, "feature dim " + std::to_string(x.cols()) +
                                " does not match model input dim " +
                                std::to_string(model.input_dim()));
  }
}

struct LayerGradients {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;
};

LayerGradients backprop(const MlpModel& model, const RowMatrix& x,
                        std::span<const int> labels, ClassWeights weights) {
  check_input(model, x);
  const auto n = x.rows();
  if (n == 0) fail(ErrorKind::kUsage, "empty batch");
  if (static_cast<std::size_t>(n) != labels.size()) {
    fail(ErrorKind::kUsage, "batch has " + std::to_string(n) + " rows but " +
                                std::to_string(labels.size()) + " labels");
  }
  const std::size_t depth = model.num_layers();

  // activations[l] is the input to layer l.
  std::vector<Eigen::MatrixXd> activations;
  activations.reserve(depth);
  activations.emplace_back(x);
  Eigen::MatrixXd z;
  for (std::size_t l = 0; l < depth; ++l) {
    z = activations[l] * model.weight(l).transpose();
    z.rowwise() += model.bias(l).transpose();
    if (l + 1 < depth) activations.emplace_back(z.cwiseMax(0.0));
  }
  Eigen::MatrixX2d probs = z;
  softmax_rows(probs);

  LayerGradients g;
  g.loss = weighted_ce_loss(probs, labels, weights);

  // dL/dlogits = alpha_i * (p_i - y_i) / N
  Eigen::MatrixXd delta = probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double alpha = y == 1 ? weights.second : weights.first;
    delta(i, y) -= 1.0;
    delta.row(i) *= alpha / static_cast<double>(n);
  }

  g.dw.resize(depth);
  g.db.resize(depth);
  for (std::size_t l = depth; l-- > 0;) {
    g.dw[l] = delta.transpose() * activations[l];
    g.db[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = delta * model.weight(l);
      delta = (activations[l].array() > 0.0).select(back, 0.0);
    }
  }

  bool finite = std::isfinite(g.loss);
  for (std::size_t l = 0; l < depth && finite; ++l) {
    finite = g.dw[l].allFinite() && g.db[l].allFinite();
  }
  if (!finite) {
    fail(ErrorKind::kNumeric, "non-finite loss or gradient (loss=" +
                                  std::to_string(g.loss) + ")");
  }
  return g;
}

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

constexpr char kCheckpointMagic[4] = {'I', 'M', 'L', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

Eigen::MatrixX2d MlpModel::forward(const RowMatrix& x) const {
  check_input(*this, x);
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = a * weights_[l].transpose();
    z.rowwise() += biases_[l].transpose();
    a = l + 1 < weights_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  Eigen::MatrixX2d probs = a;
  softmax_rows(probs);
  return probs;
}

void MlpModel::save(const std::filesystem::path& path) const {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  append_u32(out, kCheckpointVersion);
  append_u64(out, seed_);
  append_u32(out, static_cast<std::uint32_t>(dims_.size()));
  for (int d : dims_) append_u32(out, static_cast<std::uint32_t>(d));
  for (double p : flat_parameters()) append_u64(out, std::bit_cast<std::uint64_t>(p));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

MlpModel MlpModel::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::string where = "'" + path.string() + "'";
  if (bytes.size() < 20 || std::memcmp(p, kCheckpointMagic, 4) != 0) {
    fail(ErrorKind::kFormat, where + ": not a model checkpoint");
  }
  if (read_le(p + 4, 4) != kCheckpointVersion) {
    fail(ErrorKind::kFormat, where + ": unsupported checkpoint version");
  }
  const std::uint64_t seed = read_le(p + 8, 8);
  const std::uint64_t n_dims = read_le(p + 16, 4);
  std::size_t off = 20;
  if (n_dims < 2 || bytes.size() < off + 4 * n_dims) {
    fail(ErrorKind::kFormat, where + ": truncated layer table");
  }
  std::vector<int> dims;
  for (std::uint64_t i = 0; i < n_dims; ++i, off += 4) {
    const auto d = read_le(p + off, 4);
    if (d == 0 || d > 1u << 24) fail(ErrorKind::kFormat, where + ": bad layer width");
    dims.push_back(static_cast<int>(d));
  }
  MlpModel m(std::move(dims), seed);
  const std::size_t count = m.num_parameters();
  if (bytes.size() != off + 8 * count) {
    fail(ErrorKind::kFormat, where + ": payload size does not match layer table");
  }
  std::vector<double> params(count);
  for (std::size_t i = 0; i < count; ++i) {
    params[i] = std::bit_cast<double>(read_le(p + off + 8 * i, 8));
    if (!std::isfinite(params[i])) fail(ErrorKind::kData, where + ": non-finite parameter");
  }
  m.set_flat_parameters(params);
  return m;
}

bool operator==(const MlpModel& a, const MlpModel& b) {
  return a.dims_ == b.dims_ && a.seed_ == b.seed_ &&
         a.flat_parameters() == b.flat_parameters();
}

ClassWeights compute_class_weights(std::span<const int> labels) {
  const auto n1 = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const auto n0 = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 0));
  if (n0 + n1 != labels.size()) fail(ErrorKind::kData, "labels must be 0 or 1");
  if (n0 == 0 || n1 == 0) {
    fail(ErrorKind::kUsage, "class weights need both classes present");
  }
  const auto total = static_cast<double>(labels.size());
  return {total / (2.0 * static_cast<double>(n0)),
          total / (2.0 * static_cast<double>(n1))};
}

double weighted_ce_loss(const Eigen::MatrixX2d& probs, std::span<const int> labels,
                        ClassWeights weights) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    fail(ErrorKind::kUsage, "loss: " + std::to_string(probs.rows()) +
                                " predictions for " + std::to_string(labels.size()) +
                                " labels");
  }
  if (labels.empty()) fail(ErrorKind::kUsage, "loss: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1) fail(ErrorKind::kData, "labels must be 0 or 1");
    const double alpha = y == 1 ? weights.second : weights.first;
    const double p = std::clamp(probs(static_cast<Eigen::Index>(i), y), kProbClamp,
                                1.0 - kProbClamp);
    sum += alpha * std::log(p);
  }
  return -sum / static_cast<double>(labels.size());
}

LossAndGradient loss_gradient(const MlpModel& model, const RowMatrix& x,
                              std::span<const int> labels, ClassWeights weights) {
  const LayerGradients g = backprop(model, x, labels, weights);
  LossAndGradient out{g.loss, {}};
  out.gradient.reserve(model.num_parameters());
  for (std::size_t l = 0; l < g.dw.size(); ++l) {
    for (Eigen::Index r = 0; r < g.dw[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < g.dw[l].cols(); ++c) out.gradient.push_back(g.dw[l](r, c));
    }
    for (Eigen::Index r = 0; r < g.db[l].size(); ++r) out.gradient.push_back(g.db[l](r));
  }
  return out;
}

struct StepAccess {
  static double step(MlpModel& m, const RowMatrix& x, std::span<const int> labels,
                     ClassWeights weights, const TrainConfig& config) {
    const LayerGradients g = backprop(m, x, labels, weights);
    for (std::size_t l = 0; l < m.weights_.size(); ++l) {
      m.weight_velocity_[l] = config.momentum * m.weight_velocity_[l] -
                              config.learning_rate * g.dw[l];
      m.bias_velocity_[l] = config.momentum * m.bias_velocity_[l] -
                            config.learning_rate * g.db[l];
      m.weights_[l] += m.weight_velocity_[l];
      m.biases_[l] += m.bias_velocity_[l];
      if (!m.weights_[l].allFinite() || !m.biases_[l].allFinite()) {
        fail(ErrorKind::kNumeric, "parameters became non-finite in layer " +
                                      std::to_string(l));
      }
    }
    return g.loss;
  }
};

double loss_gradient_step(MlpModel& model, const RowMatrix& x,
                          std::span<const int> labels, ClassWeights weights,
                          const TrainConfig& config) {
  config.validate();
  return StepAccess::step(model, x, labels, weights, config);
}

FitResult fit(MlpModel model, const LabeledDataset& train, const TrainConfig& config) {
  config.validate();
  train.require_both_classes("fit");
  const RowMatrix& x = train.features.values();
  check_input(model, x);

  const ClassWeights weights = config.class_weighting == ClassWeighting::kInverseFrequency
                                   ? compute_class_weights(train.labels)
                                   : ClassWeights{1.0, 1.0};
  const std::size_t n = train.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.shuffle_seed);

  FitResult result{std::move(model), {}, weights};
  result.loss_history.reserve(static_cast<std::size_t>(config.epochs));
  RowMatrix xb;
  std::vector<int> yb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      xb.resize(static_cast<Eigen::Index>(len), x.cols());
      yb.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        xb.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(order[start + i]));
        yb[i] = train.labels[order[start + i]];
      }
      try {
        epoch_loss += StepAccess::step(result.model, xb, yb, weights, config) *
                      static_cast<double>(len);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumeric) throw;
        fail(ErrorKind::kNumeric, "epoch " + std::to_string(epoch) + ", batch at " +
                                      std::to_string(start) + ": " + e.what());
      }
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(n));
  }
  return result;
}

FitResult fit(const LabeledDataset& train, const TrainConfig& config) {
  config.validate();
  std::vector<int> dims{static_cast<int>(train.features.dim())};
  dims.insert(dims.end(), config.hidden_layers.begin(), config.hidden_layers.end());
  dims.push_back(2);
  return fit(MlpModel::initialize(std::move(dims), config.init_seed), train, config);
}

std::vector<double> predict_scores(const MlpModel& model, const RowMatrix& x) {
  const Eigen::MatrixX2d probs = model.forward(x);
  std::vector<double> scores(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) scores[static_cast<std::size_t>(i)] = probs(i, 1);
  return scores;
}

std::vector<double> predict_scores(const MlpModel& model, const FeatureMatrix& features) {
  return predict_scores(model, features.values());
}

}  // namespace imbal
