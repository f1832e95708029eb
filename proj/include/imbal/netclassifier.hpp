#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "imbal/featurestore.hpp"

namespace imbal {

enum class ClassWeighting { kUniform, kInverseFrequency };

const char* to_string(ClassWeighting w);
ClassWeighting parse_class_weighting(std::string_view name);

struct TrainConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 30;
  ClassWeighting class_weighting = ClassWeighting::kUniform;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t init_seed = 0;
  std::vector<int> hidden_layers = {256, 64};

  void validate() const;
};

/// (w0, w1): per-class loss multipliers.
using ClassWeights = std::pair<double, double>;

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before the log.
inline constexpr double kProbClamp = 1e-12;

/// Feed-forward net: rectifier hidden layers, two-way softmax output.
/// weights[l] has shape (layer_dims[l+1], layer_dims[l]).
class MlpModel {
 public:
  /// Fan-in scaled uniform weights, zero biases.
  static MlpModel initialize(std::vector<int> layer_dims, std::uint64_t seed);
  /// All parameters zero; every score is exactly 0.5.
  static MlpModel zeros(std::vector<int> layer_dims);

  const std::vector<int>& layer_dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  std::size_t num_layers() const { return weights_.size(); }
  std::uint64_t seed() const { return seed_; }

  const Eigen::MatrixXd& weight(std::size_t layer) const { return weights_[layer]; }
  const Eigen::VectorXd& bias(std::size_t layer) const { return biases_[layer]; }

  /// Parameters flattened layer by layer: W (row-major) then b.
  std::size_t num_parameters() const;
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> params);

  /// Softmax class probabilities, one row per input row.
  Eigen::MatrixX2d forward(const RowMatrix& x) const;

  void save(const std::filesystem::path& path) const;
  static MlpModel load(const std::filesystem::path& path);

  friend bool operator==(const MlpModel& a, const MlpModel& b);

 private:
  friend struct StepAccess;
  MlpModel(std::vector<int> dims, std::uint64_t seed);

  std::vector<int> dims_;
  std::uint64_t seed_ = 0;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
  // Momentum buffers; optimizer state, not part of the checkpoint.
  std::vector<Eigen::MatrixXd> weight_velocity_;
  std::vector<Eigen::VectorXd> bias_velocity_;
};

/// w_j = N / (2 * N_j).
ClassWeights compute_class_weights(std::span<const int> labels);

/// -(1/N) * sum_i alpha_i * log p_i[y_i], alpha_i = w[y_i].
double weighted_ce_loss(const Eigen::MatrixX2d& probs, std::span<const int> labels,
                        ClassWeights weights);

struct LossAndGradient {
  double loss = 0.0;
  /// Same layout as MlpModel::flat_parameters().
  std::vector<double> gradient;
};

/// Exact backpropagated gradient of weighted_ce_loss over one batch.
LossAndGradient loss_gradient(const MlpModel& model, const RowMatrix& x,
                              std::span<const int> labels, ClassWeights weights);

/// One momentum-SGD update; returns the pre-update batch loss.
double loss_gradient_step(MlpModel& model, const RowMatrix& x,
                          std::span<const int> labels, ClassWeights weights,
                          const TrainConfig& config);

struct FitResult {
  MlpModel model;
  std::vector<double> loss_history;  // mean training loss per epoch
  ClassWeights class_weights;
};

FitResult fit(MlpModel model, const LabeledDataset& train,
              const TrainConfig& config);

/// Builds input -> hidden_layers -> 2 and trains it.
FitResult fit(const LabeledDataset& train, const TrainConfig& config);

/// Positive-class probability per row.
std::vector<double> predict_scores(const MlpModel& model, const RowMatrix& x);
std::vector<double> predict_scores(const MlpModel& model,
                                   const FeatureMatrix& features);

}  // namespace imbal
