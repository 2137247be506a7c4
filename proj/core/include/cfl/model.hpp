#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cfl/dataset.hpp"

namespace cfl {

/// Dense ReLU network with a linear output layer (logits).
///
/// Parameters live in one flat vector. Layer l (mapping dims[l] -> dims[l+1])
/// contributes its weight matrix in row-major [out][in] order followed by its
/// bias vector [out]; layers are laid out in increasing l. Hidden layers use
/// ReLU, the last layer is linear and is read through a softmax.
class Model {
 public:
  Model(std::vector<std::size_t> layer_dims, std::vector<double> params);

  static Model zeros(std::vector<std::size_t> layer_dims);

  /// Uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))) weights, zero biases.
  static Model glorot_uniform(std::vector<std::size_t> layer_dims, std::uint64_t seed);

  static std::size_t param_count(std::span<const std::size_t> layer_dims);

  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t num_layers() const noexcept { return dims_.size() - 1; }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t output_dim() const noexcept { return dims_.back(); }

  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;

  bool operator==(const Model&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> params_;
};

/// Parameter-space difference, same ordering as Model::params().
struct ModelDelta {
  std::vector<double> values;
};

/// updated - base.
ModelDelta delta_between(const Model& updated, const Model& base);

struct WeightedDelta {
  std::span<const double> delta;
  double weight = 0.0;
};

/// base + sum_k weight_k * delta_k.
///
/// Weights must be nonnegative and sum to 1 within 1e-9 (ContractError);
/// every delta must match the base parameter count (ConfigError). The result
/// does not depend on the order of `deltas`.
Model aggregate(const Model& base, std::span<const WeightedDelta> deltas);

struct Batch {
  Matrix features;
  std::vector<int> labels;
};

Matrix forward(const Model& model, const Matrix& features);
Matrix forward(const Model& model, const Batch& batch);

/// Mean softmax cross-entropy of `model` on (features, labels).
double mean_cross_entropy(const Model& model, const Matrix& features, std::span<const int> labels);

/// Mean cross-entropy and its gradient with respect to the flat parameters.
double loss_and_gradient(const Model& model, const Matrix& features, std::span<const int> labels,
                         std::vector<double>& grad);

/// Optional proximal term mu/2 * ||w - anchor||^2 added to the training loss.
struct Proximal {
  const Model* anchor = nullptr;
  double mu = 0.0;
};

struct TrainOptions {
  std::size_t epochs = 1;
  double lr = 0.01;
  std::size_t batch_size = 20;
  std::uint64_t seed = 0;
  Proximal prox{};
};

struct TrainResult {
  Model model;
  /// Mean per-sample training loss of each epoch, measured before each step.
  std::vector<double> epoch_losses;
  std::size_t steps = 0;
};

/// Mini-batch SGD over `data` for `options.epochs` full passes.
///
/// Each epoch visits ceil(d / batch_size) batches in an order produced by a
/// Fisher-Yates shuffle drawn from `options.seed`.
TrainResult train_epochs(const Model& model, const Dataset& data, const TrainOptions& options);
TrainResult train_epochs(const Model& model, const ClientDataset& data, const TrainOptions& options);

/// One SGD step on `batch`, optionally with a proximal pull towards an anchor.
Model sgd_step(const Model& model, const Batch& batch, double lr, const Proximal& prox = {});

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const Model& model, const Dataset& data);

/// Checkpoint layout (all little-endian):
///   bytes [0, 16):  four uint32 layer dims (input, hidden1, hidden2, output)
///   bytes [16, ..): param_count float64 values in Model::params() order
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace cfl
