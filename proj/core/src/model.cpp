#include "cfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "cfl/error.hpp"
#include "cfl/seed.hpp"

namespace cfl {
namespace {

using ConstMatrixMap = Eigen::Map<const Matrix>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXd>;
using RowMap = Eigen::Map<Eigen::RowVectorXd>;

struct Offsets {
  std::vector<std::size_t> weight;
  std::vector<std::size_t> bias;
};

Offsets layer_offsets(std::span<const std::size_t> dims) {
  Offsets off;
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    off.weight.push_back(at);
    at += dims[l] * dims[l + 1];
    off.bias.push_back(at);
    at += dims[l + 1];
  }
  return off;
}

void require_input_dim(std::span<const std::size_t> dims, const Matrix& features) {
  if (static_cast<std::size_t>(features.cols()) != dims.front()) {
    throw ConfigError("feature dimension " + std::to_string(features.cols()) +
                      " does not match model input dimension " + std::to_string(dims.front()));
  }
}

// Runs the network; stores post-ReLU activations of hidden layers when asked.
Matrix run_forward(std::span<const std::size_t> dims, std::span<const double> params,
                   const Matrix& x, std::vector<Matrix>* hidden) {
  require_input_dim(dims, x);
  const Offsets off = layer_offsets(dims);
  const std::size_t layers = dims.size() - 1;
  Matrix current;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    ConstMatrixMap w(params.data() + off.weight[l], out, in);
    ConstRowMap b(params.data() + off.bias[l], out);
    const Matrix& input = (l == 0) ? x : current;
    Matrix z = input * w.transpose();
    z.rowwise() += b;
    if (l + 1 == layers) return z;
    current = z.cwiseMax(0.0);
    if (hidden != nullptr) hidden->push_back(current);
  }
  return current;  // unreachable for layers >= 1
}

void require_labels(const Matrix& features, std::span<const int> labels, std::size_t classes) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ConfigError("feature rows and label count differ");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ConfigError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

// Turns logits into softmax probabilities in place; returns summed cross-entropy.
double softmax_cross_entropy(Matrix& logits, std::span<const int> labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    total += lse - row(labels[static_cast<std::size_t>(i)]);
    row = (row.array() - lse).exp().matrix();
  }
  return total;
}

double raw_loss_and_gradient(std::span<const std::size_t> dims, std::span<const double> params,
                             const Matrix& x, std::span<const int> labels, std::span<double> grad) {
  require_labels(x, labels, dims.back());
  std::vector<Matrix> hidden;
  hidden.reserve(dims.size());
  Matrix dz = run_forward(dims, params, x, &hidden);
  const auto batch = static_cast<double>(x.rows());
  const double loss = softmax_cross_entropy(dz, labels) / batch;
  for (Eigen::Index i = 0; i < dz.rows(); ++i) dz(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  dz /= batch;

  const Offsets off = layer_offsets(dims);
  for (std::size_t l = dims.size() - 1; l-- > 0;) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    const Matrix& input = (l == 0) ? x : hidden[l - 1];
    MatrixMap dw(grad.data() + off.weight[l], out, in);
    RowMap db(grad.data() + off.bias[l], out);
    dw.noalias() = dz.transpose() * input;
    db = dz.colwise().sum();
    if (l > 0) {
      ConstMatrixMap w(params.data() + off.weight[l], out, in);
      Matrix da = dz * w;
      dz = da.cwiseProduct((hidden[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return loss;
}

void apply_update(std::span<double> params, std::span<const double> grad, double lr,
                  const Proximal& prox) {
  if (prox.anchor != nullptr && prox.mu != 0.0) {
    const auto anchor = prox.anchor->params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i] -= lr * (grad[i] + prox.mu * (params[i] - anchor[i]));
    }
  } else {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
  }
}

void check_prox(const Model& model, const Proximal& prox) {
  if (prox.mu < 0.0) throw PreconditionError("proximal mu must be >= 0");
  if (prox.anchor != nullptr && prox.anchor->params().size() != model.params().size()) {
    throw ConfigError("proximal anchor does not match model shape");
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

Model::Model(std::vector<std::size_t> layer_dims, std::vector<double> params)
    : dims_(std::move(layer_dims)), params_(std::move(params)) {
  if (dims_.size() < 2) throw ConfigError("a model needs at least an input and an output layer");
  for (std::size_t d : dims_) {
    if (d == 0) throw ConfigError("layer dimensions must be positive");
  }
  if (params_.size() != param_count(dims_)) {
    throw ConfigError("parameter vector has " + std::to_string(params_.size()) +
                      " entries, layer dims require " + std::to_string(param_count(dims_)));
  }
  for (double p : params_) {
    if (!std::isfinite(p)) throw NumericError("non-finite model parameter", 0);
  }
}

Model Model::zeros(std::vector<std::size_t> layer_dims) {
  const std::size_t n = param_count(layer_dims);
  return Model(std::move(layer_dims), std::vector<double>(n, 0.0));
}

Model Model::glorot_uniform(std::vector<std::size_t> layer_dims, std::uint64_t seed) {
  std::vector<double> params(param_count(layer_dims), 0.0);
  const Offsets off = layer_offsets(layer_dims);
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const double fan = static_cast<double>(layer_dims[l] + layer_dims[l + 1]);
    std::uniform_real_distribution<double> u(-std::sqrt(6.0 / fan), std::sqrt(6.0 / fan));
    const std::size_t n = layer_dims[l] * layer_dims[l + 1];
    for (std::size_t i = 0; i < n; ++i) params[off.weight[l] + i] = u(rng);
  }
  return Model(std::move(layer_dims), std::move(params));
}

std::size_t Model::param_count(std::span<const std::size_t> layer_dims) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    n += layer_dims[l] * layer_dims[l + 1] + layer_dims[l + 1];
  }
  return n;
}

std::size_t Model::weight_offset(std::size_t layer) const { return layer_offsets(dims_).weight.at(layer); }
std::size_t Model::bias_offset(std::size_t layer) const { return layer_offsets(dims_).bias.at(layer); }

ModelDelta delta_between(const Model& updated, const Model& base) {
  if (updated.layer_dims() != base.layer_dims()) throw ConfigError("delta between differently shaped models");
  const auto u = updated.params();
  const auto b = base.params();
  ModelDelta d{std::vector<double>(u.size())};
  for (std::size_t i = 0; i < u.size(); ++i) d.values[i] = u[i] - b[i];
  return d;
}

Model aggregate(const Model& base, std::span<const WeightedDelta> deltas) {
  double sum = 0.0;
  for (const auto& wd : deltas) {
    if (!(wd.weight >= 0.0)) throw ContractError("aggregation weight must be nonnegative");
    if (wd.delta.size() != base.params().size()) throw ConfigError("delta length does not match model");
    sum += wd.weight;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ContractError("aggregation weights sum to " + std::to_string(sum) + ", expected 1");
  }
  // Canonical summation order (by weight, then delta contents) makes the
  // result bitwise independent of the order of the input list.
  std::vector<std::size_t> order(deltas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (deltas[a].weight != deltas[b].weight) return deltas[a].weight < deltas[b].weight;
    return std::lexicographical_compare(deltas[a].delta.begin(), deltas[a].delta.end(),
                                        deltas[b].delta.begin(), deltas[b].delta.end());
  });
  std::vector<double> out(base.params().begin(), base.params().end());
  // Accumulate the weighted sum separately so a single weight-1 delta lands exactly.
  std::vector<double> acc(out.size(), 0.0);
  for (std::size_t k : order) {
    const auto& wd = deltas[k];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += wd.weight * wd.delta[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += acc[i];
  return Model(base.layer_dims(), std::move(out));
}

Matrix forward(const Model& model, const Matrix& features) {
  return run_forward(model.layer_dims(), model.params(), features, nullptr);
}

Matrix forward(const Model& model, const Batch& batch) { return forward(model, batch.features); }

double mean_cross_entropy(const Model& model, const Matrix& features, std::span<const int> labels) {
  require_labels(features, labels, model.output_dim());
  if (labels.empty()) throw PreconditionError("cross-entropy of an empty batch");
  Matrix logits = forward(model, features);
  return softmax_cross_entropy(logits, labels) / static_cast<double>(labels.size());
}

double loss_and_gradient(const Model& model, const Matrix& features, std::span<const int> labels,
                         std::vector<double>& grad) {
  if (labels.empty()) throw PreconditionError("gradient of an empty batch");
  grad.assign(model.params().size(), 0.0);
  return raw_loss_and_gradient(model.layer_dims(), model.params(), features, labels, grad);
}

TrainResult train_epochs(const Model& model, const Dataset& data, const TrainOptions& options) {
  if (data.empty()) throw PreconditionError("cannot train on an empty dataset");
  if (options.epochs < 1) throw PreconditionError("epochs must be >= 1");
  if (!(options.lr >= 0.0)) throw PreconditionError("learning rate must be >= 0");
  if (options.batch_size < 1) throw PreconditionError("batch size must be >= 1");
  check_prox(model, options.prox);
  require_input_dim(model.layer_dims(), data.features);

  const auto& dims = model.layer_dims();
  std::vector<double> params(model.params().begin(), model.params().end());
  std::vector<double> grad(params.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(options.seed);

  TrainResult result{model, {}, 0};
  const auto dim = static_cast<Eigen::Index>(data.dim());
  Matrix xb;
  std::vector<int> yb;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const auto rows = static_cast<Eigen::Index>(end - start);
      xb.resize(rows, dim);
      yb.resize(end - start);
      for (std::size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = data.features.row(static_cast<Eigen::Index>(order[i]));
        yb[i - start] = data.labels[order[i]];
      }
      const double loss = raw_loss_and_gradient(dims, params, xb, yb, grad);
      if (!std::isfinite(loss)) throw NumericError("non-finite training loss", result.steps);
      epoch_loss += loss * static_cast<double>(end - start);
      apply_update(params, grad, options.lr, options.prox);
      ++result.steps;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  for (double p : params) {
    if (!std::isfinite(p)) throw NumericError("non-finite parameter after training", result.steps);
  }
  result.model = Model(dims, std::move(params));
  return result;
}

TrainResult train_epochs(const Model& model, const ClientDataset& data, const TrainOptions& options) {
  return train_epochs(model, data.data, options);
}

Model sgd_step(const Model& model, const Batch& batch, double lr, const Proximal& prox) {
  if (batch.labels.empty()) throw PreconditionError("SGD step on an empty batch");
  check_prox(model, prox);
  std::vector<double> grad;
  const double loss = loss_and_gradient(model, batch.features, batch.labels, grad);
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss", 0);
  std::vector<double> params(model.params().begin(), model.params().end());
  apply_update(params, grad, lr, prox);
  return Model(model.layer_dims(), std::move(params));
}

Evaluation evaluate(const Model& model, const Dataset& data) {
  if (data.empty()) throw PreconditionError("cannot evaluate on an empty dataset");
  require_labels(data.features, data.labels, model.output_dim());
  constexpr Eigen::Index kChunk = 1024;
  double loss = 0.0;
  std::size_t correct = 0;
  const auto n = static_cast<Eigen::Index>(data.size());
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index rows = std::min(kChunk, n - start);
    Matrix logits = forward(model, Matrix(data.features.middleRows(start, rows)));
    for (Eigen::Index i = 0; i < rows; ++i) {
      Eigen::Index arg = 0;
      logits.row(i).maxCoeff(&arg);
      if (arg == data.labels[static_cast<std::size_t>(start + i)]) ++correct;
    }
    loss += softmax_cross_entropy(
        logits, std::span<const int>(data.labels).subspan(static_cast<std::size_t>(start),
                                                          static_cast<std::size_t>(rows)));
  }
  const auto count = static_cast<double>(data.size());
  return {loss / count, static_cast<double>(correct) / count};
}

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  if (model.layer_dims().size() != 4) {
    throw ConfigError("checkpoints hold two-hidden-layer models (4 layer dims)");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + 8 * model.params().size());
  for (std::size_t d : model.layer_dims()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double p : model.params()) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &p, sizeof bits);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw ParseError("checkpoint header truncated", bytes.size());
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::uint32_t d = get_u32(bytes, 4 * i);
    if (d == 0) throw ParseError("zero layer dimension in checkpoint header", 4 * i);
    dims.push_back(d);
  }
  const std::size_t n = Model::param_count(dims);
  if (bytes.size() != 16 + 8 * n) {
    throw ParseError("checkpoint payload has " + std::to_string(bytes.size() - 16) + " bytes, expected " +
                         std::to_string(8 * n),
                     std::min(bytes.size(), 16 + 8 * n));
  }
  std::vector<double> params(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[16 + 8 * k + i]) << (8 * i);
    std::memcpy(&params[k], &bits, sizeof bits);
  }
  return Model(std::move(dims), std::move(params));
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace cfl
