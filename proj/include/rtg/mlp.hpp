#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rtg/error.hpp"
#include "rtg/pattern.hpp"

namespace rtg {

struct MlpConfig {
  std::size_t input_dim = 2;
  std::size_t depth = 1;  // hidden layers
  std::size_t width = 1;  // units per hidden layer
  std::size_t output_dim = 1;
  double init_std = std::sqrt(2.0);
  std::uint64_t seed = 0;

  std::size_t hidden_units() const noexcept { return depth * width; }

  void validate() const {
    require(input_dim >= 1, "MlpConfig: input_dim must be >= 1");
    require(depth >= 1, "MlpConfig: depth must be >= 1");
    require(width >= 1, "MlpConfig: width must be >= 1");
    require(output_dim >= 1, "MlpConfig: output_dim must be >= 1");
    require(std::isfinite(init_std) && init_std > 0.0, "MlpConfig: init_std must be positive");
  }

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

/// Weights and biases of a fully connected ReLU network. Layer l maps
/// activations of size in(l) to size out(l); the last layer is the affine
/// read-out with no activation.
struct MlpParams {
  MlpConfig config;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::size_t layer_count() const noexcept { return weights.size(); }

  void validate() const {
    config.validate();
    require(weights.size() == config.depth + 1 && biases.size() == config.depth + 1,
            "MlpParams: expected depth + 1 layers");
    Eigen::Index in = static_cast<Eigen::Index>(config.input_dim);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const Eigen::Index out = static_cast<Eigen::Index>(l == config.depth ? config.output_dim : config.width);
      require(weights[l].rows() == out && weights[l].cols() == in,
              "MlpParams: weight " + std::to_string(l) + " has the wrong shape");
      require(biases[l].size() == out, "MlpParams: bias " + std::to_string(l) + " has the wrong size");
      if (!weights[l].allFinite() || !biases[l].allFinite()) {
        throw NumericError("MlpParams: layer " + std::to_string(l + 1) + " has non-finite entries");
      }
      in = out;
    }
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (!(a.config == b.config) || a.weights.size() != b.weights.size() || a.biases.size() != b.biases.size()) {
      return false;
    }
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
      if (a.weights[l].rows() != b.weights[l].rows() || a.weights[l].cols() != b.weights[l].cols() ||
          a.weights[l] != b.weights[l] || a.biases[l].size() != b.biases[l].size() || a.biases[l] != b.biases[l]) {
        return false;
      }
    }
    return true;
  }
};

/// Gaussian initialization: weight std = init_std / sqrt(fan_in), bias std = init_std.
/// Draw order is layer by layer, weights row-major, then that layer's biases.
inline MlpParams init_mlp(const MlpConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  MlpParams params;
  params.config = config;
  std::size_t in = config.input_dim;
  for (std::size_t l = 0; l <= config.depth; ++l) {
    const std::size_t out = l == config.depth ? config.output_dim : config.width;
    std::normal_distribution<double> wdist(0.0, config.init_std / std::sqrt(static_cast<double>(in)));
    std::normal_distribution<double> bdist(0.0, config.init_std);
    Eigen::MatrixXd w(out, in);
    for (std::size_t r = 0; r < out; ++r)
      for (std::size_t c = 0; c < in; ++c) w(r, c) = wdist(rng);
    Eigen::VectorXd b(out);
    for (std::size_t r = 0; r < out; ++r) b(r) = bdist(rng);
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
    in = out;
  }
  return params;
}

struct ForwardResult {
  Eigen::VectorXd output;
  ActivationPattern pattern;
};

/// Outputs stored column-wise (output_dim x count), one pattern per column.
struct BatchResult {
  Eigen::MatrixXd outputs;
  std::vector<ActivationPattern> patterns;

  std::size_t size() const noexcept { return patterns.size(); }
};

namespace detail {

inline Eigen::Index first_nonfinite_column(const Eigen::MatrixXd& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    if (!m.col(c).allFinite()) return c;
  return -1;
}

}  // namespace detail

/// Evaluates columns of `xs` (input_dim x count). Pattern bit for a hidden
/// unit is set iff its pre-activation is strictly positive.
inline BatchResult forward_batch(const MlpParams& params, const Eigen::MatrixXd& xs) {
  const auto& cfg = params.config;
  require(xs.rows() == static_cast<Eigen::Index>(cfg.input_dim) || xs.cols() == 0,
          "forward: input dimension " + std::to_string(xs.rows()) + " != " + std::to_string(cfg.input_dim));
  BatchResult result;
  const Eigen::Index count = xs.cols();
  result.outputs.resize(static_cast<Eigen::Index>(cfg.output_dim), count);
  result.patterns.assign(static_cast<std::size_t>(count), ActivationPattern(cfg.hidden_units()));

  constexpr Eigen::Index kChunk = 1024;
  for (Eigen::Index start = 0; start < count; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, count - start);
    Eigen::MatrixXd act = xs.middleCols(start, len);
    if (auto bad = detail::first_nonfinite_column(act); bad >= 0) {
      throw NumericError("forward: point " + std::to_string(start + bad) + " is not finite");
    }
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
      Eigen::MatrixXd z = params.weights[l] * act;
      z.colwise() += params.biases[l];
      if (auto bad = detail::first_nonfinite_column(z); bad >= 0) {
        throw NumericError("forward: non-finite value in layer " + std::to_string(l + 1) + " at point " +
                           std::to_string(start + bad));
      }
      if (l == cfg.depth) {
        result.outputs.middleCols(start, len) = z;
        break;
      }
      const std::size_t offset = l * cfg.width;
      for (Eigen::Index c = 0; c < len; ++c) {
        auto& pattern = result.patterns[static_cast<std::size_t>(start + c)];
        for (Eigen::Index u = 0; u < z.rows(); ++u)
          if (z(u, c) > 0.0) pattern.set(offset + static_cast<std::size_t>(u));
      }
      act = z.cwiseMax(0.0);
    }
  }
  return result;
}

/// Network outputs only, skipping pattern capture.
inline Eigen::MatrixXd forward_outputs(const MlpParams& params, const Eigen::MatrixXd& xs) {
  Eigen::MatrixXd act = xs;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    Eigen::MatrixXd z = params.weights[l] * act;
    z.colwise() += params.biases[l];
    if (l + 1 == params.weights.size()) return z;
    act = z.cwiseMax(0.0);
  }
  return act;
}

inline ForwardResult forward(const MlpParams& params, const Eigen::VectorXd& x) {
  auto batch = forward_batch(params, Eigen::MatrixXd(x));
  return {batch.outputs.col(0), std::move(batch.patterns.front())};
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

// ---------------------------------------------------------------------------
// Spectral norm bound

/// Largest singular value by power iteration on W^T W.
inline double spectral_norm(const Eigen::MatrixXd& w, double rel_tol = 1e-10, int max_iter = 100000) {
  if (!w.allFinite()) throw NumericError("spectral_norm: non-finite matrix");
  if (w.size() == 0 || w.isZero(0.0)) return 0.0;
  Eigen::VectorXd v(w.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = 1.0 + static_cast<double>(detail::splitmix64(static_cast<std::uint64_t>(i)) >> 11) * 0x1.0p-53;
  }
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd u = w * v;
    Eigen::VectorXd next = w.transpose() * u;
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    const double s = std::sqrt(norm);
    next /= norm;
    const bool done = std::abs(s - sigma) <= rel_tol * s;
    sigma = s;
    v = std::move(next);
    if (done) break;
  }
  return (w * v).norm();
}

/// Product of layer spectral norms, an upper bound on the Lipschitz constant.
inline double estimate_lipschitz_upper(const MlpParams& params) {
  double product = 1.0;
  for (const auto& w : params.weights) product *= spectral_norm(w);
  return product;
}

// ---------------------------------------------------------------------------
// Datasets

/// Inputs are columns of an (input_dim x count) matrix. The first
/// floor(split * count) columns form the training partition.
struct LabeledDataset {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
  std::size_t num_classes = 2;
  double split = 0.8;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t train_count() const noexcept {
    return static_cast<std::size_t>(std::floor(split * static_cast<double>(labels.size())));
  }
  std::size_t test_count() const noexcept { return size() - train_count(); }

  Eigen::MatrixXd train_inputs() const { return inputs.leftCols(static_cast<Eigen::Index>(train_count())); }
  Eigen::MatrixXd test_inputs() const { return inputs.rightCols(static_cast<Eigen::Index>(test_count())); }
  std::vector<int> train_labels() const { return {labels.begin(), labels.begin() + train_count()}; }
  std::vector<int> test_labels() const { return {labels.begin() + train_count(), labels.end()}; }

  void validate() const {
    require(inputs.cols() == static_cast<Eigen::Index>(labels.size()), "LabeledDataset: inputs/labels length mismatch");
    require(split > 0.0 && split < 1.0, "LabeledDataset: split must lie in (0, 1)");
    for (int y : labels)
      require(y >= 0 && static_cast<std::size_t>(y) < num_classes, "LabeledDataset: label out of range");
  }
};

inline double default_circle_radius() { return std::sqrt(2.0 / M_PI); }

/// Uniform points on [-1,1]^2; label 1 iff strictly inside the circle.
inline LabeledDataset make_circle_dataset(std::size_t count, double radius, std::uint64_t seed) {
  require(count >= 10, "make_circle_dataset: count must be >= 10");
  require(radius > 0.0 && radius < std::sqrt(2.0), "make_circle_dataset: radius must lie in (0, sqrt 2)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  LabeledDataset data;
  data.inputs.resize(2, static_cast<Eigen::Index>(count));
  data.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double x = coord(rng);
    const double y = coord(rng);
    data.inputs(0, static_cast<Eigen::Index>(i)) = x;
    data.inputs(1, static_cast<Eigen::Index>(i)) = y;
    data.labels[i] = std::hypot(x, y) < radius ? 1 : 0;
  }
  return data;
}

/// Uniform points on [-1,1]^2 with labels drawn independently of the points.
inline LabeledDataset make_random_label_dataset(std::size_t count, std::size_t num_classes, std::uint64_t seed) {
  require(num_classes >= 2, "make_random_label_dataset: need at least 2 classes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::uniform_int_distribution<int> label(0, static_cast<int>(num_classes) - 1);
  LabeledDataset data;
  data.num_classes = num_classes;
  data.inputs.resize(2, static_cast<Eigen::Index>(count));
  data.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    data.inputs(0, static_cast<Eigen::Index>(i)) = coord(rng);
    data.inputs(1, static_cast<Eigen::Index>(i)) = coord(rng);
    data.labels[i] = label(rng);
  }
  return data;
}

// ---------------------------------------------------------------------------
// Loss, gradients, training

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Mean softmax cross-entropy over the columns of `xs` and its exact gradient
/// by backpropagation. At a pre-activation of exactly zero the ReLU
/// derivative is taken as 0, consistent with the pattern convention.
inline std::pair<double, Gradients> loss_and_gradient(const MlpParams& params, const Eigen::MatrixXd& xs,
                                                      const std::vector<int>& labels) {
  const std::size_t layers = params.weights.size();
  const Eigen::Index batch = xs.cols();
  require(batch > 0 && static_cast<std::size_t>(batch) == labels.size(), "loss_and_gradient: batch/labels mismatch");

  std::vector<Eigen::MatrixXd> acts;  // acts[l] is the input of layer l
  std::vector<Eigen::MatrixXd> pre;
  acts.reserve(layers);
  pre.reserve(layers);
  acts.push_back(xs);
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = params.weights[l] * acts.back();
    z.colwise() += params.biases[l];
    if (l + 1 < layers) acts.push_back(z.cwiseMax(0.0));
    pre.push_back(std::move(z));
  }

  Eigen::MatrixXd delta = pre.back();
  double loss = 0.0;
  for (Eigen::Index c = 0; c < batch; ++c) {
    const double m = delta.col(c).maxCoeff();
    auto shifted = (delta.col(c).array() - m).eval();
    const double log_sum = std::log(shifted.exp().sum());
    const int y = labels[static_cast<std::size_t>(c)];
    loss -= shifted(y) - log_sum;
    delta.col(c) = (shifted - log_sum).exp().matrix();
    delta(y, c) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(batch);
  loss *= inv;
  delta *= inv;

  Gradients grads;
  grads.weights.resize(layers);
  grads.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    grads.weights[l] = delta * acts[l].transpose();
    grads.biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = params.weights[l].transpose() * delta;
    delta = (pre[l - 1].array() > 0.0).select(back, 0.0);
  }
  return {loss, std::move(grads)};
}

inline double cross_entropy_loss(const MlpParams& params, const Eigen::MatrixXd& xs, const std::vector<int>& labels) {
  const Eigen::MatrixXd out = forward_outputs(params, xs);
  double loss = 0.0;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double m = out.col(c).maxCoeff();
    const double log_sum = m + std::log((out.col(c).array() - m).exp().sum());
    loss += log_sum - out(labels[static_cast<std::size_t>(c)], c);
  }
  return out.cols() ? loss / static_cast<double>(out.cols()) : 0.0;
}

/// Fraction of columns whose argmax output equals the label.
inline double accuracy(const MlpParams& params, const Eigen::MatrixXd& xs, const std::vector<int>& labels) {
  if (xs.cols() == 0) return 0.0;
  const Eigen::MatrixXd out = forward_outputs(params, xs);
  std::size_t hits = 0;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    Eigen::Index best = 0;
    out.col(c).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(c)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(out.cols());
}

enum class Optimizer { sgd, adam };
enum class Loss { cross_entropy };
enum class LrSchedule { constant, cosine };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 500;
  std::size_t batch_size = 128;
  Optimizer optimizer = Optimizer::adam;
  Loss loss = Loss::cross_entropy;
  /// cosine: lr * (1 + cos(pi * epoch / epochs)) / 2, held fixed within an epoch.
  LrSchedule schedule = LrSchedule::constant;
  std::uint64_t seed = 0;
  /// Stop after the first epoch whose train accuracy reaches this value.
  std::optional<double> early_stop_accuracy = 1.0;
  bool shuffle = true;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
};

struct TrainResult {
  MlpParams params;
  std::vector<EpochStats> history;
};

inline TrainResult train(MlpParams params, const LabeledDataset& data, const TrainConfig& tc) {
  params.validate();
  data.validate();
  require(params.config.output_dim >= 2, "train: cross-entropy needs output_dim >= 2");
  require(params.config.output_dim >= data.num_classes, "train: output_dim smaller than class count");
  require(tc.learning_rate >= 0.0 && std::isfinite(tc.learning_rate), "train: learning_rate must be >= 0");
  require(tc.epochs >= 1, "train: epochs must be >= 1");
  const std::size_t n_train = data.train_count();
  require(tc.batch_size >= 1 && tc.batch_size <= n_train, "train: batch_size must lie in [1, train size]");

  const Eigen::MatrixXd x_train = data.train_inputs();
  const Eigen::MatrixXd x_test = data.test_inputs();
  const auto y_train = data.train_labels();
  const auto y_test = data.test_labels();

  const std::size_t layers = params.weights.size();
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  for (std::size_t l = 0; l < layers; ++l) {
    mw.push_back(Eigen::MatrixXd::Zero(params.weights[l].rows(), params.weights[l].cols()));
    vw.push_back(mw.back());
    mb.push_back(Eigen::VectorXd::Zero(params.biases[l].size()));
    vb.push_back(mb.back());
  }
  std::uint64_t step = 0;

  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  Eigen::MatrixXd xb;
  std::vector<int> yb;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    if (tc.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double lr = tc.learning_rate;
    if (tc.schedule == LrSchedule::cosine) {
      lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / static_cast<double>(tc.epochs)));
    }
    for (std::size_t start = 0; start < n_train; start += tc.batch_size) {
      const std::size_t len = std::min(tc.batch_size, n_train - start);
      xb.resize(x_train.rows(), static_cast<Eigen::Index>(len));
      yb.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        xb.col(static_cast<Eigen::Index>(i)) = x_train.col(static_cast<Eigen::Index>(order[start + i]));
        yb[i] = y_train[order[start + i]];
      }
      auto [loss, g] = loss_and_gradient(params, xb, yb);
      if (!std::isfinite(loss)) throw NumericError("train: loss diverged in epoch " + std::to_string(epoch));
      ++step;
      for (std::size_t l = 0; l < layers; ++l) {
        if (tc.optimizer == Optimizer::sgd) {
          params.weights[l] -= lr * g.weights[l];
          params.biases[l] -= lr * g.biases[l];
          continue;
        }
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        mw[l] = beta1 * mw[l] + (1.0 - beta1) * g.weights[l];
        vw[l] = beta2 * vw[l] + (1.0 - beta2) * g.weights[l].cwiseAbs2();
        mb[l] = beta1 * mb[l] + (1.0 - beta1) * g.biases[l];
        vb[l] = beta2 * vb[l] + (1.0 - beta2) * g.biases[l].cwiseAbs2();
        params.weights[l].array() -= lr * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + adam_eps);
        params.biases[l].array() -= lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + adam_eps);
      }
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = cross_entropy_loss(params, x_train, y_train);
    stats.train_accuracy = accuracy(params, x_train, y_train);
    stats.test_loss = cross_entropy_loss(params, x_test, y_test);
    stats.test_accuracy = accuracy(params, x_test, y_test);
    if (!std::isfinite(stats.train_loss)) throw NumericError("train: loss diverged in epoch " + std::to_string(epoch));
    result.history.push_back(stats);
    if (tc.early_stop_accuracy && stats.train_accuracy >= *tc.early_stop_accuracy) break;
  }
  result.params = std::move(params);
  return result;
}

}  // namespace rtg
