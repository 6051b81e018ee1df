#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "osmseg/dataset.hpp"
#include "osmseg/metrics.hpp"
#include "osmseg/network.hpp"
#include "osmseg/tensor.hpp"

namespace osmseg {

struct LossResult {
  double loss = 0.0;
  Tensor grad_scores;  // probs - onehot(labels)
};

// Sum over pixels of -ln(probs[label]), the argument clamped at 1e-300.
// Throws LabelOutOfRange and ShapeMismatch.
LossResult multinomial_loss(const Tensor& probs, std::span<const std::uint8_t> labels);

// Uniform on +-sqrt(6 / (fan_in + fan_out)); for [out, in, k, k] shapes
// fan_in = in*k*k and fan_out = out*k*k.
Tensor glorot_init(const std::vector<int>& shape, std::uint64_t seed);

// [C x C x k x k] transposed-convolution kernel with separable bilinear taps
// on the channel diagonal. Throws ShapeMismatch for other shapes.
Tensor bilinear_init(const std::vector<int>& shape);

// lr0 that keeps the per-pixel step of the reference schedule (5e-9 on
// 500 x 500 patches with a summed loss) for a smaller patch side.
double scaled_lr0(int patch_size);

struct TrainConfig {
  double lr0 = scaled_lr0(64);
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double bias_lr_multiplier = 2.0;
  double dropout_rate = 0.5;
  double lr_drop_factor = 10.0;
  int max_lr_drops = 2;
  int patience = 5;
  double min_improvement = 1e-4;
  int eval_interval = 100;
  long max_iterations = 10000;
  std::uint64_t seed = 0;

  // The reference configuration for 500 x 500 patches.
  static TrainConfig reference();
  void validate() const;
};

std::string train_config_to_json(const TrainConfig& c);
// Missing keys keep the defaults.
TrainConfig train_config_from_json(const std::string& text);

struct OptimizerState {
  std::vector<Tensor> velocity;
  double lr_current = 0.0;
  int drops_done = 0;
  double best_val_f1 = -1.0;
  int evals_since_best = 0;

  static OptimizerState fresh(const Network& net, const TrainConfig& config);
};

// g' = g + weight_decay * w (weights only); v = momentum * v - lr_eff * g';
// w += v. Bias tensors use lr * bias_lr_multiplier. Throws NonFiniteGradient
// before touching any parameter.
void sgd_momentum_step(Network& net, const std::vector<Tensor>& grads, OptimizerState& state,
                       const TrainConfig& config);

struct HistoryRecord {
  long iteration = 0;
  double epoch = 0.0;
  double train_loss = 0.0;  // mean summed patch loss since the previous record
  double val_f1 = 0.0;
  double lr = 0.0;

  bool operator==(const HistoryRecord&) const = default;
};

struct TrainHistory {
  std::vector<HistoryRecord> records;
  double initial_val_f1 = 0.0;
  long best_iteration = 0;
  bool operator==(const TrainHistory&) const = default;
};

std::string history_to_csv(const TrainHistory& h);

struct TrainOptions {
  // When set, the best checkpoint is written here as `<dir>/best` and the
  // history as `<dir>/history.csv`.
  std::filesystem::path checkpoint_dir;
  // Called after each evaluation.
  std::function<void(const HistoryRecord&)> on_eval;
};

struct TrainResult {
  Network network;  // parameters of the best validation evaluation
  TrainHistory history;
};

// Centres an image patch into a network input tensor.
Tensor patch_tensor(const Patch& p);

// Confusion matrix of the network's argmax over the patches (dropout off).
ConfusionMatrix evaluate(const Network& net, std::span<const Patch> patches);

// Single-patch SGD over a seeded shuffle of the train-tagged patches with
// early stopping on the macro F1 of the val-tagged patches. The starting
// parameters count as evaluation zero.
TrainResult train_loop(Network net, std::span<const Patch> patches, const TrainConfig& config,
                       const TrainOptions& options = {});

// train_loop from checkpoint parameters with fresh optimizer state. Throws
// SpecMismatch when the checkpoint's spec differs from `target`.
TrainResult fine_tune(const Network& checkpoint, const NetworkSpec& target,
                      std::span<const Patch> patches, const TrainConfig& config,
                      const TrainOptions& options = {});

}  // namespace osmseg
