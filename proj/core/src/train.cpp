#include "osmseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <nlohmann/json.hpp>

#include "io_util.hpp"
#include "osmseg/error.hpp"
#include "osmseg/rng.hpp"

namespace osmseg {

LossResult multinomial_loss(const Tensor& probs, std::span<const std::uint8_t> labels) {
  if (probs.rank() != 3) throw ShapeMismatch("probs must be [K x H x W]");
  const int k = probs.dim(0);
  const std::size_t plane = static_cast<std::size_t>(probs.dim(1)) * probs.dim(2);
  if (labels.size() != plane) {
    throw ShapeMismatch("labels have " + std::to_string(labels.size()) + " cells, probs " + std::to_string(plane));
  }
  LossResult r;
  r.grad_scores = probs;
  double* g = r.grad_scores.ptr();
  for (std::size_t i = 0; i < plane; ++i) {
    const auto label = labels[i];
    if (label >= k) throw LabelOutOfRange("label " + std::to_string(label) + " at pixel " + std::to_string(i));
    const std::size_t at = label * plane + i;
    r.loss -= std::log(std::max(probs[at], 1e-300));
    g[at] -= 1.0;
  }
  return r;
}

Tensor glorot_init(const std::vector<int>& shape, std::uint64_t seed) {
  Tensor t(shape);
  double fan_in = 1.0;
  double fan_out = 1.0;
  if (shape.size() >= 2) {
    double receptive = 1.0;
    for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
    fan_in = shape[1] * receptive;
    fan_out = shape[0] * receptive;
  } else if (shape.size() == 1) {
    fan_in = fan_out = shape[0];
  }
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng(seed);
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor bilinear_init(const std::vector<int>& shape) {
  if (shape.size() != 4 || shape[0] != shape[1] || shape[2] != shape[3] || shape[2] < 1) {
    throw ShapeMismatch("bilinear kernels must be [C x C x k x k], got " + shape_string(shape));
  }
  const int k = shape[2];
  const double factor = (k + 1) / 2;
  const double centre = k % 2 == 1 ? factor - 1.0 : factor - 0.5;
  std::vector<double> taps(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) taps[static_cast<std::size_t>(i)] = 1.0 - std::abs(i - centre) / factor;
  Tensor t(shape);
  for (int c = 0; c < shape[0]; ++c) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        t[((static_cast<std::size_t>(c) * shape[1] + c) * k + i) * k + j] =
            taps[static_cast<std::size_t>(i)] * taps[static_cast<std::size_t>(j)];
      }
    }
  }
  return t;
}

double scaled_lr0(int patch_size) {
  const double ratio = 500.0 / patch_size;
  return 5e-9 * ratio * ratio;
}

TrainConfig TrainConfig::reference() {
  TrainConfig c;
  c.lr0 = 5e-9;
  return c;
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw InvalidArgument("lr0 must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be non-negative");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout_rate must be in [0, 1)");
  if (!(lr_drop_factor > 1.0)) throw InvalidArgument("lr_drop_factor must exceed 1");
  if (max_lr_drops < 0 || patience < 1 || eval_interval < 1 || max_iterations < 0) {
    throw InvalidArgument("invalid schedule settings");
  }
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["lr0"] = c.lr0;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["bias_lr_multiplier"] = c.bias_lr_multiplier;
  j["dropout_rate"] = c.dropout_rate;
  j["lr_drop_factor"] = c.lr_drop_factor;
  j["max_lr_drops"] = c.max_lr_drops;
  j["patience"] = c.patience;
  j["min_improvement"] = c.min_improvement;
  j["eval_interval"] = c.eval_interval;
  j["max_iterations"] = c.max_iterations;
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

TrainConfig train_config_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TrainConfig c;
    c.lr0 = j.value("lr0", c.lr0);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.bias_lr_multiplier = j.value("bias_lr_multiplier", c.bias_lr_multiplier);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.lr_drop_factor = j.value("lr_drop_factor", c.lr_drop_factor);
    c.max_lr_drops = j.value("max_lr_drops", c.max_lr_drops);
    c.patience = j.value("patience", c.patience);
    c.min_improvement = j.value("min_improvement", c.min_improvement);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatViolation(std::string("train config: ") + e.what());
  }
}

OptimizerState OptimizerState::fresh(const Network& net, const TrainConfig& config) {
  OptimizerState s;
  for (const auto& info : net.parameter_info()) s.velocity.emplace_back(info.shape);
  s.lr_current = config.lr0;
  return s;
}

void sgd_momentum_step(Network& net, const std::vector<Tensor>& grads, OptimizerState& state,
                       const TrainConfig& config) {
  auto& params = net.parameters();
  const auto& info = net.parameter_info();
  if (grads.size() != params.size() || state.velocity.size() != params.size()) {
    throw ShapeMismatch("gradient/velocity list does not match the parameters");
  }
  for (std::size_t p = 0; p < grads.size(); ++p) {
    if (grads[p].shape() != params[p].shape() || state.velocity[p].shape() != params[p].shape()) {
      throw ShapeMismatch("gradient for '" + info[p].name + "' has shape " + shape_string(grads[p].shape()));
    }
    for (const double g : grads[p].data()) {
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient in '" + info[p].name + "'");
    }
  }
  for (std::size_t p = 0; p < grads.size(); ++p) {
    const bool bias = info[p].is_bias;
    const double lr = bias ? state.lr_current * config.bias_lr_multiplier : state.lr_current;
    const double decay = bias ? 0.0 : config.weight_decay;
    double* w = params[p].ptr();
    double* v = state.velocity[p].ptr();
    const double* g = grads[p].ptr();
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      v[i] = config.momentum * v[i] - lr * (g[i] + decay * w[i]);
      w[i] += v[i];
    }
  }
}

std::string history_to_csv(const TrainHistory& h) {
  std::string out = "iteration,epoch,train_loss,val_f1,lr\n";
  char line[160];
  for (const auto& r : h.records) {
    std::snprintf(line, sizeof line, "%ld,%.6f,%.10g,%.10g,%.6g\n", r.iteration, r.epoch, r.train_loss,
                  r.val_f1, r.lr);
    out += line;
  }
  return out;
}

Tensor patch_tensor(const Patch& p) {
  return Tensor({3, p.size, p.size}, center_patch(p));
}

namespace {

std::vector<std::uint8_t> argmax_labels(const Tensor& probs) {
  const int k = probs.dim(0);
  const std::size_t plane = static_cast<std::size_t>(probs.dim(1)) * probs.dim(2);
  std::vector<std::uint8_t> out(plane, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    double best = probs[i];
    for (int c = 1; c < k; ++c) {
      const double v = probs[c * plane + i];
      if (v > best) {
        best = v;
        out[i] = static_cast<std::uint8_t>(c);
      }
    }
  }
  return out;
}

}  // namespace

ConfusionMatrix evaluate(const Network& net, std::span<const Patch> patches) {
  ConfusionMatrix cm;
  for (const auto& p : patches) {
    const auto r = net_forward(net, patch_tensor(p), false, 0, false);
    cm = accumulate(cm, argmax_labels(r.probs), p.labels);
  }
  return cm;
}

TrainResult train_loop(Network net, std::span<const Patch> patches, const TrainConfig& config,
                       const TrainOptions& options) {
  config.validate();
  if (!net.allocated()) net.initialize(config.seed);
  std::vector<const Patch*> train;
  std::vector<Patch> val;
  std::vector<Tensor> inputs;
  for (const auto& p : patches) {
    if (p.split == SplitTag::train) {
      train.push_back(&p);
      inputs.push_back(patch_tensor(p));
    } else if (p.split == SplitTag::val) {
      val.push_back(p);
    }
  }
  if (train.empty() || val.empty()) throw InvalidArgument("training needs non-empty train and val splits");

  TrainResult result{net, {}};
  OptimizerState state = OptimizerState::fresh(net, config);
  state.best_val_f1 = scores(evaluate(net, val)).avg_f1;
  result.history.initial_val_f1 = state.best_val_f1;

  auto save_best = [&] {
    if (!options.checkpoint_dir.empty()) save_checkpoint(options.checkpoint_dir / "best", result.network);
  };
  save_best();

  Rng order_rng(mix_seed(config.seed, 0x5eed));
  std::vector<std::size_t> order(train.size());
  std::size_t cursor = order.size();
  double loss_sum = 0.0;
  long loss_count = 0;

  for (long it = 1; it <= config.max_iterations; ++it) {
    if (cursor == order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
      cursor = 0;
    }
    const std::size_t idx = order[cursor++];
    const auto fwd = net_forward(net, inputs[idx], true, mix_seed(config.seed, static_cast<std::uint64_t>(it)));
    const auto loss = multinomial_loss(fwd.probs, train[idx]->labels);
    const auto grads = net_backward(net, fwd.cache, loss.grad_scores);
    sgd_momentum_step(net, grads, state, config);
    loss_sum += loss.loss;
    ++loss_count;

    if (it % config.eval_interval != 0 && it != config.max_iterations) continue;
    HistoryRecord rec;
    rec.iteration = it;
    rec.epoch = static_cast<double>(it) / static_cast<double>(train.size());
    rec.train_loss = loss_sum / static_cast<double>(loss_count);
    rec.val_f1 = scores(evaluate(net, val)).avg_f1;
    rec.lr = state.lr_current;
    loss_sum = 0.0;
    loss_count = 0;
    result.history.records.push_back(rec);
    if (options.on_eval) options.on_eval(rec);

    if (rec.val_f1 > state.best_val_f1 + config.min_improvement) {
      state.best_val_f1 = rec.val_f1;
      state.evals_since_best = 0;
      result.network = net;
      result.history.best_iteration = it;
      save_best();
    } else if (++state.evals_since_best >= config.patience) {
      if (state.drops_done >= config.max_lr_drops) break;
      state.lr_current /= config.lr_drop_factor;
      ++state.drops_done;
      state.evals_since_best = 0;
    }
  }
  if (!options.checkpoint_dir.empty()) {
    detail::write_text_file(options.checkpoint_dir / "history.csv", history_to_csv(result.history));
  }
  return result;
}

TrainResult fine_tune(const Network& checkpoint, const NetworkSpec& target, std::span<const Patch> patches,
                      const TrainConfig& config, const TrainOptions& options) {
  if (spec_hash(checkpoint.spec()) != spec_hash(target)) {
    throw SpecMismatch("checkpoint spec " + spec_hash(checkpoint.spec()) + " does not match target " +
                       spec_hash(target));
  }
  if (!checkpoint.allocated()) throw InvalidArgument("checkpoint has no parameters");
  return train_loop(checkpoint, patches, config, options);
}

}  // namespace osmseg
