#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ps4pro/config.hpp"
#include "ps4pro/tensor.hpp"

namespace ps4pro {

struct TrainConfig {
  int total_epochs = 300;
  int batch_size = 16;
  double peak_lr = 3e-4;
  double final_lr = 3e-6;
  int warmup_steps = 2000;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double loss_lambda = 0.005;      // perceptual weight
  double grad_clip_norm = 1.0;     // <= 0 disables
  int teacher_cutoff_epochs = -1;  // -1: derived from total_epochs
  int checkpoint_every = 1;        // epochs
  std::uint64_t seed = 0;

  void validate() const {
    PS4_REQUIRE(total_epochs >= 0, "total_epochs must be >= 0");
    PS4_REQUIRE(batch_size >= 1, "batch_size must be >= 1");
    PS4_REQUIRE(final_lr > 0 && final_lr <= peak_lr, "need 0 < final_lr <= peak_lr");
    PS4_REQUIRE(warmup_steps >= 1, "warmup_steps must be >= 1");
    PS4_REQUIRE(loss_lambda >= 0, "lambda must be >= 0");
  }

  /// Distillation phase length: explicit value, or 200/300 of the schedule.
  int effective_teacher_cutoff() const {
    if (teacher_cutoff_epochs >= 0) return teacher_cutoff_epochs;
    return static_cast<int>(std::lround(200.0 / 300.0 * total_epochs));
  }

  KeyValues to_key_values() const {
    KeyValues kv;
    kv.set_int("train.total_epochs", total_epochs);
    kv.set_int("train.batch_size", batch_size);
    kv.set_double("train.peak_lr", peak_lr);
    kv.set_double("train.final_lr", final_lr);
    kv.set_int("train.warmup_steps", warmup_steps);
    kv.set_double("train.weight_decay", weight_decay);
    kv.set_double("train.beta1", beta1);
    kv.set_double("train.beta2", beta2);
    kv.set_double("train.epsilon", epsilon);
    kv.set_double("train.lambda", loss_lambda);
    kv.set_double("train.grad_clip_norm", grad_clip_norm);
    kv.set_int("train.teacher_cutoff_epochs", teacher_cutoff_epochs);
    kv.set_int("train.checkpoint_every", checkpoint_every);
    kv.set_int("train.seed", static_cast<long long>(seed));
    return kv;
  }

  static TrainConfig from_key_values(const KeyValues& kv) {
    TrainConfig c;
    c.total_epochs = static_cast<int>(kv.get_int_or("train.total_epochs", c.total_epochs));
    c.batch_size = static_cast<int>(kv.get_int_or("train.batch_size", c.batch_size));
    c.peak_lr = kv.get_double_or("train.peak_lr", c.peak_lr);
    c.final_lr = kv.get_double_or("train.final_lr", c.final_lr);
    c.warmup_steps = static_cast<int>(kv.get_int_or("train.warmup_steps", c.warmup_steps));
    c.weight_decay = kv.get_double_or("train.weight_decay", c.weight_decay);
    c.beta1 = kv.get_double_or("train.beta1", c.beta1);
    c.beta2 = kv.get_double_or("train.beta2", c.beta2);
    c.epsilon = kv.get_double_or("train.epsilon", c.epsilon);
    c.loss_lambda = kv.get_double_or("train.lambda", c.loss_lambda);
    c.grad_clip_norm = kv.get_double_or("train.grad_clip_norm", c.grad_clip_norm);
    c.teacher_cutoff_epochs =
        static_cast<int>(kv.get_int_or("train.teacher_cutoff_epochs", c.teacher_cutoff_epochs));
    c.checkpoint_every = static_cast<int>(kv.get_int_or("train.checkpoint_every", c.checkpoint_every));
    c.seed = static_cast<std::uint64_t>(kv.get_int_or("train.seed", 0));
    c.validate();
    return c;
  }
};

/// Learning rate at `step` of a warmup + cosine-annealing schedule:
/// linear 0 -> peak over warmup_steps, then cosine peak -> final.
inline double lr_at_step(long long step, const TrainConfig& config, long long max_steps) {
  PS4_REQUIRE(step >= 0 && step <= max_steps, "step outside [0, max_steps]");
  if (step < config.warmup_steps)
    return config.peak_lr * static_cast<double>(step + 1) / config.warmup_steps;
  const long long span = max_steps - config.warmup_steps;
  const double progress =
      span > 0 ? static_cast<double>(step - config.warmup_steps) / static_cast<double>(span) : 1.0;
  return config.final_lr +
         0.5 * (config.peak_lr - config.final_lr) * (1.0 + std::cos(M_PI * progress));
}

template <typename T>
struct AdamWState {
  std::vector<Tensor<T>> m, v;
  long long step_count = 0;
  long long skipped_steps = 0;

  static AdamWState shaped_like(const std::vector<std::shared_ptr<Tensor<T>>>& params) {
    AdamWState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.emplace_back(p->shape());
      s.v.emplace_back(p->shape());
    }
    return s;
  }
};

/// Global-norm gradient clip; returns the pre-clip norm.
template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (std::size_t i = 0; i < g.numel(); ++i) sq += static_cast<double>(g[i]) * g[i];
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& g : grads)
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= f;
  }
  return norm;
}

/// One decoupled-weight-decay Adam update:
///   param <- param - lr*(m_hat/(sqrt(v_hat)+eps) + weight_decay*param).
/// Non-finite gradients skip the step and bump the skip counter.
/// Returns true when the update was applied.
template <typename T>
bool optimizer_step(std::vector<std::shared_ptr<Tensor<T>>>& params,
                    const std::vector<Tensor<T>>& grads, AdamWState<T>& state, double lr,
                    const TrainConfig& config) {
  PS4_REQUIRE(params.size() == grads.size() && params.size() == state.m.size(),
              "optimizer arrays misaligned");
  for (std::size_t p = 0; p < params.size(); ++p) {
    PS4_REQUIRE(params[p]->same_shape(grads[p]), "gradient shape mismatch");
    if (!grads[p].all_finite()) {
      ++state.skipped_steps;
      return false;
    }
  }
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step_count));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& w = *params[p];
    const Tensor<T>& g = grads[p];
    Tensor<T>& m = state.m[p];
    Tensor<T>& v = state.v[p];
    for (std::size_t i = 0; i < w.numel(); ++i) {
      m[i] = static_cast<T>(config.beta1 * m[i] + (1.0 - config.beta1) * g[i]);
      v[i] = static_cast<T>(config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i]);
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] = static_cast<T>(w[i] - lr * (m_hat / (std::sqrt(v_hat) + config.epsilon) +
                                         config.weight_decay * w[i]));
    }
  }
  return true;
}

}  // namespace ps4pro
