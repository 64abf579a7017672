#pragma once

// Optimization loop: interleaved fixed/arbitrary batches, per-sample
// forward/backward on independent tapes (parallel across the batch),
// fixed-order gradient reduction so results are identical for any thread
// count, AdamW updates under the warmup+cosine schedule, JSONL step logs and
// per-epoch checkpoints.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ps4pro/checkpoint.hpp"
#include "ps4pro/data.hpp"
#include "ps4pro/flownet.hpp"
#include "ps4pro/losses.hpp"
#include "ps4pro/optim.hpp"

namespace ps4pro {

struct StepRecord {
  long long step = 0;
  int epoch = 0;
  double lr = 0;
  LossBreakdown loss;
};

struct TrainResult {
  std::vector<StepRecord> history;
  std::string final_checkpoint;
  long long steps_run = 0;
  long long skipped_steps = 0;
};

struct SampleGradients {
  std::vector<Tensor<float>> grads;
  LossBreakdown loss;
};

/// One tape forward/backward for a single triplet. Teacher flows, when
/// given, must match the sample resolution.
inline SampleGradients compute_sample_gradients(
    const ModelWeights<float>& weights, const TripletSample& sample,
    const std::optional<std::pair<Tensor<float>, Tensor<float>>>& teacher_flows, double lambda) {
  PS4_REQUIRE(sample.frame0.height() % 32 == 0 && sample.frame0.width() % 32 == 0,
              "training samples must have dims divisible by 32");
  Tape<float> tape(true);
  FlowNetRunner<float> net(tape, weights);
  auto out = net.forward(tape.constant(sample.frame0.pixels), tape.constant(sample.frame1.pixels),
                         sample.t);
  auto target = tape.constant(sample.frame_t.pixels);
  auto loss = build_total_loss(tape, out.merged, target, out.full.flow_t0, out.full.flow_t1,
                               teacher_flows, lambda, default_feature_extractor<float>());
  tape.backward(loss.total);

  SampleGradients sg;
  sg.loss.l1 = loss.l1.t()[0];
  sg.loss.perceptual = loss.perceptual.t()[0];
  sg.loss.teacher = loss.teacher.t()[0];
  sg.loss.total = loss.total.t()[0];
  sg.grads.reserve(net.param_values().size());
  for (const auto& p : net.param_values()) sg.grads.push_back(tape.grad(p));
  return sg;
}

namespace detail {

inline void append_jsonl(std::ofstream& log, const StepRecord& r) {
  log << "{\"step\":" << r.step << ",\"epoch\":" << r.epoch << ",\"lr\":" << r.lr
      << ",\"l1\":" << r.loss.l1 << ",\"perceptual\":" << r.loss.perceptual
      << ",\"teacher\":" << r.loss.teacher << ",\"total\":" << r.loss.total << "}\n";
}

}  // namespace detail

/// Runs the full training schedule. `out_dir` receives checkpoints and the
/// JSONL metrics log; pass nullptr teacher to disable distillation entirely.
inline TrainResult train(ModelWeights<float>& weights, const SampleSource& fixed,
                         const SampleSource* arbitrary, const TrainConfig& config,
                         const std::string& out_dir, const TeacherOracle* teacher = nullptr,
                         const AugmentOptions& augment = {}) {
  config.validate();
  PS4_REQUIRE(weights.all_finite(), "initial weights contain non-finite values");
  std::filesystem::create_directories(out_dir);

  const std::size_t larger = std::max(fixed.size(), arbitrary ? arbitrary->size() : 0);
  const long long batches_per_pass =
      static_cast<long long>((larger + config.batch_size - 1) / config.batch_size);
  const long long steps_per_epoch = batches_per_pass * (arbitrary ? 2 : 1);
  const long long max_steps = steps_per_epoch * config.total_epochs;
  const int teacher_cutoff = config.effective_teacher_cutoff();

  auto params = weights.values;
  AdamWState<float> opt = AdamWState<float>::shaped_like(params);
  BatchStream stream(fixed, arbitrary, config.batch_size, derive_seed(config.seed, 1), augment);
  std::ofstream log(std::filesystem::path(out_dir) / "train_log.jsonl");

  TrainResult result;
  auto write_ckpt = [&](const std::string& name, int epoch) {
    Checkpoint ckpt{weights, opt, static_cast<std::uint64_t>(epoch), config.seed};
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    save_checkpoint(ckpt, path);
    return path;
  };

  if (config.total_epochs == 0 || max_steps == 0) {
    result.final_checkpoint = write_ckpt("ckpt_final.ps4c", 0);
    return result;
  }

  std::vector<Tensor<float>> grad_sum;
  for (const auto& p : params) grad_sum.emplace_back(p->shape());

  for (long long step = 0; step < max_steps; ++step) {
    const int epoch = static_cast<int>(step / steps_per_epoch);
    Batch batch = stream.next();
    const bool distill = teacher_active(teacher != nullptr, epoch, teacher_cutoff);

    // Teacher queries and per-sample tapes run in parallel; the reduction
    // below is sequential in sample order.
    const int n = static_cast<int>(batch.samples.size());
    std::vector<SampleGradients> per_sample(static_cast<std::size_t>(n));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
    for (int i = 0; i < n; ++i) {
      const TripletSample& s = batch.samples[static_cast<std::size_t>(i)];
      std::optional<std::pair<Tensor<float>, Tensor<float>>> tf;
      if (distill) {
        auto flows = teacher->flows(s.frame0.pixels, s.frame1.pixels, s.frame_t.pixels, s.t);
        tf = std::make_pair(std::move(flows.first.vectors), std::move(flows.second.vectors));
      }
      per_sample[static_cast<std::size_t>(i)] =
          compute_sample_gradients(weights, s, tf, config.loss_lambda);
    }

    LossBreakdown mean_loss;
    for (auto& g : grad_sum) g.fill(0.0f);
    for (int i = 0; i < n; ++i) {
      const auto& sg = per_sample[static_cast<std::size_t>(i)];
      mean_loss.l1 += sg.loss.l1 / n;
      mean_loss.perceptual += sg.loss.perceptual / n;
      mean_loss.teacher += sg.loss.teacher / n;
      for (std::size_t p = 0; p < grad_sum.size(); ++p)
        for (std::size_t j = 0; j < grad_sum[p].numel(); ++j)
          grad_sum[p][j] += sg.grads[p][j] / static_cast<float>(n);
    }
    mean_loss = make_breakdown(mean_loss.l1, mean_loss.perceptual, mean_loss.teacher,
                               config.loss_lambda);

    if (!std::isfinite(mean_loss.total)) {
      write_ckpt("ckpt_diagnostic.ps4c", epoch);
      throw std::runtime_error("training loss became non-finite at step " +
                               std::to_string(step) + "; diagnostic checkpoint written");
    }

    clip_global_norm(grad_sum, config.grad_clip_norm);
    const double lr = lr_at_step(step, config, max_steps);
    optimizer_step(params, grad_sum, opt, lr, config);

    StepRecord rec{step, epoch, lr, mean_loss};
    detail::append_jsonl(log, rec);
    result.history.push_back(rec);
    ++result.steps_run;

    const bool epoch_end = (step + 1) % steps_per_epoch == 0;
    if (epoch_end && config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_epoch_%04d.ps4c", epoch + 1);
      write_ckpt(name, epoch + 1);
    }
  }

  result.skipped_steps = opt.skipped_steps;
  result.final_checkpoint = write_ckpt("ckpt_final.ps4c", config.total_epochs);
  return result;
}

/// Mean of the total loss over the first and last `window` steps; used by
/// the desk-scale learning gate.
inline std::pair<double, double> smoothed_loss_endpoints(const std::vector<StepRecord>& history,
                                                         std::size_t window) {
  PS4_REQUIRE(!history.empty(), "empty training history");
  window = std::min(window, history.size());
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < window; ++i) head += history[i].loss.total;
  for (std::size_t i = history.size() - window; i < history.size(); ++i)
    tail += history[i].loss.total;
  return {head / window, tail / window};
}

}  // namespace ps4pro
