#include <catch2/catch_amalgamated.hpp>

#include "ps4pro/trainer.hpp"
#include "testutil.hpp"

using ps4pro::AdamWState;
using ps4pro::Tensor;
using ps4pro::TrainConfig;
using testutil::TempDir;

TEST_CASE("lr schedule: warmup arithmetic and endpoints") {
  TrainConfig cfg;
  cfg.warmup_steps = 2000;
  const long long max_steps = 10000;

  // Step 999 of 2000-step warmup: 3e-4 * 1000/2000.
  CHECK(ps4pro::lr_at_step(999, cfg, max_steps) == Catch::Approx(1.5e-4).epsilon(1e-12));
  // Warmup end hits the peak exactly, from both sides.
  CHECK(ps4pro::lr_at_step(1999, cfg, max_steps) == 3e-4);
  CHECK(ps4pro::lr_at_step(2000, cfg, max_steps) == 3e-4);
  CHECK(std::abs(ps4pro::lr_at_step(1999, cfg, max_steps) -
                 ps4pro::lr_at_step(2000, cfg, max_steps)) < 1e-12);
  // Final step hits the floor exactly.
  CHECK(ps4pro::lr_at_step(max_steps, cfg, max_steps) == Catch::Approx(3e-6).epsilon(1e-12));

  CHECK_THROWS_AS(ps4pro::lr_at_step(-1, cfg, max_steps), ps4pro::ContractViolation);
  CHECK_THROWS_AS(ps4pro::lr_at_step(max_steps + 1, cfg, max_steps),
                  ps4pro::ContractViolation);
}

TEST_CASE("lr schedule is non-increasing on the cosine segment") {
  TrainConfig cfg;
  cfg.warmup_steps = 100;
  const long long max_steps = 5000;
  double prev = ps4pro::lr_at_step(100, cfg, max_steps);
  for (long long s = 101; s <= max_steps; ++s) {
    const double lr = ps4pro::lr_at_step(s, cfg, max_steps);
    CHECK(lr <= prev + 1e-18);
    prev = lr;
  }
}

TEST_CASE("adamw: zero gradient and zero decay is the identity") {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  std::vector<std::shared_ptr<Tensor<float>>> params = {
      std::make_shared<Tensor<float>>(std::vector<int>{3}, 1.5f)};
  auto state = AdamWState<float>::shaped_like(params);
  std::vector<Tensor<float>> grads = {Tensor<float>({3})};
  CHECK(ps4pro::optimizer_step(params, grads, state, 0.1, cfg));
  for (int i = 0; i < 3; ++i) CHECK((*params[0])[i] == 1.5f);
}

TEST_CASE("adamw: first-step scalar arithmetic") {
  // w=1, g=1, lr=0.1, wd=0: bias-corrected m_hat=v_hat=1 -> w ~ 0.9.
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  std::vector<std::shared_ptr<Tensor<float>>> params = {
      std::make_shared<Tensor<float>>(std::vector<int>{1}, 1.0f)};
  auto state = AdamWState<float>::shaped_like(params);
  std::vector<Tensor<float>> grads = {Tensor<float>({1}, 1.0f)};
  ps4pro::optimizer_step(params, grads, state, 0.1, cfg);
  CHECK((*params[0])[0] == Catch::Approx(0.9).margin(1e-6));
}

TEST_CASE("adamw: decoupled decay shrinks by (1 - lr*wd) under zero grads") {
  TrainConfig cfg;
  cfg.weight_decay = 1e-4;
  std::vector<std::shared_ptr<Tensor<float>>> params = {
      std::make_shared<Tensor<float>>(std::vector<int>{2}, 2.0f)};
  auto state = AdamWState<float>::shaped_like(params);
  std::vector<Tensor<float>> grads = {Tensor<float>({2})};
  ps4pro::optimizer_step(params, grads, state, 0.5, cfg);
  CHECK((*params[0])[0] == Catch::Approx(2.0 * (1.0 - 0.5 * 1e-4)).epsilon(1e-6));
}

TEST_CASE("adamw: non-finite gradients skip the step and count it") {
  TrainConfig cfg;
  std::vector<std::shared_ptr<Tensor<float>>> params = {
      std::make_shared<Tensor<float>>(std::vector<int>{1}, 1.0f)};
  auto state = AdamWState<float>::shaped_like(params);
  std::vector<Tensor<float>> grads = {Tensor<float>({1})};
  grads[0][0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(ps4pro::optimizer_step(params, grads, state, 0.1, cfg));
  CHECK((*params[0])[0] == 1.0f);
  CHECK(state.skipped_steps == 1);
  CHECK(state.step_count == 0);
}

TEST_CASE("global norm clipping") {
  std::vector<Tensor<float>> grads = {Tensor<float>({2})};
  grads[0][0] = 3.0f;
  grads[0][1] = 4.0f;  // norm 5
  const double norm = ps4pro::clip_global_norm(grads, 1.0);
  CHECK(norm == Catch::Approx(5.0));
  CHECK(grads[0][0] == Catch::Approx(0.6f));
  CHECK(grads[0][1] == Catch::Approx(0.8f));
}

TEST_CASE("teacher cutoff scales with the schedule") {
  TrainConfig cfg;
  cfg.total_epochs = 300;
  CHECK(cfg.effective_teacher_cutoff() == 200);
  cfg.total_epochs = 30;
  CHECK(cfg.effective_teacher_cutoff() == 20);
  cfg.total_epochs = 10;
  CHECK(cfg.effective_teacher_cutoff() == 7);
  cfg.teacher_cutoff_epochs = 3;
  CHECK(cfg.effective_teacher_cutoff() == 3);
}

TEST_CASE("zero epochs returns the initial checkpoint unchanged") {
  TempDir tmp("train0");
  auto w = ps4pro::init_weights(ps4pro::NetConfig::tiny(), 20, true);
  auto before = w;  // shared_ptr copies: snapshot the raw data instead
  std::vector<Tensor<float>> snapshot;
  for (const auto& v : w.values) snapshot.push_back(*v);

  ps4pro::SyntheticTranslationSource synth(4, 32, 4.0, 1);
  TrainConfig cfg;
  cfg.total_epochs = 0;
  cfg.batch_size = 2;
  auto result = ps4pro::train(w, synth, nullptr, cfg, tmp.str());
  CHECK(result.steps_run == 0);
  CHECK(std::filesystem::exists(result.final_checkpoint));

  auto back = ps4pro::load_checkpoint(result.final_checkpoint);
  for (std::size_t p = 0; p < snapshot.size(); ++p)
    CHECK(ps4pro::max_abs_diff(*back.weights.values[p], snapshot[p]) == 0.0);
}

TEST_CASE("identical seeds give identical loss curves") {
  auto run = [&]() {
    TempDir tmp("train_det");
    auto w = ps4pro::init_weights(ps4pro::NetConfig::tiny(), 21);
    ps4pro::SyntheticTranslationSource synth(6, 32, 4.0, 2);
    TrainConfig cfg;
    cfg.total_epochs = 2;
    cfg.batch_size = 2;
    cfg.warmup_steps = 2;
    cfg.seed = 77;
    ps4pro::AugmentOptions aug;
    aug.crop = false;
    auto r = ps4pro::train(w, synth, nullptr, cfg, tmp.str(), nullptr, aug);
    std::vector<double> losses;
    for (const auto& rec : r.history) losses.push_back(rec.loss.total);
    return losses;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("training writes the metrics log with the breakdown invariant") {
  TempDir tmp("train_log");
  auto w = ps4pro::init_weights(ps4pro::NetConfig::tiny(), 22);
  ps4pro::SyntheticTranslationSource synth(4, 32, 4.0, 3);
  TrainConfig cfg;
  cfg.total_epochs = 1;
  cfg.batch_size = 2;
  cfg.warmup_steps = 1;
  ps4pro::AugmentOptions aug;
  aug.crop = false;
  auto r = ps4pro::train(w, synth, nullptr, cfg, tmp.str(), nullptr, aug);
  CHECK(r.steps_run == 2);

  std::ifstream log(tmp.file("train_log.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    ++lines;
    CHECK(j["total"].get<double>() ==
          Catch::Approx(j["l1"].get<double>() + 0.005 * j["perceptual"].get<double>() +
                        j["teacher"].get<double>())
              .margin(1e-9));
  }
  CHECK(lines == 2);
  // Per-epoch checkpoint plus final.
  CHECK(std::filesystem::exists(tmp.file("ckpt_epoch_0001.ps4c")));
  CHECK(std::filesystem::exists(tmp.file("ckpt_final.ps4c")));
}

TEST_CASE("interleaved training advances both sources") {
  TempDir tmp("train_mix");
  auto w = ps4pro::init_weights(ps4pro::NetConfig::tiny(), 23);

  struct SeptupletMem : ps4pro::SampleSource {
    std::size_t size() const override { return 3; }
    ps4pro::TripletSample sample(std::size_t i, ps4pro::Rng& rng) const override {
      std::vector<ps4pro::Frame> frames;
      ps4pro::Rng frng(ps4pro::derive_seed(100, i));
      for (int k = 0; k < 7; ++k) frames.push_back(testutil::random_frame(32, 32, frng));
      return ps4pro::sample_triplet_arbitrary(frames, rng);
    }
  } septuplets;

  ps4pro::SyntheticTranslationSource synth(3, 32, 4.0, 4);
  TrainConfig cfg;
  cfg.total_epochs = 1;
  cfg.batch_size = 2;
  cfg.warmup_steps = 1;
  ps4pro::AugmentOptions aug;
  aug.crop = false;
  auto r = ps4pro::train(w, synth, &septuplets, cfg, tmp.str(), nullptr, aug);
  // One pass over the larger source (3 samples, batch 2 -> 2 batches) x2 for
  // alternation.
  CHECK(r.steps_run == 4);
}

TEST_CASE("smoothed loss endpoints") {
  std::vector<ps4pro::StepRecord> hist;
  for (int i = 0; i < 10; ++i) {
    ps4pro::StepRecord rec;
    rec.loss.total = 10.0 - i;
    hist.push_back(rec);
  }
  auto [head, tail] = ps4pro::smoothed_loss_endpoints(hist, 3);
  CHECK(head == Catch::Approx((10 + 9 + 8) / 3.0));
  CHECK(tail == Catch::Approx((3 + 2 + 1) / 3.0));
}
