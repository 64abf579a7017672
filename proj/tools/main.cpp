// Command-line front end: interpolate single pairs, augment frame
// directories, evaluate checkpoints, train, and benchmark runtime.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ps4pro/augment.hpp"
#include "ps4pro/checkpoint.hpp"
#include "ps4pro/data.hpp"
#include "ps4pro/flownet.hpp"
#include "ps4pro/losses.hpp"
#include "ps4pro/metrics.hpp"
#include "ps4pro/trainer.hpp"

namespace {

ps4pro::ModelWeights<float> load_weights(const std::string& ckpt_path) {
  return ps4pro::load_checkpoint(ckpt_path).weights;
}

int cmd_interpolate(const std::vector<std::string>& inputs, double t, const std::string& out,
                    const std::string& ckpt, const std::string& dump_flow) {
  auto weights = load_weights(ckpt);
  ps4pro::Frame a = ps4pro::load_frame(inputs[0]);
  ps4pro::Frame b = ps4pro::load_frame(inputs[1]);
  auto result = ps4pro::interpolate_full(weights, a, b, t);
  ps4pro::save_frame(result.frame, out);
  if (!dump_flow.empty()) {
    ps4pro::save_flow(result.full_res.flow_t0, dump_flow + ".t0.ps4f");
    ps4pro::save_flow(result.full_res.flow_t1, dump_flow + ".t1.ps4f");
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_augment(const std::string& frames_dir, int factor, const std::string& mask,
                const std::string& ckpt, const std::string& out_dir,
                const std::string& poses_file) {
  auto weights = load_weights(ckpt);
  ps4pro::FramesDirSource frames(frames_dir);
  if (!poses_file.empty()) frames.set_poses(ps4pro::load_pose_file(poses_file));
  auto manifest = ps4pro::augment_dataset(frames, weights, factor,
                                          ps4pro::mask_mode_from_string(mask), out_dir, ckpt);
  std::size_t failed = 0;
  for (const auto& r : manifest.rows)
    if (!r.ok) ++failed;
  std::cout << "inserted " << manifest.rows.size() - failed << " frames (" << failed
            << " failed) in " << manifest.total_wall_s << " s\n"
            << "manifest: " << (std::filesystem::path(out_dir) / "manifest.json").string()
            << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_eval(const std::string& dataset, const std::string& layout, const std::string& list_file,
             const std::string& ckpt, const std::string& report_prefix) {
  auto weights = load_weights(ckpt);
  std::unique_ptr<ps4pro::SampleSource> source;
  if (layout == "triplet") {
    ps4pro::DatasetSpec spec{dataset, ps4pro::DatasetSpec::Layout::kTriplet,
                             list_file.empty() ? std::nullopt
                                               : std::make_optional(list_file)};
    source = std::make_unique<ps4pro::TripletDirSource>(spec);
  } else if (layout == "frames") {
    source = std::make_unique<ps4pro::FramesDirSource>(dataset);
  } else {
    std::cerr << "unknown layout: " << layout << "\n";
    return 2;
  }
  auto report = ps4pro::evaluate(weights, *source, dataset, ckpt);
  ps4pro::write_report(report, report_prefix + ".csv", report_prefix + ".json");
  std::cout << "n=" << report.rows.size() << " psnr=" << report.psnr_mean
            << " ssim=" << report.ssim_mean << " ie=" << report.ie_mean << "\n"
            << "wrote " << report_prefix << ".csv and .json\n";
  return 0;
}

ps4pro::AugmentOptions augment_from_config(const ps4pro::KeyValues& kv) {
  ps4pro::AugmentOptions aug;
  aug.crop = kv.get_int_or("aug.crop", 1) != 0;
  aug.crop_size = static_cast<int>(kv.get_int_or("aug.crop_size", 256));
  aug.flips = kv.get_int_or("aug.flips", 1) != 0;
  aug.time_reversal = kv.get_int_or("aug.time_reversal", 1) != 0;
  aug.rotation = kv.get_int_or("aug.rotation", 1) != 0;
  aug.channel_permutation = kv.get_int_or("aug.channel_permutation", 1) != 0;
  return aug;
}

int cmd_train(const std::string& config_path) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "missing config: " << config_path << "\n";
    return 2;
  }
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto kv = ps4pro::KeyValues::parse(text);
  auto net_cfg = ps4pro::NetConfig::from_key_values(kv);
  auto train_cfg = ps4pro::TrainConfig::from_key_values(kv);
  const std::string out_dir = kv.get_or("out.dir", "train_out");

  ps4pro::ModelWeights<float> weights;
  if (kv.has("model.init_checkpoint")) {
    weights = load_weights(kv.get("model.init_checkpoint"));
  } else {
    weights = ps4pro::init_weights(net_cfg, ps4pro::derive_seed(train_cfg.seed, 0));
  }

  std::unique_ptr<ps4pro::SampleSource> fixed;
  const std::string kind = kv.get_or("data.fixed.kind", "synthetic");
  if (kind == "synthetic") {
    fixed = std::make_unique<ps4pro::SyntheticTranslationSource>(
        static_cast<std::size_t>(kv.get_int_or("data.synthetic.count", 512)),
        static_cast<int>(kv.get_int_or("data.synthetic.size", 64)),
        kv.get_double_or("data.synthetic.max_shift", 8.0),
        static_cast<std::uint64_t>(kv.get_int_or("data.synthetic.seed", 100)));
  } else if (kind == "triplet") {
    ps4pro::DatasetSpec spec{kv.get("data.fixed.root"),
                             ps4pro::DatasetSpec::Layout::kTriplet,
                             kv.has("data.fixed.list")
                                 ? std::make_optional(kv.get("data.fixed.list"))
                                 : std::nullopt};
    fixed = std::make_unique<ps4pro::TripletDirSource>(spec);
  } else {
    std::cerr << "unknown data.fixed.kind: " << kind << "\n";
    return 2;
  }

  std::unique_ptr<ps4pro::SampleSource> arbitrary;
  if (kv.has("data.arbitrary.root")) {
    ps4pro::DatasetSpec spec{kv.get("data.arbitrary.root"),
                             ps4pro::DatasetSpec::Layout::kSeptuplet,
                             kv.has("data.arbitrary.list")
                                 ? std::make_optional(kv.get("data.arbitrary.list"))
                                 : std::nullopt};
    arbitrary = std::make_unique<ps4pro::SeptupletDirSource>(spec);
  }

  std::unique_ptr<ps4pro::TeacherOracle> teacher;
  if (kv.get_or("teacher.kind", "block_matching") == "block_matching")
    teacher = std::make_unique<ps4pro::BlockMatchingTeacher>();

  auto result = ps4pro::train(weights, *fixed, arbitrary.get(), train_cfg, out_dir,
                              teacher.get(), augment_from_config(kv));
  std::cout << "ran " << result.steps_run << " steps (" << result.skipped_steps
            << " skipped)\nfinal checkpoint: " << result.final_checkpoint << "\n";
  if (!result.history.empty()) {
    auto [head, tail] = ps4pro::smoothed_loss_endpoints(result.history, 50);
    std::cout << "smoothed loss: " << head << " -> " << tail << "\n";
  }
  return 0;
}

int cmd_benchmark(const std::string& ckpt, const std::string& sizes_csv,
                  const std::string& report_path, int repeats) {
  auto weights = load_weights(ckpt);
  nlohmann::ordered_json report;
  report["checkpoint"] = ckpt;
  report["parameters"] = ps4pro::count_parameters(weights);
  report["runs"] = nlohmann::json::array();

  std::stringstream ss(sizes_csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    const auto x = token.find('x');
    if (x == std::string::npos) {
      std::cerr << "bad size (expect WxH): " << token << "\n";
      return 2;
    }
    const int w = std::stoi(token.substr(0, x));
    const int h = std::stoi(token.substr(x + 1));
    ps4pro::Rng rng(1);
    ps4pro::Frame a(h, w), b(h, w);
    for (std::size_t i = 0; i < a.pixels.numel(); ++i) {
      a.pixels[i] = static_cast<float>(ps4pro::uniform(rng));
      b.pixels[i] = static_cast<float>(ps4pro::uniform(rng));
    }
    ps4pro::interpolate(weights, a, b, 0.5);  // warmup
    double total_ms = 0;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      ps4pro::interpolate(weights, a, b, 0.5);
      total_ms += std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    }
    const double ms = total_ms / repeats;
    std::cout << token << ": " << ms << " ms\n";
    report["runs"].push_back({{"width", w}, {"height", h}, {"ms", ms}});
  }
  std::ofstream out(report_path);
  out << report.dump(2) << "\n";
  std::cout << "wrote " << report_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PS4PRO video frame interpolation toolkit"};
  app.require_subcommand(1);

  // interpolate
  std::vector<std::string> in_frames;
  double t = 0.5;
  std::string out_path, ckpt_path, dump_flow;
  auto* interp = app.add_subcommand("interpolate", "Synthesize a frame between two images");
  interp->add_option("--in", in_frames, "two input frames")->expected(2)->required();
  interp->add_option("--t", t, "timestep in [0,1] (values outside extrapolate)");
  interp->add_option("--out", out_path, "output image path")->required();
  interp->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  interp->add_option("--dump-flow", dump_flow, "prefix for PS4F flow dumps");

  // augment
  std::string frames_dir, mask_mode = "none", aug_out, poses_file;
  int factor = 2;
  auto* aug = app.add_subcommand("augment", "Insert interpolated frames into a recording");
  aug->add_option("--frames", frames_dir, "directory of ordered frames")->required();
  aug->add_option("--factor", factor, "frame-rate multiplication factor (>= 2)")->required();
  aug->add_option("--mask", mask_mode, "aspect mask: none or 4:3");
  aug->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  aug->add_option("--out", aug_out, "output directory")->required();
  aug->add_option("--poses", poses_file, "JSON pose file aligned with the frame order");

  // eval
  std::string dataset_dir, layout = "triplet", list_file, report_prefix;
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  ev->add_option("--dataset", dataset_dir, "dataset root")->required();
  ev->add_option("--layout", layout, "triplet or frames");
  ev->add_option("--list", list_file, "clip list file (triplet layout)");
  ev->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  ev->add_option("--report", report_prefix, "report path prefix (.csv/.json)")->required();

  // train
  std::string config_path;
  auto* tr = app.add_subcommand("train", "Train from a key = value config file");
  tr->add_option("--config", config_path, "config file")->required();

  // benchmark
  std::string sizes = "1024x512,2048x1024,4096x2048", bench_report = "benchmark.json";
  int repeats = 3;
  auto* bench = app.add_subcommand("benchmark", "Time interpolation at given resolutions");
  bench->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  bench->add_option("--sizes", sizes, "comma-separated WxH list");
  bench->add_option("--report", bench_report, "output JSON");
  bench->add_option("--repeats", repeats, "timed repetitions per size");

  CLI11_PARSE(app, argc, argv);

  try {
    if (interp->parsed()) return cmd_interpolate(in_frames, t, out_path, ckpt_path, dump_flow);
    if (aug->parsed()) return cmd_augment(frames_dir, factor, mask_mode, ckpt_path, aug_out,
                                          poses_file);
    if (ev->parsed()) return cmd_eval(dataset_dir, layout, list_file, ckpt_path, report_prefix);
    if (tr->parsed()) return cmd_train(config_path);
    if (bench->parsed()) return cmd_benchmark(ckpt_path, sizes, bench_report, repeats);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
