#pragma once

// Dataset augmentation for neural-rendering recordings: k-fold frame
// insertion between adjacent frames, optional 4:3 masking, pose
// interpolation, manifest emission, and the timing-proportion report.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ps4pro/data.hpp"
#include "ps4pro/flownet.hpp"
#include "ps4pro/image.hpp"

namespace ps4pro {

struct Insertion {
  int pair_index = 0;  // gap between source frames pair_index and pair_index+1
  double t = 0.5;
};

/// For a k-fold frame-rate increase, each of the frame_count-1 adjacent gaps
/// receives k-1 frames at t = i/k. Total output count is
/// frame_count + (frame_count-1)*(factor-1).
inline std::vector<Insertion> plan_insertions(int frame_count, int factor) {
  PS4_REQUIRE(frame_count >= 2, "need at least 2 frames to insert between");
  PS4_REQUIRE(factor >= 2, "interpolation factor must be >= 2");
  std::vector<Insertion> plan;
  plan.reserve(static_cast<std::size_t>((frame_count - 1) * (factor - 1)));
  for (int pair = 0; pair + 1 < frame_count; ++pair)
    for (int i = 1; i < factor; ++i)
      plan.push_back({pair, static_cast<double>(i) / factor});
  return plan;
}

enum class MaskMode { kNone, kFourByThree };

inline MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "none") return MaskMode::kNone;
  if (s == "4:3" || s == "four-by-three") return MaskMode::kFourByThree;
  throw ContractViolation("unknown mask mode: " + s);
}

inline std::string mask_mode_to_string(MaskMode m) {
  return m == MaskMode::kNone ? "none" : "4:3";
}

/// Keeps the centered maximal 4:3 region and zeroes everything outside it.
/// Idempotent; resolution is preserved.
inline Frame apply_aspect_mask(Frame frame, MaskMode mode) {
  if (mode == MaskMode::kNone) return frame;
  const int h = frame.height(), w = frame.width();
  int keep_w = w, keep_h = h;
  if (3 * w > 4 * h)
    keep_w = static_cast<int>(std::lround(h * 4.0 / 3.0));  // wider than 4:3
  else if (3 * w < 4 * h)
    keep_h = static_cast<int>(std::lround(w * 3.0 / 4.0));  // taller than 4:3
  const int x0 = (w - keep_w) / 2, x1 = x0 + keep_w;
  const int y0 = (h - keep_h) / 2, y1 = y0 + keep_h;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (y < y0 || y >= y1 || x < x0 || x >= x1) frame.at(c, y, x) = 0.0f;
  return frame;
}

/// Linear translation + shorter-arc slerp of the rotation, renormalized.
inline CameraPose interpolate_pose(const CameraPose& pose_a, const CameraPose& pose_b, double t) {
  PS4_REQUIRE(t >= 0.0 && t <= 1.0, "pose interpolation expects t in [0,1]");
  PS4_REQUIRE(pose_a.quat_norm() > 1e-12 && pose_b.quat_norm() > 1e-12,
              "zero-norm quaternion");
  pose_a.validate();
  pose_b.validate();
  CameraPose out;
  for (int i = 0; i < 3; ++i)
    out.translation[static_cast<std::size_t>(i)] =
        (1.0 - t) * pose_a.translation[static_cast<std::size_t>(i)] +
        t * pose_b.translation[static_cast<std::size_t>(i)];

  std::array<double, 4> qa = pose_a.rotation_wxyz;
  std::array<double, 4> qb = pose_b.rotation_wxyz;
  double dot = qa[0] * qb[0] + qa[1] * qb[1] + qa[2] * qb[2] + qa[3] * qb[3];
  if (dot < 0) {  // shorter arc
    dot = -dot;
    for (double& v : qb) v = -v;
  }
  double wa, wb;
  if (dot > 1.0 - 1e-10) {  // nearly parallel: lerp
    wa = 1.0 - t;
    wb = t;
  } else {
    const double theta = std::acos(std::min(1.0, dot));
    const double s = std::sin(theta);
    wa = std::sin((1.0 - t) * theta) / s;
    wb = std::sin(t * theta) / s;
  }
  double norm = 0;
  for (int i = 0; i < 4; ++i) {
    out.rotation_wxyz[static_cast<std::size_t>(i)] =
        wa * qa[static_cast<std::size_t>(i)] + wb * qb[static_cast<std::size_t>(i)];
    norm += out.rotation_wxyz[static_cast<std::size_t>(i)] *
            out.rotation_wxyz[static_cast<std::size_t>(i)];
  }
  norm = std::sqrt(norm);
  for (double& v : out.rotation_wxyz) v /= norm;
  return out;
}

struct ManifestRow {
  std::string source_frame_a, source_frame_b;
  double t = 0.5;
  std::string output;
  std::optional<CameraPose> pose;
  double wall_ms = 0;
  bool ok = true;
};

struct AugmentationManifest {
  int factor = 2;
  MaskMode mask_mode = MaskMode::kNone;
  std::string model_checkpoint;
  double total_wall_s = 0;
  std::vector<ManifestRow> rows;

  /// Ordered output list: originals at integer positions, insertions
  /// interleaved by (pair index, t).
  std::vector<std::string> merged_frames;
};

struct TimingReport {
  double augmentation_s = 0;
  double reconstruction_s = 0;
  double proportion_permille = 0;
};

/// proportion = 1000 * augmentation / (augmentation + reconstruction).
inline TimingReport timing_report(double augmentation_s, double reconstruction_s) {
  PS4_REQUIRE(reconstruction_s > 0, "reconstruction time must be positive");
  PS4_REQUIRE(augmentation_s >= 0, "augmentation time must be non-negative");
  TimingReport r;
  r.augmentation_s = augmentation_s;
  r.reconstruction_s = reconstruction_s;
  r.proportion_permille = 1000.0 * augmentation_s / (augmentation_s + reconstruction_s);
  return r;
}

inline TimingReport timing_report(const AugmentationManifest& manifest, double reconstruction_s) {
  return timing_report(manifest.total_wall_s, reconstruction_s);
}

namespace detail {

inline nlohmann::ordered_json row_to_json(const ManifestRow& r) {
  nlohmann::ordered_json j{{"source_frame_a", r.source_frame_a},
                           {"source_frame_b", r.source_frame_b},
                           {"t", r.t},
                           {"output", r.output},
                           {"ok", r.ok},
                           {"wall_ms", r.wall_ms}};
  if (r.pose) j["pose"] = pose_to_json(*r.pose);
  return j;
}

}  // namespace detail

inline void write_manifest(const AugmentationManifest& m, const std::string& out_dir) {
  std::ofstream rows(std::filesystem::path(out_dir) / "manifest.jsonl");
  if (!rows) throw IoError("cannot write manifest rows in " + out_dir);
  for (const auto& r : m.rows) rows << detail::row_to_json(r).dump() << "\n";

  nlohmann::ordered_json header{{"factor", m.factor},
                                {"mask_mode", mask_mode_to_string(m.mask_mode)},
                                {"model_checkpoint", m.model_checkpoint},
                                {"total_wall_s", m.total_wall_s},
                                {"inserted", m.rows.size()},
                                {"merged_frames", m.merged_frames}};
  std::ofstream head(std::filesystem::path(out_dir) / "manifest.json");
  if (!head) throw IoError("cannot write manifest header in " + out_dir);
  head << header.dump(2) << "\n";
}

/// Runs the insertion plan over a frames directory: per insertion,
/// interpolate, mask, save, and slerp the pose when both sources carry one.
/// A failed pair is recorded and skipped, not fatal.
inline AugmentationManifest augment_dataset(const FramesDirSource& frames,
                                            const ModelWeights<float>& weights, int factor,
                                            MaskMode mask_mode, const std::string& out_dir,
                                            const std::string& checkpoint_id = "") {
  namespace fs = std::filesystem;
  const auto& files = frames.files();
  fs::create_directories(out_dir);

  AugmentationManifest manifest;
  manifest.factor = factor;
  manifest.mask_mode = mask_mode;
  manifest.model_checkpoint = checkpoint_id;

  const auto plan = plan_insertions(static_cast<int>(files.size()), factor);
  const auto t_start = std::chrono::steady_clock::now();

  int current_pair = -1;
  Frame frame_a, frame_b;
  manifest.merged_frames.push_back(files[0]);
  for (const auto& ins : plan) {
    if (ins.pair_index != current_pair) {
      if (current_pair >= 0)
        manifest.merged_frames.push_back(files[static_cast<std::size_t>(current_pair) + 1]);
      current_pair = ins.pair_index;
      frame_a = frames.load(static_cast<std::size_t>(current_pair));
      frame_b = frames.load(static_cast<std::size_t>(current_pair) + 1);
    }
    char name[64];
    std::snprintf(name, sizeof(name), "pair%04d_t%03d_of_%d.png", ins.pair_index,
                  static_cast<int>(std::lround(ins.t * factor)), factor);
    ManifestRow row;
    row.source_frame_a = files[static_cast<std::size_t>(ins.pair_index)];
    row.source_frame_b = files[static_cast<std::size_t>(ins.pair_index) + 1];
    row.t = ins.t;
    row.output = (fs::path(out_dir) / name).string();
    const auto t0 = std::chrono::steady_clock::now();
    try {
      Frame result = interpolate(weights, frame_a, frame_b, ins.t);
      result = apply_aspect_mask(std::move(result), mask_mode);
      save_frame(result, row.output);
      if (frame_a.pose && frame_b.pose)
        row.pose = interpolate_pose(*frame_a.pose, *frame_b.pose, ins.t);
    } catch (const std::exception& e) {
      std::cerr << "[augment] pair " << ins.pair_index << " t=" << ins.t << " failed: "
                << e.what() << "\n";
      row.ok = false;
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    if (row.ok) manifest.merged_frames.push_back(row.output);
    manifest.rows.push_back(std::move(row));
  }
  if (current_pair >= 0)
    manifest.merged_frames.push_back(files[static_cast<std::size_t>(current_pair) + 1]);
  manifest.total_wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  write_manifest(manifest, out_dir);
  return manifest;
}

}  // namespace ps4pro
