#pragma once

// Dataset readers, the fixed/arbitrary timestep sampling policy, and the
// training-time augmentation transforms.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ps4pro/image.hpp"

namespace ps4pro {

struct TripletSample {
  Frame frame0, frame_t, frame1;
  double t = 0.5;
};

struct DatasetSpec {
  enum class Layout { kTriplet, kSeptuplet, kFramesDir };

  std::string root;
  Layout layout = Layout::kTriplet;
  std::optional<std::string> list_file;

  static Layout layout_from_string(const std::string& s) {
    if (s == "triplet") return Layout::kTriplet;
    if (s == "septuplet") return Layout::kSeptuplet;
    if (s == "frames" || s == "frames-dir") return Layout::kFramesDir;
    throw ContractViolation("unknown dataset layout: " + s);
  }
};

// ---- sampling ----

/// (first, middle, last) of a 3-frame clip with t = 0.5.
inline TripletSample sample_triplet_fixed(const std::vector<Frame>& sequence) {
  PS4_REQUIRE(sequence.size() == 3, "fixed triplet needs exactly 3 frames");
  return {sequence[0], sequence[1], sequence[2], 0.5};
}

/// Interpolation draw from sorted indices i<j<k: inputs (i,k), target j,
/// t = (j-i)/(k-i).
inline TripletSample build_interpolation_sample(const std::vector<Frame>& frames, int i, int j,
                                                int k) {
  PS4_REQUIRE(0 <= i && i < j && j < k && k < static_cast<int>(frames.size()),
              "indices must satisfy 0 <= i < j < k < n");
  return {frames[static_cast<std::size_t>(i)], frames[static_cast<std::size_t>(j)],
          frames[static_cast<std::size_t>(k)],
          static_cast<double>(j - i) / static_cast<double>(k - i)};
}

/// Extrapolation draw. Non-mirrored: inputs are the two earliest frames,
/// target the latest, t = (k-i)/(j-i) > 1. Mirrored: inputs the two latest,
/// target the earliest, t = (i-j)/(k-j) < 0. Both keep
/// t = (target - first)/(second - first).
inline TripletSample build_extrapolation_sample(const std::vector<Frame>& frames, int i, int j,
                                                int k, bool mirrored) {
  PS4_REQUIRE(0 <= i && i < j && j < k && k < static_cast<int>(frames.size()),
              "indices must satisfy 0 <= i < j < k < n");
  if (mirrored)
    return {frames[static_cast<std::size_t>(j)], frames[static_cast<std::size_t>(i)],
            frames[static_cast<std::size_t>(k)],
            static_cast<double>(i - j) / static_cast<double>(k - j)};
  return {frames[static_cast<std::size_t>(i)], frames[static_cast<std::size_t>(k)],
          frames[static_cast<std::size_t>(j)],
          static_cast<double>(k - i) / static_cast<double>(j - i)};
}

/// Draws three distinct sorted indices from a 7-frame clip; 80% of draws are
/// interpolation, 20% extrapolation (split evenly between the forward and
/// mirrored variants).
inline TripletSample sample_triplet_arbitrary(const std::vector<Frame>& frames, Rng& rng) {
  PS4_REQUIRE(frames.size() == 7, "arbitrary sampling needs exactly 7 frames");
  int idx[3];
  idx[0] = uniform_int(rng, 0, 6);
  do {
    idx[1] = uniform_int(rng, 0, 6);
  } while (idx[1] == idx[0]);
  do {
    idx[2] = uniform_int(rng, 0, 6);
  } while (idx[2] == idx[0] || idx[2] == idx[1]);
  std::sort(idx, idx + 3);
  const bool interpolation = uniform(rng) < 0.8;
  if (interpolation) return build_interpolation_sample(frames, idx[0], idx[1], idx[2]);
  const bool mirrored = uniform(rng) < 0.5;
  return build_extrapolation_sample(frames, idx[0], idx[1], idx[2], mirrored);
}

// ---- augmentation ----

struct AugmentOptions {
  bool crop = true;
  int crop_size = 256;
  bool flips = true;
  bool time_reversal = true;
  bool rotation = true;
  bool channel_permutation = true;

  static AugmentOptions none() { return {false, 256, false, false, false, false}; }
};

namespace detail {

inline Tensor<float> crop_px(const Tensor<float>& px, int oy, int ox, int size) {
  Tensor<float> out({3, size, size});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(c, y, x) = px.at(c, oy + y, ox + x);
  return out;
}

inline Tensor<float> flip_px(const Tensor<float>& px, bool horizontal, bool vertical) {
  const int h = px.height(), w = px.width();
  Tensor<float> out(px.shape());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = px.at(c, vertical ? h - 1 - y : y, horizontal ? w - 1 - x : x);
  return out;
}

// 90 deg counter-clockwise: out(y,x) = in(x, H_out-1-y) with swapped dims.
inline Tensor<float> rot90_px(const Tensor<float>& px) {
  const int h = px.height(), w = px.width();
  Tensor<float> out({3, w, h});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < w; ++y)
      for (int x = 0; x < h; ++x) out.at(c, y, x) = px.at(c, x, w - 1 - y);
  return out;
}

inline Tensor<float> permute_channels_px(const Tensor<float>& px, const int perm[3]) {
  Tensor<float> out(px.shape());
  const std::size_t plane = static_cast<std::size_t>(px.height()) * px.width();
  for (int c = 0; c < 3; ++c)
    std::copy(px.data() + perm[c] * plane, px.data() + (perm[c] + 1) * plane,
              out.data() + c * plane);
  return out;
}

inline const int kChannelPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                        {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};

}  // namespace detail

/// Applies, independently: shared random crop, H/V flips (p=0.5 each), time
/// reversal (p=0.5), rotation by k*90 degrees, and a shared random channel
/// permutation. All pixel transforms use the same draw for the three frames.
inline TripletSample augment_sample(TripletSample sample, Rng& rng,
                                    const AugmentOptions& opts = {}) {
  Tensor<float>* planes[3] = {&sample.frame0.pixels, &sample.frame_t.pixels,
                              &sample.frame1.pixels};
  if (opts.crop) {
    const int h = sample.frame0.height(), w = sample.frame0.width();
    if (h < opts.crop_size || w < opts.crop_size) {
      static bool warned = false;
      if (!warned) {
        std::cerr << "[data] frames smaller than crop size " << opts.crop_size
                  << "; crop skipped\n";
        warned = true;
      }
    } else {
      const int oy = uniform_int(rng, 0, h - opts.crop_size);
      const int ox = uniform_int(rng, 0, w - opts.crop_size);
      for (auto* p : planes) *p = detail::crop_px(*p, oy, ox, opts.crop_size);
    }
  }
  if (opts.flips) {
    const bool hf = uniform(rng) < 0.5;
    const bool vf = uniform(rng) < 0.5;
    if (hf || vf)
      for (auto* p : planes) *p = detail::flip_px(*p, hf, vf);
  }
  if (opts.time_reversal && uniform(rng) < 0.5) {
    std::swap(sample.frame0, sample.frame1);
    sample.t = 1.0 - sample.t;
  }
  if (opts.rotation) {
    const int turns = uniform_int(rng, 0, 3);
    for (int k = 0; k < turns; ++k)
      for (auto* p : planes) *p = detail::rot90_px(*p);
  }
  if (opts.channel_permutation) {
    const int* perm = detail::kChannelPerms[uniform_int(rng, 0, 5)];
    for (auto* p : planes) *p = detail::permute_channels_px(*p, perm);
  }
  return sample;
}

// ---- sources ----

/// Uniform interface the trainer and evaluator pull samples through.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual TripletSample sample(std::size_t index, Rng& rng) const = 0;
  virtual std::string id(std::size_t index) const { return std::to_string(index); }
};

namespace detail {

inline std::vector<std::string> list_clips(const DatasetSpec& spec) {
  std::vector<std::string> clips;
  if (spec.list_file) {
    std::ifstream in(*spec.list_file);
    if (!in) throw IoError("missing list file: " + *spec.list_file);
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) clips.push_back((std::filesystem::path(spec.root) / line).string());
    }
  } else {
    const auto seq_root = std::filesystem::path(spec.root) / "sequences";
    const auto base = std::filesystem::exists(seq_root) ? seq_root : std::filesystem::path(spec.root);
    for (const auto& outer : std::filesystem::directory_iterator(base)) {
      if (!outer.is_directory()) continue;
      bool has_subdirs = false;
      for (const auto& inner : std::filesystem::directory_iterator(outer.path())) {
        if (inner.is_directory()) {
          clips.push_back(inner.path().string());
          has_subdirs = true;
        }
      }
      if (!has_subdirs) clips.push_back(outer.path().string());
    }
    std::sort(clips.begin(), clips.end());
  }
  PS4_REQUIRE(!clips.empty(), "dataset has no clips: " + spec.root);
  return clips;
}

inline std::vector<Frame> load_clip(const std::string& dir, int expected) {
  std::vector<Frame> frames;
  for (int i = 1; i <= expected; ++i) {
    const auto png = std::filesystem::path(dir) / ("im" + std::to_string(i) + ".png");
    const auto jpg = std::filesystem::path(dir) / ("im" + std::to_string(i) + ".jpg");
    frames.push_back(load_frame(std::filesystem::exists(png) ? png.string() : jpg.string()));
  }
  return frames;
}

inline std::vector<std::string> list_image_files(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace detail

/// Vimeo-style triplet clips: sequences/<clip>/im1..im3.png, fixed t = 0.5.
class TripletDirSource : public SampleSource {
 public:
  explicit TripletDirSource(const DatasetSpec& spec) : clips_(detail::list_clips(spec)) {}

  std::size_t size() const override { return clips_.size(); }

  TripletSample sample(std::size_t index, Rng& /*rng*/) const override {
    return sample_triplet_fixed(detail::load_clip(clips_[index], 3));
  }

  std::string id(std::size_t index) const override { return clips_[index]; }

 private:
  std::vector<std::string> clips_;
};

/// Vimeo-style septuplet clips with arbitrary-timestep sampling.
class SeptupletDirSource : public SampleSource {
 public:
  explicit SeptupletDirSource(const DatasetSpec& spec) : clips_(detail::list_clips(spec)) {}

  std::size_t size() const override { return clips_.size(); }

  TripletSample sample(std::size_t index, Rng& rng) const override {
    return sample_triplet_arbitrary(detail::load_clip(clips_[index], 7), rng);
  }

  std::string id(std::size_t index) const override { return clips_[index]; }

 private:
  std::vector<std::string> clips_;
};

/// A directory of ordered frames; sample i is the consecutive triple
/// (i, i+1, i+2) with t = 0.5. Also the reader the augmentation CLI uses.
class FramesDirSource : public SampleSource {
 public:
  explicit FramesDirSource(const std::string& dir) : files_(detail::list_image_files(dir)) {
    PS4_REQUIRE(files_.size() >= 2, "frames-dir needs at least 2 frames: " + dir);
    const auto manifest = std::filesystem::path(dir) / "manifest.json";
    if (std::filesystem::exists(manifest)) load_manifest(manifest.string());
  }

  const std::vector<std::string>& files() const { return files_; }

  /// Attaches poses by frame order (e.g. from a --poses file), overriding
  /// any manifest poses.
  void set_poses(const std::vector<CameraPose>& poses) {
    PS4_REQUIRE(poses.size() == files_.size(),
                "pose count does not match frame count");
    poses_.assign(poses.begin(), poses.end());
  }

  Frame load(std::size_t index) const {
    Frame f = load_frame(files_[index]);
    if (index < timestamps_.size() && timestamps_[index]) f.timestamp = timestamps_[index];
    if (index < poses_.size() && poses_[index]) f.pose = poses_[index];
    return f;
  }

  std::size_t size() const override {
    return files_.size() >= 3 ? files_.size() - 2 : 0;
  }

  TripletSample sample(std::size_t index, Rng& /*rng*/) const override {
    PS4_REQUIRE(index + 2 < files_.size(), "frames-dir triple index out of range");
    return {load(index), load(index + 1), load(index + 2), 0.5};
  }

  std::string id(std::size_t index) const override { return files_[index + 1]; }

 private:
  void load_manifest(const std::string& path) {
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    const auto& frames = j.at("frames");
    timestamps_.resize(files_.size());
    poses_.resize(files_.size());
    for (const auto& e : frames) {
      const std::string file = e.at("file").get<std::string>();
      for (std::size_t i = 0; i < files_.size(); ++i) {
        if (std::filesystem::path(files_[i]).filename() == file) {
          if (e.contains("timestamp")) timestamps_[i] = e.at("timestamp").get<double>();
          if (e.contains("translation")) poses_[i] = pose_from_json(e);
          break;
        }
      }
    }
  }

  std::vector<std::string> files_;
  std::vector<std::optional<double>> timestamps_;
  std::vector<std::optional<CameraPose>> poses_;
};

/// Procedural fixed-timestep triplets: a smooth random texture translated by
/// a constant sub-pixel motion, cropped at offsets 0, d/2, d. Deterministic
/// per (seed, index).
class SyntheticTranslationSource : public SampleSource {
 public:
  SyntheticTranslationSource(std::size_t count, int size, double max_shift, std::uint64_t seed)
      : count_(count), size_(size), max_shift_(max_shift), seed_(seed) {
    PS4_REQUIRE(size >= 8, "synthetic frames must be at least 8x8");
  }

  std::size_t size() const override { return count_; }

  TripletSample sample(std::size_t index, Rng& /*rng*/) const override {
    Rng rng(derive_seed(seed_, index));
    Tensor<float> tex = make_texture(rng);
    const auto [dx, dy] = draw_motion(rng);
    const int margin = static_cast<int>(std::ceil(max_shift_)) + 2;
    TripletSample s;
    s.frame0 = Frame(window(tex, margin, margin, 0.0, 0.0));
    s.frame_t = Frame(window(tex, margin, margin, dx / 2, dy / 2));
    s.frame1 = Frame(window(tex, margin, margin, dx, dy));
    s.t = 0.5;
    return s;
  }

  /// The motion used for sample `index` (for test oracles).
  std::pair<double, double> motion_of(std::size_t index) const {
    Rng rng(derive_seed(seed_, index));
    make_texture(rng);
    return draw_motion(rng);
  }

 private:
  // Magnitude between a quarter and the full budget, random direction:
  // near-zero motions would make the plain blend trivially good.
  std::pair<double, double> draw_motion(Rng& rng) const {
    const double mag = uniform(rng, 0.25 * max_shift_, max_shift_);
    const double angle = uniform(rng, 0.0, 2.0 * M_PI);
    return {mag * std::cos(angle), mag * std::sin(angle)};
  }

  // Three octaves of value noise (feature scales ~8/4/2 px) so that blending
  // two shifted copies ghosts badly; only real motion compensation scores
  // well against these.
  Tensor<float> make_texture(Rng& rng) const {
    const int margin = static_cast<int>(std::ceil(max_shift_)) + 2;
    const int tex_size = size_ + 2 * margin;
    const double amp[3] = {0.45, 0.32, 0.23};
    Tensor<float> tex({3, tex_size, tex_size});
    for (int octave = 0; octave < 3; ++octave) {
      const int ups = 3 - octave;  // upsampled 8x, 4x, 2x
      const int cell = 1 << ups;
      const int grid = (tex_size + cell - 1) / cell + 1;
      Tensor<float> noise({3, grid, grid});
      for (std::size_t i = 0; i < noise.numel(); ++i)
        noise[i] = static_cast<float>(uniform(rng));
      for (int k = 0; k < ups; ++k) noise = ops::upsample2_bilinear(noise);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < tex_size; ++y)
          for (int x = 0; x < tex_size; ++x)
            tex.at(c, y, x) += static_cast<float>(amp[octave]) * noise.at(c, y, x);
    }
    return tex;
  }

  // Bilinear window read at fractional offset (ox+fx, oy+fy).
  Tensor<float> window(const Tensor<float>& tex, int oy, int ox, double fx, double fy) const {
    Tensor<float> out({3, size_, size_});
    const int h = tex.height(), w = tex.width();
    for (int y = 0; y < size_; ++y) {
      for (int x = 0; x < size_; ++x) {
        double sx = ox + x + fx, sy = oy + y + fy;
        sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
        sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
        const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double wx = sx - x0, wy = sy - y0;
        for (int c = 0; c < 3; ++c) {
          const double top = (1 - wx) * tex.at(c, y0, x0) + wx * tex.at(c, y0, x1);
          const double bot = (1 - wx) * tex.at(c, y1, x0) + wx * tex.at(c, y1, x1);
          out.at(c, y, x) = static_cast<float>((1 - wy) * top + wy * bot);
        }
      }
    }
    return out;
  }

  std::size_t count_;
  int size_;
  double max_shift_;
  std::uint64_t seed_;
};

// ---- batching ----

struct Batch {
  std::vector<TripletSample> samples;
  bool from_fixed = true;
};

/// Alternates batches between the fixed- and arbitrary-timestep sources
/// (fixed first). Each source keeps its own shuffled epoch order and
/// reshuffles when exhausted. The stream is a pure function of the seed.
class BatchStream {
 public:
  BatchStream(const SampleSource& fixed, const SampleSource* arbitrary, int batch_size,
              std::uint64_t seed, AugmentOptions augment = {})
      : fixed_(fixed), arbitrary_(arbitrary), batch_size_(batch_size), rng_(seed),
        augment_(augment) {
    PS4_REQUIRE(batch_size >= 1, "batch size must be >= 1");
    PS4_REQUIRE(fixed.size() > 0, "fixed source is empty");
    PS4_REQUIRE(!arbitrary || arbitrary->size() > 0, "arbitrary source is empty");
    reshuffle(fixed_order_, fixed_.size());
    if (arbitrary_) reshuffle(arb_order_, arbitrary_->size());
  }

  Batch next() {
    const bool use_fixed = !arbitrary_ || next_is_fixed_;
    next_is_fixed_ = !next_is_fixed_;
    const SampleSource& src = use_fixed ? fixed_ : *arbitrary_;
    auto& order = use_fixed ? fixed_order_ : arb_order_;
    auto& cursor = use_fixed ? fixed_cursor_ : arb_cursor_;
    auto& passes = use_fixed ? fixed_passes_ : arb_passes_;
    Batch batch;
    batch.from_fixed = use_fixed;
    batch.samples.reserve(static_cast<std::size_t>(batch_size_));
    for (int i = 0; i < batch_size_; ++i) {
      if (cursor >= order.size()) {
        reshuffle(order, src.size());
        cursor = 0;
        ++passes;
      }
      TripletSample s = src.sample(order[cursor++], rng_);
      batch.samples.push_back(augment_sample(std::move(s), rng_, augment_));
    }
    return batch;
  }

  long long fixed_passes() const { return fixed_passes_; }
  long long arbitrary_passes() const { return arb_passes_; }

 private:
  void reshuffle(std::vector<std::size_t>& order, std::size_t n) {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
  }

  const SampleSource& fixed_;
  const SampleSource* arbitrary_;
  int batch_size_;
  Rng rng_;
  AugmentOptions augment_;
  std::vector<std::size_t> fixed_order_, arb_order_;
  std::size_t fixed_cursor_ = 0, arb_cursor_ = 0;
  long long fixed_passes_ = 0, arb_passes_ = 0;
  bool next_is_fixed_ = true;
};

}  // namespace ps4pro
