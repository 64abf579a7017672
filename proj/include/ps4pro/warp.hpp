#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "ps4pro/image.hpp"
#include "ps4pro/ops.hpp"
#include "ps4pro/tensor.hpp"

namespace ps4pro {

/// Backward displacement field {2,H,W}: channel 0 = dx (columns),
/// channel 1 = dy (rows), in pixels at the field's own resolution.
/// flow(p) points from the synthesis frame toward the source frame.
struct FlowField {
  Tensor<float> vectors;

  FlowField() = default;
  explicit FlowField(Tensor<float> v) : vectors(std::move(v)) {
    PS4_REQUIRE(vectors.ndim() == 3 && vectors.dim(0) == 2, "FlowField must be {2,H,W}");
  }
  FlowField(int height, int width) : vectors(Tensor<float>({2, height, width})) {}

  int height() const { return vectors.height(); }
  int width() const { return vectors.width(); }

  void validate() const { PS4_REQUIRE(vectors.all_finite(), "FlowField has non-finite values"); }
};

/// Per-pixel blend weight in [0,1] selecting the first warped source.
struct OcclusionMask {
  Tensor<float> weights;

  OcclusionMask() = default;
  explicit OcclusionMask(Tensor<float> w) : weights(std::move(w)) {
    PS4_REQUIRE(weights.ndim() == 3 && weights.dim(0) == 1, "OcclusionMask must be {1,H,W}");
  }
  OcclusionMask(int height, int width) : weights(Tensor<float>({1, height, width})) {}

  int height() const { return weights.height(); }
  int width() const { return weights.width(); }

  void validate() const {
    for (std::size_t i = 0; i < weights.numel(); ++i)
      PS4_REQUIRE(weights[i] >= 0.0f && weights[i] <= 1.0f, "mask weight outside [0,1]");
  }
};

/// Samples `image` at p + flow(p) with bilinear interpolation; coordinates
/// outside the image clamp to the border. Zero flow returns the image
/// bit-exactly.
template <typename T>
Tensor<T> backward_warp(const Tensor<T>& image, const Tensor<T>& flow) {
  return ops::warp_bilinear(image, flow);
}

inline Tensor<float> backward_warp(const Tensor<float>& image, const FlowField& flow) {
  return ops::warp_bilinear(image, flow.vectors);
}

/// Pixelwise mask*warped0 + (1-mask)*warped1.
template <typename T>
Tensor<T> merge(const Tensor<T>& warped0, const Tensor<T>& warped1, const Tensor<T>& mask) {
  PS4_REQUIRE(warped0.same_shape(warped1), "merge input shape mismatch");
  PS4_REQUIRE(mask.channels() == 1 && mask.height() == warped0.height() &&
                  mask.width() == warped0.width(),
              "merge mask shape mismatch");
  for (std::size_t i = 0; i < mask.numel(); ++i)
    PS4_REQUIRE(mask[i] >= T(0) && mask[i] <= T(1), "merge mask outside [0,1]");
  const int c = warped0.channels();
  const std::size_t plane = static_cast<std::size_t>(warped0.height()) * warped0.width();
  Tensor<T> out(warped0.shape());
  for (int ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i)
      out[ch * plane + i] =
          mask[i] * warped0[ch * plane + i] + (T(1) - mask[i]) * warped1[ch * plane + i];
  return out;
}

inline Tensor<float> merge(const Tensor<float>& warped0, const Tensor<float>& warped1,
                           const OcclusionMask& mask) {
  return merge(warped0, warped1, mask.weights);
}

/// Doubles the spatial resolution bilinearly and doubles the displacement
/// values (flow units follow resolution).
inline FlowField upsample_flow_2x(const FlowField& flow) {
  Tensor<float> up = ops::upsample2_bilinear(flow.vectors);
  for (std::size_t i = 0; i < up.numel(); ++i) up[i] *= 2.0f;
  return FlowField(std::move(up));
}

// ---- debug flow dump: "PS4F", u32 H, u32 W, then H*W*2 LE f32 ----

inline void save_flow(const FlowField& flow, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "flow dump assumes LE host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write flow file: " + path);
  out.write("PS4F", 4);
  const std::uint32_t h = static_cast<std::uint32_t>(flow.height());
  const std::uint32_t w = static_cast<std::uint32_t>(flow.width());
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  // interleaved (dx,dy) per pixel, row-major
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      const float v[2] = {flow.vectors.at(0, y, x), flow.vectors.at(1, y, x)};
      out.write(reinterpret_cast<const char*>(v), 8);
    }
  if (!out) throw IoError("short write: " + path);
}

inline FlowField load_flow(const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "flow dump assumes LE host");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing flow file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "PS4F", 4) != 0)
    throw FormatError("bad flow file magic: " + path);
  std::uint32_t h = 0, w = 0;
  in.read(reinterpret_cast<char*>(&h), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  FlowField flow(static_cast<int>(h), static_cast<int>(w));
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) {
      float v[2];
      in.read(reinterpret_cast<char*>(v), 8);
      flow.vectors.at(0, static_cast<int>(y), static_cast<int>(x)) = v[0];
      flow.vectors.at(1, static_cast<int>(y), static_cast<int>(x)) = v[1];
    }
  if (!in) throw FormatError("truncated flow file: " + path);
  return flow;
}

}  // namespace ps4pro
