#pragma once

// Shared helpers for the test suites: random tensors/frames, temp dirs, and
// scalar-loop reference oracles kept independent of the library kernels.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "ps4pro/image.hpp"
#include "ps4pro/tensor.hpp"

namespace testutil {

inline ps4pro::Tensor<float> random_tensor(std::vector<int> shape, ps4pro::Rng& rng,
                                           float lo = 0.0f, float hi = 1.0f) {
  ps4pro::Tensor<float> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(ps4pro::uniform(rng, lo, hi));
  return t;
}

inline ps4pro::Frame random_frame(int h, int w, ps4pro::Rng& rng) {
  return ps4pro::Frame(random_tensor({3, h, w}, rng));
}

/// Unique scratch directory under the system temp dir; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ps4pro_test_" + tag + "_" + std::to_string(getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Independent per-pixel bilinear warp oracle: plain double loops, border
/// clamp, no shared code with the library kernel.
inline ps4pro::Tensor<float> warp_oracle(const ps4pro::Tensor<float>& img,
                                         const ps4pro::Tensor<float>& flow) {
  const int c = img.channels(), h = img.height(), w = img.width();
  ps4pro::Tensor<float> out({c, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sx = x + static_cast<double>(flow.at(0, y, x));
      double sy = y + static_cast<double>(flow.at(1, y, x));
      sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
      sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < c; ++ch) {
        const double v = (1 - fy) * ((1 - fx) * img.at(ch, y0, x0) + fx * img.at(ch, y0, x1)) +
                         fy * ((1 - fx) * img.at(ch, y1, x0) + fx * img.at(ch, y1, x1));
        out.at(ch, y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

}  // namespace testutil
