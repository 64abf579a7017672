#pragma once

#include <png.h>

#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ps4pro/ops.hpp"
#include "ps4pro/tensor.hpp"

// libjpeg pulls in C headers with no include guard discipline of its own.
#include <cstddef>
extern "C" {
#include <jerror.h>
#include <jpeglib.h>
}

namespace ps4pro {

struct CameraPose {
  std::array<double, 3> translation{0, 0, 0};
  std::array<double, 4> rotation_wxyz{1, 0, 0, 0};  // unit quaternion

  double quat_norm() const {
    const auto& q = rotation_wxyz;
    return std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  }

  void validate() const {
    PS4_REQUIRE(std::abs(quat_norm() - 1.0) <= 1e-9, "camera pose quaternion is not unit norm");
  }
};

/// RGB image with pixel values in [0,1], stored channel-first {3,H,W}.
struct Frame {
  Tensor<float> pixels;
  std::optional<double> timestamp;
  std::optional<CameraPose> pose;

  Frame() = default;
  explicit Frame(Tensor<float> px) : pixels(std::move(px)) {
    PS4_REQUIRE(pixels.ndim() == 3 && pixels.dim(0) == 3, "Frame pixels must be {3,H,W}");
    PS4_REQUIRE(pixels.height() >= 1 && pixels.width() >= 1, "Frame must be at least 1x1");
  }
  Frame(int height, int width) : pixels(Tensor<float>({3, height, width})) {
    PS4_REQUIRE(height >= 1 && width >= 1, "Frame must be at least 1x1");
  }

  int height() const { return pixels.height(); }
  int width() const { return pixels.width(); }
  float& at(int c, int y, int x) { return pixels.at(c, y, x); }
  float at(int c, int y, int x) const { return pixels.at(c, y, x); }

  void validate() const {
    for (std::size_t i = 0; i < pixels.numel(); ++i) {
      PS4_REQUIRE(std::isfinite(pixels[i]) && pixels[i] >= 0.0f && pixels[i] <= 1.0f,
                  "Frame pixel outside [0,1]");
    }
    if (pose) pose->validate();
  }
};

namespace detail {

inline bool has_magic(const std::string& path, const unsigned char* magic, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::vector<unsigned char> head(n);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(n));
  return in.gcount() == static_cast<std::streamsize>(n) && std::memcmp(head.data(), magic, n) == 0;
}

inline Tensor<float> rgb8_to_pixels(const std::vector<unsigned char>& buf, int h, int w) {
  Tensor<float> px({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        px.at(c, y, x) = static_cast<float>(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
  return px;
}

inline std::vector<unsigned char> pixels_to_rgb8(const Tensor<float>& px) {
  const int h = px.height(), w = px.width();
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = px.at(c, y, x);
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  return buf;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

inline Tensor<float> load_jpeg(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path);
  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    throw FormatError("undecodable JPEG: " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(fp);
  return rgb8_to_pixels(buf, h, w);
}

inline void save_jpeg(const Tensor<float>& px, const std::string& path, int quality) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot write " + path);
  jpeg_compress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::fclose(fp);
    throw IoError("JPEG encode failed: " + path);
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, fp);
  cinfo.image_width = static_cast<JDIMENSION>(px.width());
  cinfo.image_height = static_cast<JDIMENSION>(px.height());
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  auto buf = pixels_to_rgb8(px);
  while (cinfo.next_scanline < cinfo.image_height) {
    unsigned char* row = buf.data() + static_cast<std::size_t>(cinfo.next_scanline) * px.width() * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(fp);
}

inline Tensor<float> load_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw FormatError("undecodable PNG: " + path + " (" + image.message + ")");
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError("undecodable PNG: " + path + " (" + image.message + ")");
  }
  return rgb8_to_pixels(buf, static_cast<int>(image.height), static_cast<int>(image.width));
}

inline void save_png(const Tensor<float>& px, const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(px.width());
  image.height = static_cast<png_uint_32>(px.height());
  image.format = PNG_FORMAT_RGB;
  auto buf = pixels_to_rgb8(px);
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path + " (" + image.message + ")");
}

}  // namespace detail

/// Loads a PNG or JPEG file as a Frame; 8-bit values map to [0,1] by /255.
inline Frame load_frame(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing file: " + path);
  static const unsigned char png_magic[4] = {0x89, 'P', 'N', 'G'};
  static const unsigned char jpg_magic[3] = {0xFF, 0xD8, 0xFF};
  if (detail::has_magic(path, png_magic, 4)) return Frame(detail::load_png(path));
  if (detail::has_magic(path, jpg_magic, 3)) return Frame(detail::load_jpeg(path));
  throw FormatError("not a PNG or JPEG file: " + path);
}

/// Saves a Frame as PNG or JPEG depending on the extension (default PNG).
inline void save_frame(const Frame& frame, const std::string& path, int jpeg_quality = 95) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::exists(parent))
    throw IoError("parent directory does not exist: " + parent.string());
  auto ext = std::filesystem::path(path).extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
  if (ext == ".jpg" || ext == ".jpeg")
    detail::save_jpeg(frame.pixels, path, jpeg_quality);
  else
    detail::save_png(frame.pixels, path);
}

/// Book-keeping to undo pad_to_multiple exactly.
struct CropRecord {
  int orig_height = 0;
  int orig_width = 0;
  bool identity() const { return orig_height == 0; }
};

/// Pads a {C,H,W} tensor at the bottom/right with edge replication until both
/// spatial dims are multiples of `multiple`.
template <typename T>
std::pair<Tensor<T>, CropRecord> pad_tensor_to_multiple(const Tensor<T>& x, int multiple) {
  PS4_REQUIRE(multiple >= 1, "padding multiple must be >= 1");
  const int c = x.channels(), h = x.height(), w = x.width();
  const int ph = ((h + multiple - 1) / multiple) * multiple;
  const int pw = ((w + multiple - 1) / multiple) * multiple;
  if (ph == h && pw == w) return {x, CropRecord{}};
  Tensor<T> out({c, ph, pw});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < ph; ++y) {
      const int sy = y < h ? y : h - 1;
      for (int x2 = 0; x2 < pw; ++x2) out.at(ch, y, x2) = x.at(ch, sy, x2 < w ? x2 : w - 1);
    }
  return {out, CropRecord{h, w}};
}

template <typename T>
Tensor<T> crop_tensor(const Tensor<T>& x, const CropRecord& rec) {
  if (rec.identity()) return x;
  Tensor<T> out({x.channels(), rec.orig_height, rec.orig_width});
  for (int c = 0; c < x.channels(); ++c)
    for (int y = 0; y < rec.orig_height; ++y)
      for (int x2 = 0; x2 < rec.orig_width; ++x2) out.at(c, y, x2) = x.at(c, y, x2);
  return out;
}

inline std::pair<Frame, CropRecord> pad_to_multiple(const Frame& frame, int multiple) {
  auto [px, rec] = pad_tensor_to_multiple(frame.pixels, multiple);
  Frame out(std::move(px));
  out.timestamp = frame.timestamp;
  out.pose = frame.pose;
  return {std::move(out), rec};
}

inline Frame crop_frame(const Frame& frame, const CropRecord& rec) {
  Frame out(crop_tensor(frame.pixels, rec));
  out.timestamp = frame.timestamp;
  out.pose = frame.pose;
  return out;
}

/// 2x2 average pooling of an image or field; applied twice gives the
/// quarter-resolution pyramid level.
template <typename T>
Tensor<T> downsample_half(const Tensor<T>& x) {
  return ops::avgpool2(x);
}

inline Frame downsample_half(const Frame& frame) {
  Frame out(downsample_half(frame.pixels));
  out.timestamp = frame.timestamp;
  out.pose = frame.pose;
  return out;
}

// ---- pose JSON ----

inline nlohmann::json pose_to_json(const CameraPose& pose) {
  return nlohmann::json{{"translation", pose.translation},
                        {"rotation_quat_wxyz", pose.rotation_wxyz}};
}

inline CameraPose pose_from_json(const nlohmann::json& j) {
  CameraPose p;
  const auto& t = j.at("translation");
  const auto& q = j.at("rotation_quat_wxyz");
  PS4_REQUIRE(t.size() == 3 && q.size() == 4, "pose JSON must have 3 translation + 4 quat values");
  for (int i = 0; i < 3; ++i) p.translation[static_cast<std::size_t>(i)] = t[static_cast<std::size_t>(i)].get<double>();
  for (int i = 0; i < 4; ++i) p.rotation_wxyz[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i)].get<double>();
  p.validate();
  return p;
}

/// Reads a pose file: a JSON array with one pose object per frame.
inline std::vector<CameraPose> load_pose_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing pose file: " + path);
  nlohmann::json j;
  in >> j;
  PS4_REQUIRE(j.is_array(), "pose file must be a JSON array");
  std::vector<CameraPose> poses;
  poses.reserve(j.size());
  for (const auto& e : j) poses.push_back(pose_from_json(e));
  return poses;
}

inline void save_pose_file(const std::vector<CameraPose>& poses, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : poses) j.push_back(pose_to_json(p));
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pose file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace ps4pro
