#include <catch2/catch_amalgamated.hpp>

#include "ps4pro/warp.hpp"
#include "testutil.hpp"

using ps4pro::FlowField;
using ps4pro::OcclusionMask;
using ps4pro::Tensor;
using testutil::TempDir;

namespace {

Tensor<float> column_ramp(int h, int w) {
  Tensor<float> img({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(0, y, x) = static_cast<float>(x);
  return img;
}

FlowField constant_flow(int h, int w, float dx, float dy) {
  FlowField f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.vectors.at(0, y, x) = dx;
      f.vectors.at(1, y, x) = dy;
    }
  return f;
}

}  // namespace

TEST_CASE("zero flow is the bit-exact identity") {
  ps4pro::Rng rng(1);
  auto img = testutil::random_tensor({3, 9, 7}, rng);
  auto out = ps4pro::backward_warp(img, constant_flow(9, 7, 0.0f, 0.0f));
  for (std::size_t i = 0; i < img.numel(); ++i) CHECK(out[i] == img[i]);
}

TEST_CASE("integer shift pulls the right neighbor, clamped at the border") {
  auto img = column_ramp(4, 6);
  auto out = ps4pro::backward_warp(img, constant_flow(4, 6, 1.0f, 0.0f));
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) CHECK(out.at(0, y, x) == Catch::Approx(x + 1.0));
    CHECK(out.at(0, y, 5) == Catch::Approx(5.0));  // last column repeats
  }
}

TEST_CASE("half-pixel shift lands between columns") {
  auto img = column_ramp(4, 6);
  auto out = ps4pro::backward_warp(img, constant_flow(4, 6, 0.5f, 0.0f));
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) CHECK(out.at(0, y, x) == Catch::Approx(x + 0.5));
}

TEST_CASE("warp matches the scalar-loop oracle on random inputs") {
  ps4pro::Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto img = testutil::random_tensor({3, 16, 16}, rng);
    // Flows large enough to leave the image on purpose.
    auto flow = testutil::random_tensor({2, 16, 16}, rng, -20.0f, 20.0f);
    auto got = ps4pro::backward_warp(img, FlowField(flow));
    auto expect = testutil::warp_oracle(img, flow);
    CHECK(ps4pro::max_abs_diff(got, expect) < 1e-6);
  }
}

TEST_CASE("warp output stays inside the input value range") {
  ps4pro::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto img = testutil::random_tensor({3, 8, 8}, rng, 0.2f, 0.9f);
    auto flow = testutil::random_tensor({2, 8, 8}, rng, -12.0f, 12.0f);
    auto out = ps4pro::backward_warp(img, FlowField(flow));
    CHECK(out.min() >= img.min() - 1e-6f);
    CHECK(out.max() <= img.max() + 1e-6f);
  }
}

TEST_CASE("warp rejects shape mismatch") {
  Tensor<float> img({3, 8, 8});
  FlowField flow(4, 4);
  CHECK_THROWS_AS(ps4pro::backward_warp(img, flow), ps4pro::ContractViolation);
}

TEST_CASE("merge: degenerate masks and convex combination") {
  ps4pro::Rng rng(4);
  auto a = testutil::random_tensor({3, 5, 5}, rng);
  auto b = testutil::random_tensor({3, 5, 5}, rng);

  Tensor<float> ones({1, 5, 5}, 1.0f);
  auto out = ps4pro::merge(a, b, ones);
  CHECK(ps4pro::max_abs_diff(out, a) == 0.0);

  Tensor<float> zeros({1, 5, 5}, 0.0f);
  out = ps4pro::merge(a, b, zeros);
  CHECK(ps4pro::max_abs_diff(out, b) == 0.0);

  Tensor<float> c02({3, 5, 5}, 0.2f), c08({3, 5, 5}, 0.8f), m025({1, 5, 5}, 0.25f);
  out = ps4pro::merge(c02, c08, m025);
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == Catch::Approx(0.65));

  // Convex combination property: output within the per-pixel span.
  Tensor<float> m({1, 5, 5});
  for (std::size_t i = 0; i < m.numel(); ++i) m[i] = static_cast<float>(ps4pro::uniform(rng));
  out = ps4pro::merge(a, b, m);
  const std::size_t plane = 25;
  for (int ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < plane; ++i) {
      const float lo = std::min(a[ch * plane + i], b[ch * plane + i]);
      const float hi = std::max(a[ch * plane + i], b[ch * plane + i]);
      CHECK(out[ch * plane + i] >= lo - 1e-6f);
      CHECK(out[ch * plane + i] <= hi + 1e-6f);
    }

  Tensor<float> bad({1, 5, 5}, 1.5f);
  CHECK_THROWS_AS(ps4pro::merge(a, b, bad), ps4pro::ContractViolation);
}

TEST_CASE("upsample_flow_2x: constants rescale, ramps stay ramps") {
  auto f = constant_flow(8, 8, 1.0f, -1.0f);
  auto up = ps4pro::upsample_flow_2x(f);
  CHECK(up.height() == 16);
  CHECK(up.width() == 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      CHECK(up.vectors.at(0, y, x) == Catch::Approx(2.0));
      CHECK(up.vectors.at(1, y, x) == Catch::Approx(-2.0));
    }

  auto zero = constant_flow(5, 5, 0.0f, 0.0f);
  auto upz = ps4pro::upsample_flow_2x(zero);
  CHECK(upz.height() == 10);
  CHECK(upz.vectors.min() == 0.0f);
  CHECK(upz.vectors.max() == 0.0f);

  // Linear ramp dx = x: interior follows the half-pixel-centre sampling
  // x_src = (x+0.5)/2 - 0.5, then doubles; clamped ends double the edge value.
  FlowField ramp(1, 4);
  for (int x = 0; x < 4; ++x) ramp.vectors.at(0, 0, x) = static_cast<float>(x);
  auto upr = ps4pro::upsample_flow_2x(ramp);
  const float expect[8] = {0.0f, 0.5f, 1.5f, 2.5f, 3.5f, 4.5f, 5.5f, 6.0f};
  for (int x = 0; x < 8; ++x) CHECK(upr.vectors.at(0, 0, x) == Catch::Approx(expect[x]));
  CHECK(upr.vectors.at(0, 0, 7) == Catch::Approx(2.0 * ramp.vectors.at(0, 0, 3)));
}

TEST_CASE("flow dump round trip with magic header") {
  TempDir tmp("flow");
  ps4pro::Rng rng(5);
  FlowField f(6, 9);
  for (std::size_t i = 0; i < f.vectors.numel(); ++i)
    f.vectors[i] = static_cast<float>(ps4pro::uniform(rng, -30.0, 30.0));
  ps4pro::save_flow(f, tmp.file("x.ps4f"));

  std::ifstream raw(tmp.file("x.ps4f"), std::ios::binary);
  char magic[4];
  raw.read(magic, 4);
  CHECK(std::string(magic, 4) == "PS4F");
  std::uint32_t h = 0, w = 0;
  raw.read(reinterpret_cast<char*>(&h), 4);
  raw.read(reinterpret_cast<char*>(&w), 4);
  CHECK(h == 6);
  CHECK(w == 9);

  auto back = ps4pro::load_flow(tmp.file("x.ps4f"));
  CHECK(ps4pro::max_abs_diff(back.vectors, f.vectors) == 0.0);
}
