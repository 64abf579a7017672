#pragma once

// The coarse-to-fine flow estimation network: one base block at quarter
// resolution and two refinement blocks at half and full resolution. Each
// block runs a single shared-weight hourglass module twice, once per input
// ordering, and averages the two predictions, which makes the whole cascade
// exactly symmetric under (I0,I1,t) -> (I1,I0,1-t).

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "ps4pro/autograd.hpp"
#include "ps4pro/config.hpp"
#include "ps4pro/image.hpp"
#include "ps4pro/warp.hpp"

namespace ps4pro {

struct BlockWidths {
  int trunk = 0;  // channel width of the hourglass trunk
  int head = 0;   // channel width of the flow/mask heads
};

struct NetConfig {
  BlockWidths base{126, 63};
  BlockWidths refine1{96, 48};
  BlockWidths refine2{60, 30};
  int expansion_rate = 2;                      // inverted-bottleneck expansion
  std::array<int, 2> base_kernel_sizes{7, 5};  // spatial kernels of the two IB groups
  std::string activation = "silu";
  std::string mask_activation = "sigmoid";
  // Block working scales are fixed: 1/4, 1/2, 1 of the input resolution.

  void validate() const {
    PS4_REQUIRE(base.trunk > 0 && refine1.trunk > 0 && refine2.trunk > 0, "trunk widths must be positive");
    PS4_REQUIRE(base.head > 0 && refine1.head > 0 && refine2.head > 0, "head widths must be positive");
    PS4_REQUIRE(expansion_rate >= 1, "expansion rate must be >= 1");
    PS4_REQUIRE(activation == "silu", "unsupported activation: " + activation);
    PS4_REQUIRE(mask_activation == "sigmoid", "unsupported mask activation: " + mask_activation);
  }

  KeyValues to_key_values() const {
    KeyValues kv;
    kv.set_int("arch.base.trunk_channels", base.trunk);
    kv.set_int("arch.base.head_channels", base.head);
    kv.set_int("arch.refine1.trunk_channels", refine1.trunk);
    kv.set_int("arch.refine1.head_channels", refine1.head);
    kv.set_int("arch.refine2.trunk_channels", refine2.trunk);
    kv.set_int("arch.refine2.head_channels", refine2.head);
    kv.set_int("arch.expansion_rate", expansion_rate);
    kv.set_int("arch.base_kernel_1", base_kernel_sizes[0]);
    kv.set_int("arch.base_kernel_2", base_kernel_sizes[1]);
    kv.set("arch.activation", activation);
    kv.set("arch.mask_activation", mask_activation);
    return kv;
  }

  static NetConfig from_key_values(const KeyValues& kv) {
    NetConfig c;
    c.base.trunk = static_cast<int>(kv.get_int_or("arch.base.trunk_channels", c.base.trunk));
    c.base.head = static_cast<int>(kv.get_int_or("arch.base.head_channels", c.base.head));
    c.refine1.trunk = static_cast<int>(kv.get_int_or("arch.refine1.trunk_channels", c.refine1.trunk));
    c.refine1.head = static_cast<int>(kv.get_int_or("arch.refine1.head_channels", c.refine1.head));
    c.refine2.trunk = static_cast<int>(kv.get_int_or("arch.refine2.trunk_channels", c.refine2.trunk));
    c.refine2.head = static_cast<int>(kv.get_int_or("arch.refine2.head_channels", c.refine2.head));
    c.expansion_rate = static_cast<int>(kv.get_int_or("arch.expansion_rate", c.expansion_rate));
    c.base_kernel_sizes[0] = static_cast<int>(kv.get_int_or("arch.base_kernel_1", 7));
    c.base_kernel_sizes[1] = static_cast<int>(kv.get_int_or("arch.base_kernel_2", 5));
    c.activation = kv.get_or("arch.activation", c.activation);
    c.mask_activation = kv.get_or("arch.mask_activation", c.mask_activation);
    c.validate();
    return c;
  }

  /// Smallest usable configuration (< 5k parameters), for gradient checks.
  static NetConfig tiny() {
    NetConfig c;
    c.base = {3, 2};
    c.refine1 = {3, 2};
    c.refine2 = {3, 2};
    c.base_kernel_sizes = {3, 3};
    return c;
  }

  static NetConfig small() {
    NetConfig c;
    c.base = {32, 16};
    c.refine1 = {24, 12};
    c.refine2 = {16, 8};
    return c;
  }
};

// Number of image channels entering each block's module: two RGB frames plus
// a timestep plane (base) or two RGB frames, two prior flows and the prior
// mask (refine).
inline constexpr int kBaseModuleInputCh = 3 + 3 + 1;
inline constexpr int kRefineModuleInputCh = 3 + 3 + 2 + 2 + 1;

enum class LayerKind { kConv, kDeconv };

struct LayerShape {
  const char* name;
  LayerKind kind;
  int out_ch, in_ch, kernel, stride, pad;
  bool zero_init;
};

/// The 18 layers of one hourglass module, in forward order.
inline std::vector<LayerShape> module_layers(bool base_block, BlockWidths bw, int expansion,
                                             std::array<int, 2> ib_kernels) {
  const int in = base_block ? kBaseModuleInputCh : kRefineModuleInputCh;
  const int c = bw.trunk, d = bw.head;
  const int e = base_block ? expansion * c : c;
  const int ka2 = base_block ? ib_kernels[0] : 3;
  const int ka3 = base_block ? ib_kernels[1] : 3;
  const int kb = base_block ? 1 : 3;  // IB groups project back with a 1x1
  auto pad_of = [](int k) { return (k - 1) / 2; };
  return {
      {"stem1", LayerKind::kConv, c, in, 3, 2, 1, false},
      {"stem2", LayerKind::kConv, c, c, 3, 2, 1, false},
      {"stem_skip", LayerKind::kConv, c, in, 1, 1, 0, false},
      {"g2a", LayerKind::kConv, e, c, ka2, 1, pad_of(ka2), false},
      {"g2b", LayerKind::kConv, c, e, kb, 1, pad_of(kb), false},
      {"g3a", LayerKind::kConv, e, c, ka3, 1, pad_of(ka3), false},
      {"g3b", LayerKind::kConv, c, e, kb, 1, pad_of(kb), false},
      {"g4a", LayerKind::kConv, c, c, 3, 1, 1, false},
      {"g4b", LayerKind::kConv, c, c, 3, 1, 1, false},
      {"g5a", LayerKind::kConv, c, c, 3, 1, 1, false},
      {"g5b", LayerKind::kConv, c, c, 3, 1, 1, false},
      {"up1", LayerKind::kDeconv, c, c, 4, 2, 1, false},
      {"up2", LayerKind::kDeconv, d, c, 4, 2, 1, false},
      {"up_skip", LayerKind::kConv, d, c, 1, 1, 0, false},
      {"flow_hidden", LayerKind::kConv, d, d, 3, 1, 1, false},
      {"flow_out", LayerKind::kConv, 4, d, 3, 1, 1, true},
      {"mask_hidden", LayerKind::kConv, d, 2 * d, 3, 1, 1, false},
      {"mask_out", LayerKind::kConv, 1, d, 3, 1, 1, true},
  };
}

inline constexpr int kLayersPerModule = 18;
inline constexpr int kParamsPerModule = 2 * kLayersPerModule;  // weight + bias
inline constexpr const char* kBlockNames[3] = {"base", "refine1", "refine2"};

template <typename T>
struct ModelWeights {
  NetConfig config;
  std::string version = "1";
  std::vector<std::string> names;                       // "block.layer.w|b"
  std::vector<std::shared_ptr<Tensor<T>>> values;       // aligned with names

  std::size_t size() const { return values.size(); }

  bool all_finite() const {
    for (const auto& v : values)
      if (!v->all_finite()) return false;
    return true;
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<LayerShape> layers_of_block(int block) const {
    const bool is_base = block == 0;
    const BlockWidths bw = block == 0 ? config.base : (block == 1 ? config.refine1 : config.refine2);
    return module_layers(is_base, bw, config.expansion_rate, config.base_kernel_sizes);
  }
};

/// Sum of element counts over the stored parameter arrays. Each shared array
/// is stored once, so within-block weight sharing is counted once.
template <typename T>
std::size_t count_parameters(const ModelWeights<T>& w) {
  std::size_t n = 0;
  for (const auto& v : w.values) n += v->numel();
  return n;
}

/// Builds weights for `config`: fan-in-scaled normal init everywhere except
/// the flow/mask output layers, which start at zero so the untrained network
/// is the exact linear blend. Set random_heads for nonzero output layers.
template <typename T = float>
ModelWeights<T> init_weights(const NetConfig& config, std::uint64_t seed,
                             bool random_heads = false) {
  config.validate();
  ModelWeights<T> w;
  w.config = config;
  Rng rng(seed);
  for (int block = 0; block < 3; ++block) {
    for (const auto& layer : w.layers_of_block(block)) {
      std::vector<int> wshape;
      int fan_in = layer.in_ch * layer.kernel * layer.kernel;
      if (layer.kind == LayerKind::kConv)
        wshape = {layer.out_ch, layer.in_ch, layer.kernel, layer.kernel};
      else
        wshape = {layer.in_ch, layer.out_ch, layer.kernel, layer.kernel};
      auto wt = std::make_shared<Tensor<T>>(wshape);
      auto bt = std::make_shared<Tensor<T>>(std::vector<int>{layer.out_ch});
      if (!layer.zero_init || random_heads) {
        const double scale = std::sqrt(2.0 / fan_in) * (layer.zero_init ? 0.1 : 1.0);
        for (std::size_t i = 0; i < wt->numel(); ++i)
          (*wt)[i] = static_cast<T>(gaussian(rng, 0.0, scale));
      }
      w.names.push_back(std::string(kBlockNames[block]) + "." + layer.name + ".w");
      w.values.push_back(std::move(wt));
      w.names.push_back(std::string(kBlockNames[block]) + "." + layer.name + ".b");
      w.values.push_back(std::move(bt));
    }
  }
  return w;
}

/// Flow pair + mask produced by one block, at that block's resolution.
struct BlockOutput {
  FlowField flow_t0;
  FlowField flow_t1;
  OcclusionMask mask;

  void validate() const {
    flow_t0.validate();
    flow_t1.validate();
    mask.validate();
    PS4_REQUIRE(flow_t0.height() == flow_t1.height() && flow_t0.height() == mask.height() &&
                    flow_t0.width() == flow_t1.width() && flow_t0.width() == mask.width(),
                "BlockOutput fields disagree on resolution");
  }
};

/// Upsamples a block output to the next pyramid level: flows double in both
/// resolution and magnitude, the mask doubles in resolution only.
inline BlockOutput upsample_block_output(const BlockOutput& o) {
  BlockOutput up;
  up.flow_t0 = upsample_flow_2x(o.flow_t0);
  up.flow_t1 = upsample_flow_2x(o.flow_t1);
  up.mask = OcclusionMask(ops::upsample2_bilinear(o.mask.weights));
  return up;
}

/// Binds a ModelWeights to a tape and runs network forwards on it. The same
/// code path serves gradient-recording training and eager inference.
template <typename T>
class FlowNetRunner {
 public:
  using Value = typename Tape<T>::Value;

  struct BlockOut {
    Value flow_t0, flow_t1, mask;
  };

  struct NetOut {
    BlockOut quarter, half, full;
    Value merged;  // unclamped Eq-style blend of the two warped inputs
  };

  FlowNetRunner(Tape<T>& tape, const ModelWeights<T>& weights)
      : tape_(tape), weights_(weights) {
    params_.reserve(weights.values.size());
    for (const auto& v : weights.values) params_.push_back(tape_.leaf(v));
  }

  const std::vector<Value>& param_values() const { return params_; }

  BlockOut base_block(const Value& img0_q, const Value& img1_q, double t) {
    PS4_REQUIRE(img0_q.height() % 4 == 0 && img0_q.width() % 4 == 0,
                "base block input dims must be divisible by 4");
    const int h = img0_q.height(), w = img0_q.width();
    auto tp = tape_.constant(Tensor<T>({1, h, w}, static_cast<T>(t)));
    auto tp1 = tape_.constant(Tensor<T>({1, h, w}, static_cast<T>(1.0 - t)));
    auto left = module_forward(0, tape_.concat_channels({img0_q, img1_q, tp}));
    auto right = module_forward(0, tape_.concat_channels({img1_q, img0_q, tp1}));
    BlockOut out;
    out.flow_t0 = tape_.scale(tape_.add(left.flow_a, right.flow_b), T(0.5));
    out.flow_t1 = tape_.scale(tape_.add(left.flow_b, right.flow_a), T(0.5));
    out.mask = tape_.scale(tape_.add(left.mask, tape_.affine(right.mask, T(-1), T(1))), T(0.5));
    return out;
  }

  /// block: 1 or 2. `prior` must already live at the images' resolution.
  BlockOut refine_block(int block, const Value& img0_s, const Value& img1_s,
                        const BlockOut& prior) {
    PS4_REQUIRE(block == 1 || block == 2, "refine block index must be 1 or 2");
    PS4_REQUIRE(img0_s.height() % 4 == 0 && img0_s.width() % 4 == 0,
                "refine block input dims must be divisible by 4");
    PS4_REQUIRE(prior.flow_t0.height() == img0_s.height() &&
                    prior.flow_t0.width() == img0_s.width(),
                "prior resolution does not match refine block inputs");
    auto inv_mask = tape_.affine(prior.mask, T(-1), T(1));
    auto left = module_forward(
        block, tape_.concat_channels({img0_s, img1_s, prior.flow_t0, prior.flow_t1, prior.mask}));
    auto right = module_forward(
        block, tape_.concat_channels({img1_s, img0_s, prior.flow_t1, prior.flow_t0, inv_mask}));
    BlockOut out;
    auto res0 = tape_.scale(tape_.add(left.flow_a, right.flow_b), T(0.5));
    auto res1 = tape_.scale(tape_.add(left.flow_b, right.flow_a), T(0.5));
    out.flow_t0 = tape_.add(prior.flow_t0, res0);
    out.flow_t1 = tape_.add(prior.flow_t1, res1);
    out.mask = tape_.scale(tape_.add(left.mask, tape_.affine(right.mask, T(-1), T(1))), T(0.5));
    return out;
  }

  static BlockOut upsample(Tape<T>& tape, const BlockOut& o) {
    BlockOut up;
    up.flow_t0 = tape.scale(tape.upsample2(o.flow_t0), T(2));
    up.flow_t1 = tape.scale(tape.upsample2(o.flow_t1), T(2));
    up.mask = tape.upsample2(o.mask);
    return up;
  }

  /// Full three-scale cascade plus warp and blend. Inputs are {3,H,W} with
  /// H, W divisible by 32.
  NetOut forward(const Value& img0, const Value& img1, double t) {
    PS4_REQUIRE(img0.height() == img1.height() && img0.width() == img1.width(),
                "input frames disagree on resolution");
    // Two pooled pyramid levels plus the stem's two stride-2 convs.
    PS4_REQUIRE(img0.height() % 16 == 0 && img0.width() % 16 == 0,
                "network input dims must be divisible by 16");
    PS4_REQUIRE(std::isfinite(t), "timestep must be finite");
    NetOut out;
    auto i0h = tape_.avgpool2(img0);
    auto i1h = tape_.avgpool2(img1);
    auto i0q = tape_.avgpool2(i0h);
    auto i1q = tape_.avgpool2(i1h);
    out.quarter = base_block(i0q, i1q, t);
    out.half = refine_block(1, i0h, i1h, upsample(tape_, out.quarter));
    out.full = refine_block(2, img0, img1, upsample(tape_, out.half));
    auto warped0 = tape_.warp(img0, out.full.flow_t0);
    auto warped1 = tape_.warp(img1, out.full.flow_t1);
    auto inv_mask = tape_.affine(out.full.mask, T(-1), T(1));
    out.merged = tape_.add(tape_.mul_mask(out.full.mask, warped0),
                           tape_.mul_mask(inv_mask, warped1));
    return out;
  }

 private:
  struct ModuleOut {
    Value flow_a, flow_b, mask;
  };

  const Value& pw(int block, int layer) const {
    return params_[static_cast<std::size_t>(block * kParamsPerModule + 2 * layer)];
  }
  const Value& pb(int block, int layer) const {
    return params_[static_cast<std::size_t>(block * kParamsPerModule + 2 * layer + 1)];
  }

  Value conv(int block, int layer, const Value& x, const LayerShape& ls) {
    return tape_.conv2d(x, pw(block, layer), pb(block, layer), ls.stride, ls.pad);
  }

  Value residual_group(int block, int la, const Value& x,
                       const std::vector<LayerShape>& ls) {
    auto h = tape_.silu(conv(block, la, x, ls[static_cast<std::size_t>(la)]));
    auto o = conv(block, la + 1, h, ls[static_cast<std::size_t>(la + 1)]);
    return tape_.add(x, o);
  }

  ModuleOut module_forward(int block, const Value& x) {
    const auto ls = weights_.layers_of_block(block);
    // Layer indices follow module_layers() order.
    auto s = tape_.silu(conv(block, 0, x, ls[0]));
    s = tape_.silu(conv(block, 1, s, ls[1]));
    auto pooled = tape_.avgpool2(tape_.avgpool2(x));
    auto f = tape_.add(s, conv(block, 2, pooled, ls[2]));
    f = residual_group(block, 3, f, ls);   // g2
    f = residual_group(block, 5, f, ls);   // g3
    f = residual_group(block, 7, f, ls);   // g4
    f = residual_group(block, 9, f, ls);   // g5
    auto u = tape_.silu(tape_.deconv2d(f, pw(block, 11), pb(block, 11), 2, 1));
    u = tape_.silu(tape_.deconv2d(u, pw(block, 12), pb(block, 12), 2, 1));
    auto uskip = conv(block, 13, tape_.upsample2(tape_.upsample2(f)), ls[13]);
    auto h = tape_.add(u, uskip);
    auto hf = tape_.silu(conv(block, 14, h, ls[14]));
    auto flows = conv(block, 15, hf, ls[15]);
    auto hm = tape_.silu(conv(block, 16, tape_.concat_channels({h, hf}), ls[16]));
    auto mask_logit = conv(block, 17, hm, ls[17]);
    ModuleOut out;
    out.flow_a = tape_.slice_channels(flows, 0, 2);
    out.flow_b = tape_.slice_channels(flows, 2, 4);
    out.mask = tape_.sigmoid(mask_logit);
    return out;
  }

  Tape<T>& tape_;
  const ModelWeights<T>& weights_;
  std::vector<Value> params_;
};

namespace detail {

inline BlockOutput unwrap_block(const FlowNetRunner<float>::BlockOut& o) {
  BlockOutput out;
  out.flow_t0 = FlowField(*o.flow_t0.data);
  out.flow_t1 = FlowField(*o.flow_t1.data);
  out.mask = OcclusionMask(*o.mask.data);
  return out;
}

inline FlowNetRunner<float>::BlockOut wrap_block(Tape<float>& tape, const BlockOutput& o) {
  return {tape.constant(o.flow_t0.vectors), tape.constant(o.flow_t1.vectors),
          tape.constant(o.mask.weights)};
}

}  // namespace detail

/// Runs the shared-weight module pair of the base block on quarter-resolution
/// inputs. Dims must be divisible by 4.
inline BlockOutput base_block_forward(const ModelWeights<float>& weights,
                                      const Tensor<float>& img0_q, const Tensor<float>& img1_q,
                                      double t) {
  PS4_REQUIRE(img0_q.all_finite() && img1_q.all_finite() && std::isfinite(t),
              "base block inputs must be finite");
  Tape<float> tape(false);
  FlowNetRunner<float> net(tape, weights);
  return detail::unwrap_block(net.base_block(tape.constant(img0_q), tape.constant(img1_q), t));
}

/// Runs refinement block 1 or 2 on inputs at its scale; `prior` must already
/// be upsampled to that scale.
inline BlockOutput refinement_block_forward(const ModelWeights<float>& weights, int block,
                                            const Tensor<float>& img0_s,
                                            const Tensor<float>& img1_s,
                                            const BlockOutput& prior) {
  PS4_REQUIRE(img0_s.all_finite() && img1_s.all_finite(), "refine block inputs must be finite");
  Tape<float> tape(false);
  FlowNetRunner<float> net(tape, weights);
  return detail::unwrap_block(net.refine_block(block, tape.constant(img0_s),
                                               tape.constant(img1_s),
                                               detail::wrap_block(tape, prior)));
}

struct InterpolateResult {
  Frame frame;
  BlockOutput full_res;  // final flows and mask, cropped to the input size
};

/// Synthesizes the frame at time t between frame0 and frame1: pads to a
/// multiple of 32, runs the cascade, warps the original-resolution inputs
/// with the final flows, blends by the mask, crops and clamps.
inline InterpolateResult interpolate_full(const ModelWeights<float>& weights, const Frame& frame0,
                                          const Frame& frame1, double t) {
  PS4_REQUIRE(frame0.height() == frame1.height() && frame0.width() == frame1.width(),
              "interpolate frames disagree on resolution");
  PS4_REQUIRE(std::isfinite(t), "timestep must be finite");
  auto [p0, rec] = pad_tensor_to_multiple(frame0.pixels, 32);
  auto [p1, rec1] = pad_tensor_to_multiple(frame1.pixels, 32);
  Tape<float> tape(false);
  FlowNetRunner<float> net(tape, weights);
  auto out = net.forward(tape.constant(std::move(p0)), tape.constant(std::move(p1)), t);

  Tensor<float> merged = crop_tensor(*out.merged.data, rec);
  for (std::size_t i = 0; i < merged.numel(); ++i)
    merged[i] = merged[i] < 0.0f ? 0.0f : (merged[i] > 1.0f ? 1.0f : merged[i]);

  InterpolateResult res;
  res.frame = Frame(std::move(merged));
  if (frame0.timestamp && frame1.timestamp)
    res.frame.timestamp = *frame0.timestamp + t * (*frame1.timestamp - *frame0.timestamp);
  res.full_res.flow_t0 = FlowField(crop_tensor(out.full.flow_t0.t(), rec));
  res.full_res.flow_t1 = FlowField(crop_tensor(out.full.flow_t1.t(), rec));
  res.full_res.mask = OcclusionMask(crop_tensor(out.full.mask.t(), rec));
  return res;
}

inline Frame interpolate(const ModelWeights<float>& weights, const Frame& frame0,
                         const Frame& frame1, double t) {
  return interpolate_full(weights, frame0, frame1, t).frame;
}

}  // namespace ps4pro
