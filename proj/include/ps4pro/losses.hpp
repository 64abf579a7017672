#pragma once

// Training objective: L1 reconstruction + lambda * perceptual + teacher flow
// distillation. Every term is built from tape ops so the same formulas serve
// plain evaluation (non-recording tape) and gradient computation.

#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "ps4pro/autograd.hpp"
#include "ps4pro/image.hpp"
#include "ps4pro/warp.hpp"

namespace ps4pro {

struct LossBreakdown {
  double l1 = 0;
  double perceptual = 0;
  double teacher = 0;
  double total = 0;
};

/// Differentiable multi-level feature map builder: takes a {3,H,W} value,
/// returns one feature value per level. Implementations must be fixed
/// functions of the input (no trainable state).
template <typename T>
using FeatureFn =
    std::function<std::vector<typename Tape<T>::Value>(Tape<T>&, const typename Tape<T>::Value&)>;

namespace detail {

// 5x5 binomial blur as a dense {3,3,5,5} conv (per-channel diagonal).
template <typename T>
Tensor<T> blur_kernel() {
  static const double b[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  Tensor<T> w({3, 3, 5, 5});
  for (int c = 0; c < 3; ++c)
    for (int ky = 0; ky < 5; ++ky)
      for (int kx = 0; kx < 5; ++kx)
        w[((static_cast<std::size_t>(c) * 3 + c) * 5 + ky) * 5 + kx] =
            static_cast<T>(b[ky] * b[kx]);
  return w;
}

// 3x3 Sobel, /8 normalization; horizontal = d/dx when horizontal==true.
template <typename T>
Tensor<T> sobel_kernel(bool horizontal) {
  static const double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  Tensor<T> w({3, 3, 3, 3});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x)
        w[((static_cast<std::size_t>(c) * 3 + c) * 3 + y) * 3 + x] =
            static_cast<T>((horizontal ? kx[y][x] : kx[x][y]) / 8.0);
  return w;
}

}  // namespace detail

/// The default training-free extractor: at each of 3 levels, features are
/// {blurred image, horizontal gradients, vertical gradients}; the blurred
/// image, decimated 2x, feeds the next level. Input dims must be divisible
/// by 4 so the pyramid stays even.
template <typename T>
FeatureFn<T> default_feature_extractor() {
  return [](Tape<T>& tape, const typename Tape<T>::Value& img) {
    PS4_REQUIRE(img.height() % 4 == 0 && img.width() % 4 == 0,
                "feature extractor needs dims divisible by 4");
    auto zero_bias = tape.constant(Tensor<T>({3}));
    auto blur_w = tape.constant(detail::blur_kernel<T>());
    auto gx_w = tape.constant(detail::sobel_kernel<T>(true));
    auto gy_w = tape.constant(detail::sobel_kernel<T>(false));
    std::vector<typename Tape<T>::Value> feats;
    auto cur = img;
    for (int level = 0; level < 3; ++level) {
      auto blurred = tape.conv2d(cur, blur_w, zero_bias, 1, 2);
      auto gx = tape.conv2d(cur, gx_w, zero_bias, 1, 1);
      auto gy = tape.conv2d(cur, gy_w, zero_bias, 1, 1);
      feats.push_back(tape.concat_channels({blurred, gx, gy}));
      if (level < 2) cur = tape.avgpool2(blurred);
    }
    return feats;
  };
}

/// Tape values of every loss component. `teacher` is a zero constant when
/// distillation is disabled.
template <typename T>
struct TapeLoss {
  typename Tape<T>::Value l1, perceptual, teacher, total;
};

template <typename T>
typename Tape<T>::Value build_teacher_term(Tape<T>& tape,
                                           const typename Tape<T>::Value& flow_t0,
                                           const typename Tape<T>::Value& flow_t1,
                                           const Tensor<T>& teacher_t0,
                                           const Tensor<T>& teacher_t1) {
  auto l0 = tape.mean_abs_diff(flow_t0, tape.constant(teacher_t0));
  auto l1 = tape.mean_abs_diff(flow_t1, tape.constant(teacher_t1));
  return tape.scale(tape.add(l0, l1), T(0.5));
}

/// total = l1 + lambda*perceptual + teacher (teacher term only when teacher
/// flows are supplied).
template <typename T>
TapeLoss<T> build_total_loss(Tape<T>& tape, const typename Tape<T>::Value& pred,
                             const typename Tape<T>::Value& target,
                             const typename Tape<T>::Value& flow_t0,
                             const typename Tape<T>::Value& flow_t1,
                             const std::optional<std::pair<Tensor<T>, Tensor<T>>>& teacher_flows,
                             double lambda, const FeatureFn<T>& extractor) {
  PS4_REQUIRE(lambda >= 0, "lambda must be >= 0");
  TapeLoss<T> out;
  out.l1 = tape.mean_abs_diff(pred, target);
  auto pf = extractor(tape, pred);
  auto tf = extractor(tape, target);
  PS4_REQUIRE(pf.size() == tf.size() && !pf.empty(), "extractor level mismatch");
  auto acc = tape.rms_diff(pf[0], tf[0]);
  for (std::size_t i = 1; i < pf.size(); ++i) acc = tape.add(acc, tape.rms_diff(pf[i], tf[i]));
  out.perceptual = tape.scale(acc, T(1.0 / static_cast<double>(pf.size())));
  if (teacher_flows)
    out.teacher = build_teacher_term(tape, flow_t0, flow_t1, teacher_flows->first,
                                     teacher_flows->second);
  else
    out.teacher = tape.constant(Tensor<T>({1}));
  out.total = tape.add(tape.add(out.l1, tape.scale(out.perceptual, static_cast<T>(lambda))),
                       out.teacher);
  return out;
}

// ---- plain (non-recording) entry points ----

template <typename T>
double l1_loss(const Tensor<T>& predicted, const Tensor<T>& target) {
  PS4_REQUIRE(predicted.same_shape(target), "l1_loss shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.numel(); ++i)
    acc += std::abs(static_cast<double>(predicted[i]) - static_cast<double>(target[i]));
  return acc / static_cast<double>(predicted.numel());
}

inline double l1_loss(const Frame& predicted, const Frame& target) {
  return l1_loss(predicted.pixels, target.pixels);
}

template <typename T>
double perceptual_loss(const Tensor<T>& predicted, const Tensor<T>& target,
                       const FeatureFn<T>& extractor) {
  PS4_REQUIRE(predicted.same_shape(target), "perceptual_loss shape mismatch");
  Tape<T> tape(false);
  auto pf = extractor(tape, tape.constant(predicted));
  auto tf = extractor(tape, tape.constant(target));
  double acc = 0.0;
  for (std::size_t i = 0; i < pf.size(); ++i)
    acc += static_cast<double>(tape.rms_diff(pf[i], tf[i]).t()[0]);
  return acc / static_cast<double>(pf.size());
}

inline double perceptual_loss(const Frame& predicted, const Frame& target) {
  return perceptual_loss<float>(predicted.pixels, target.pixels,
                                default_feature_extractor<float>());
}

/// Mean absolute difference over both directional fields and both vector
/// components.
inline double teacher_loss(const std::pair<FlowField, FlowField>& predicted,
                           const std::pair<FlowField, FlowField>& teacher) {
  PS4_REQUIRE(predicted.first.vectors.same_shape(teacher.first.vectors) &&
                  predicted.second.vectors.same_shape(teacher.second.vectors),
              "teacher_loss resolution mismatch");
  double acc = 0.0;
  std::size_t n = 0;
  const Tensor<float>* preds[2] = {&predicted.first.vectors, &predicted.second.vectors};
  const Tensor<float>* teas[2] = {&teacher.first.vectors, &teacher.second.vectors};
  for (int f = 0; f < 2; ++f) {
    for (std::size_t i = 0; i < preds[f]->numel(); ++i)
      acc += std::abs(static_cast<double>((*preds[f])[i]) - static_cast<double>((*teas[f])[i]));
    n += preds[f]->numel();
  }
  return acc / static_cast<double>(n);
}

/// Supplies distillation target flows given the two inputs and the ground
/// truth middle frame. Implementations must be safe for concurrent queries.
class TeacherOracle {
 public:
  virtual ~TeacherOracle() = default;
  virtual std::pair<FlowField, FlowField> flows(const Tensor<float>& frame0,
                                                const Tensor<float>& frame1,
                                                const Tensor<float>& target, double t) const = 0;
};

/// Teacher term is gated to the first phase of training: included only when
/// a teacher is present and epoch < cutoff (exclusive).
inline bool teacher_active(bool has_teacher, int epoch, int cutoff) {
  return has_teacher && epoch < cutoff;
}

/// Eq-style weighted sum with the teacher term gated by epoch. Teacher flows
/// must already be queried from the oracle (they depend on the input frames,
/// which the loss itself never sees).
inline LossBreakdown total_loss(const Frame& predicted, const Frame& target,
                                const std::pair<FlowField, FlowField>& predicted_flows,
                                const std::optional<std::pair<FlowField, FlowField>>& teacher_flows,
                                int epoch, int teacher_cutoff = 200, double lambda = 0.005) {
  PS4_REQUIRE(lambda >= 0, "lambda must be >= 0");
  LossBreakdown b;
  b.l1 = l1_loss(predicted, target);
  b.perceptual = perceptual_loss(predicted, target);
  if (teacher_active(teacher_flows.has_value(), epoch, teacher_cutoff))
    b.teacher = teacher_loss(predicted_flows, *teacher_flows);
  b.total = b.l1 + lambda * b.perceptual + b.teacher;
  return b;
}

/// Convenience overload that queries the oracle itself.
inline LossBreakdown total_loss(const Frame& predicted, const Frame& target,
                                const std::pair<FlowField, FlowField>& predicted_flows,
                                const TeacherOracle* teacher, const Frame& frame0,
                                const Frame& frame1, double t, int epoch,
                                int teacher_cutoff = 200, double lambda = 0.005) {
  std::optional<std::pair<FlowField, FlowField>> tf;
  if (teacher_active(teacher != nullptr, epoch, teacher_cutoff))
    tf = teacher->flows(frame0.pixels, frame1.pixels, target.pixels, t);
  return total_loss(predicted, target, predicted_flows, tf, epoch, teacher_cutoff, lambda);
}

/// Assembles a breakdown from already-computed parts, keeping the
/// total = l1 + lambda*perceptual + teacher invariant in one place.
inline LossBreakdown make_breakdown(double l1, double perceptual, double teacher, double lambda) {
  return {l1, perceptual, teacher, l1 + lambda * perceptual + teacher};
}

/// Coarse-to-fine SAD block matching from the ground-truth middle frame to a
/// source frame. Desk-scale stand-in for a pretrained flow teacher; exact for
/// pure translations up to the search radius.
class BlockMatchingTeacher : public TeacherOracle {
 public:
  explicit BlockMatchingTeacher(int levels = 3, int coarse_radius = 4, int refine_radius = 1,
                                int patch = 7)
      : levels_(levels), coarse_radius_(coarse_radius), refine_radius_(refine_radius),
        patch_(patch) {}

  std::pair<FlowField, FlowField> flows(const Tensor<float>& frame0, const Tensor<float>& frame1,
                                        const Tensor<float>& target,
                                        double /*t*/) const override {
    return {match(target, frame0), match(target, frame1)};
  }

  /// Dense backward flow d with target(p) ~= source(p + d(p)).
  FlowField match(const Tensor<float>& target, const Tensor<float>& source) const {
    PS4_REQUIRE(target.same_shape(source), "block matching resolution mismatch");
    std::vector<Tensor<float>> tgt_pyr{target}, src_pyr{source};
    for (int l = 1; l < levels_; ++l) {
      if (tgt_pyr.back().height() % 2 || tgt_pyr.back().width() % 2) break;
      tgt_pyr.push_back(ops::avgpool2(tgt_pyr.back()));
      src_pyr.push_back(ops::avgpool2(src_pyr.back()));
    }
    Tensor<float> flow({2, tgt_pyr.back().height(), tgt_pyr.back().width()});
    search(tgt_pyr.back(), src_pyr.back(), flow, coarse_radius_);
    for (int l = static_cast<int>(tgt_pyr.size()) - 2; l >= 0; --l) {
      Tensor<float> up = ops::upsample2_bilinear(flow);
      for (std::size_t i = 0; i < up.numel(); ++i) up[i] *= 2.0f;
      flow = std::move(up);
      search(tgt_pyr[static_cast<std::size_t>(l)], src_pyr[static_cast<std::size_t>(l)], flow,
             refine_radius_);
    }
    return FlowField(std::move(flow));
  }

 private:
  // Integer-offset SAD search around the current flow estimate, per pixel.
  void search(const Tensor<float>& tgt, const Tensor<float>& src, Tensor<float>& flow,
              int radius) const {
    const int h = tgt.height(), w = tgt.width(), half = patch_ / 2;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int bx = static_cast<int>(std::lround(flow.at(0, y, x)));
        const int by = static_cast<int>(std::lround(flow.at(1, y, x)));
        double best = 1e30;
        int best_dx = bx, best_dy = by;
        for (int dy = by - radius; dy <= by + radius; ++dy) {
          for (int dx = bx - radius; dx <= bx + radius; ++dx) {
            double sad = 0.0;
            for (int py = -half; py <= half; ++py) {
              const int ty = clampi(y + py, 0, h - 1);
              const int sy = clampi(y + py + dy, 0, h - 1);
              for (int px = -half; px <= half; ++px) {
                const int tx = clampi(x + px, 0, w - 1);
                const int sx = clampi(x + px + dx, 0, w - 1);
                for (int c = 0; c < tgt.channels(); ++c)
                  sad += std::abs(static_cast<double>(tgt.at(c, ty, tx)) - src.at(c, sy, sx));
              }
            }
            if (sad < best - 1e-12) {
              best = sad;
              best_dx = dx;
              best_dy = dy;
            }
          }
        }
        flow.at(0, y, x) = static_cast<float>(best_dx);
        flow.at(1, y, x) = static_cast<float>(best_dy);
      }
    }
  }

  static int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

  int levels_, coarse_radius_, refine_radius_, patch_;
};

}  // namespace ps4pro
