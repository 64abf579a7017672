#pragma once

// Define-by-run reverse-mode autodiff over Tensor<T>. A Tape op computes its
// result immediately; when recording, it also appends a backward closure.
// With recording off the same code path runs eagerly and retains nothing, so
// inference frees intermediates as soon as the last Value handle dies.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ps4pro/ops.hpp"
#include "ps4pro/tensor.hpp"

namespace ps4pro {

template <typename T>
class Tape {
 public:
  /// Handle to a tensor on (or off) the tape. node < 0 means the value is a
  /// constant: no gradient flows into it.
  struct Value {
    std::shared_ptr<Tensor<T>> data;
    int node = -1;

    const Tensor<T>& t() const { return *data; }
    int channels() const { return data->channels(); }
    int height() const { return data->height(); }
    int width() const { return data->width(); }
  };

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  Value constant(Tensor<T> v) { return {std::make_shared<Tensor<T>>(std::move(v)), -1}; }

  Value constant(std::shared_ptr<Tensor<T>> v) { return {std::move(v), -1}; }

  /// A differentiable leaf (parameter or input whose gradient is wanted).
  Value leaf(std::shared_ptr<Tensor<T>> v) {
    if (!recording_) return {std::move(v), -1};
    Value out{v, static_cast<int>(nodes_.size())};
    nodes_.push_back(NodeRec{});
    nodes_.back().shape = v->shape();
    return out;
  }

  /// Accumulated gradient of a leaf/intermediate after backward().
  const Tensor<T>& grad(const Value& v) const {
    PS4_REQUIRE(v.node >= 0, "grad() of a constant value");
    return nodes_[static_cast<std::size_t>(v.node)].grad;
  }

  /// Runs reverse accumulation from a scalar root (shape {1}).
  void backward(const Value& root) {
    PS4_REQUIRE(recording_, "backward() on a non-recording tape");
    PS4_REQUIRE(root.node >= 0, "backward() root is constant");
    PS4_REQUIRE(root.data->numel() == 1, "backward() root must be scalar");
    for (auto& n : nodes_) {
      n.grad = Tensor<T>(n.shape);
    }
    nodes_[static_cast<std::size_t>(root.node)].grad.fill(T(1));
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      auto& n = nodes_[i];
      if (n.back && n.grad.numel() > 0) n.back(n.grad);
    }
  }

  // ---- ops ----

  Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad) {
    Tensor<T> y = ops::conv2d(x.t(), w.t(), b.t(), stride, pad);
    return make(std::move(y), {x, w, b}, [this, x, w, b, stride, pad](const Tensor<T>& g) {
      ops::conv2d_backward(x.t(), w.t(), g, stride, pad, sink(x), sink(w), sink(b));
    });
  }

  Value deconv2d(const Value& x, const Value& w, const Value& b, int stride, int pad) {
    Tensor<T> y = ops::deconv2d(x.t(), w.t(), b.t(), stride, pad);
    return make(std::move(y), {x, w, b}, [this, x, w, b, stride, pad](const Tensor<T>& g) {
      ops::deconv2d_backward(x.t(), w.t(), g, stride, pad, sink(x), sink(w), sink(b));
    });
  }

  Value silu(const Value& x) {
    Tensor<T> y = ops::silu(x.t());
    return make(std::move(y), {x}, [this, x](const Tensor<T>& g) {
      if (auto* dx = sink(x)) ops::silu_backward(x.t(), g, *dx);
    });
  }

  Value sigmoid(const Value& x) {
    auto y = std::make_shared<Tensor<T>>(ops::sigmoid(x.t()));
    return make_shared(y, {x}, [this, x, y](const Tensor<T>& g) {
      if (auto* dx = sink(x)) {
        for (std::size_t i = 0; i < g.numel(); ++i)
          (*dx)[i] += g[i] * (*y)[i] * (T(1) - (*y)[i]);
      }
    });
  }

  Value add(const Value& a, const Value& b) {
    Tensor<T> y = a.t() + b.t();
    return make(std::move(y), {a, b}, [this, a, b](const Tensor<T>& g) {
      if (auto* da = sink(a))
        for (std::size_t i = 0; i < g.numel(); ++i) (*da)[i] += g[i];
      if (auto* db = sink(b))
        for (std::size_t i = 0; i < g.numel(); ++i) (*db)[i] += g[i];
    });
  }

  Value sub(const Value& a, const Value& b) {
    Tensor<T> y = a.t() - b.t();
    return make(std::move(y), {a, b}, [this, a, b](const Tensor<T>& g) {
      if (auto* da = sink(a))
        for (std::size_t i = 0; i < g.numel(); ++i) (*da)[i] += g[i];
      if (auto* db = sink(b))
        for (std::size_t i = 0; i < g.numel(); ++i) (*db)[i] -= g[i];
    });
  }

  /// Elementwise a*x + b with scalar a, b.
  Value affine(const Value& x, T a, T b) {
    Tensor<T> y(x.t().shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a * x.t()[i] + b;
    return make(std::move(y), {x}, [this, x, a](const Tensor<T>& g) {
      if (auto* dx = sink(x))
        for (std::size_t i = 0; i < g.numel(); ++i) (*dx)[i] += a * g[i];
    });
  }

  Value scale(const Value& x, T a) { return affine(x, a, T(0)); }

  Value concat_channels(const std::vector<Value>& xs) {
    PS4_REQUIRE(!xs.empty(), "concat of nothing");
    const int h = xs[0].height(), w = xs[0].width();
    int c = 0;
    for (const auto& v : xs) {
      PS4_REQUIRE(v.height() == h && v.width() == w, "concat spatial mismatch");
      c += v.channels();
    }
    Tensor<T> y({c, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::size_t off = 0;
    for (const auto& v : xs) {
      std::copy(v.t().data(), v.t().data() + v.t().numel(), y.data() + off * plane);
      off += static_cast<std::size_t>(v.channels());
    }
    std::vector<Value> parents = xs;
    return make(std::move(y), xs, [this, parents, plane](const Tensor<T>& g) {
      std::size_t off2 = 0;
      for (const auto& v : parents) {
        const std::size_t n = v.t().numel();
        if (auto* dv = sink(v)) {
          const T* src = g.data() + off2 * plane;
          for (std::size_t i = 0; i < n; ++i) (*dv)[i] += src[i];
        }
        off2 += static_cast<std::size_t>(v.channels());
      }
    });
  }

  /// Channels [c0, c1) of x.
  Value slice_channels(const Value& x, int c0, int c1) {
    PS4_REQUIRE(0 <= c0 && c0 < c1 && c1 <= x.channels(), "bad channel slice");
    const int h = x.height(), w = x.width();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor<T> y({c1 - c0, h, w});
    std::copy(x.t().data() + c0 * plane, x.t().data() + c1 * plane, y.data());
    return make(std::move(y), {x}, [this, x, c0, plane](const Tensor<T>& g) {
      if (auto* dx = sink(x)) {
        T* dst = dx->data() + static_cast<std::size_t>(c0) * plane;
        for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
      }
    });
  }

  Value avgpool2(const Value& x) {
    Tensor<T> y = ops::avgpool2(x.t());
    return make(std::move(y), {x}, [this, x](const Tensor<T>& g) {
      if (auto* dx = sink(x)) ops::avgpool2_backward(g, *dx);
    });
  }

  Value upsample2(const Value& x) {
    Tensor<T> y = ops::upsample2_bilinear(x.t());
    return make(std::move(y), {x}, [this, x](const Tensor<T>& g) {
      if (auto* dx = sink(x)) ops::upsample2_bilinear_backward(g, *dx);
    });
  }

  Value warp(const Value& img, const Value& flow) {
    Tensor<T> y = ops::warp_bilinear(img.t(), flow.t());
    return make(std::move(y), {img, flow}, [this, img, flow](const Tensor<T>& g) {
      ops::warp_bilinear_backward(img.t(), flow.t(), g, sink(img), sink(flow));
    });
  }

  /// Per-pixel product of a 1-channel weight map with a C-channel image.
  Value mul_mask(const Value& mask, const Value& img) {
    PS4_REQUIRE(mask.channels() == 1, "mask must be single-channel");
    PS4_REQUIRE(mask.height() == img.height() && mask.width() == img.width(),
                "mask/image resolution mismatch");
    const int c = img.channels(), h = img.height(), w = img.width();
    Tensor<T> y({c, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i)
        y[ch * plane + i] = mask.t()[i] * img.t()[ch * plane + i];
    return make(std::move(y), {mask, img}, [this, mask, img, c, plane](const Tensor<T>& g) {
      if (auto* dm = sink(mask)) {
        for (int ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < plane; ++i)
            (*dm)[i] += g[ch * plane + i] * img.t()[ch * plane + i];
      }
      if (auto* di = sink(img)) {
        for (int ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < plane; ++i)
            (*di)[ch * plane + i] += g[ch * plane + i] * mask.t()[i];
      }
    });
  }

  /// Mean absolute difference, reduced to a {1} scalar. sign(0) = 0.
  Value mean_abs_diff(const Value& a, const Value& b) {
    PS4_REQUIRE(a.t().same_shape(b.t()), "mean_abs_diff shape mismatch");
    const std::size_t n = a.t().numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += std::abs(static_cast<double>(a.t()[i]) - static_cast<double>(b.t()[i]));
    Tensor<T> y({1});
    y[0] = static_cast<T>(acc / static_cast<double>(n));
    return make(std::move(y), {a, b}, [this, a, b, n](const Tensor<T>& g) {
      const T gn = g[0] / static_cast<T>(n);
      auto* da = sink(a);
      auto* db = sink(b);
      for (std::size_t i = 0; i < n; ++i) {
        const T d = a.t()[i] - b.t()[i];
        const T s = d > T(0) ? gn : (d < T(0) ? -gn : T(0));
        if (da) (*da)[i] += s;
        if (db) (*db)[i] -= s;
      }
    });
  }

  /// Root-mean-square difference, reduced to a {1} scalar; gradient defined
  /// as 0 at exact equality.
  Value rms_diff(const Value& a, const Value& b) {
    PS4_REQUIRE(a.t().same_shape(b.t()), "rms_diff shape mismatch");
    const std::size_t n = a.t().numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(a.t()[i]) - static_cast<double>(b.t()[i]);
      acc += d * d;
    }
    const double rms = std::sqrt(acc / static_cast<double>(n));
    Tensor<T> y({1});
    y[0] = static_cast<T>(rms);
    return make(std::move(y), {a, b}, [this, a, b, n, rms](const Tensor<T>& g) {
      if (rms == 0.0) return;
      const T f = g[0] / static_cast<T>(rms * static_cast<double>(n));
      auto* da = sink(a);
      auto* db = sink(b);
      for (std::size_t i = 0; i < n; ++i) {
        const T d = a.t()[i] - b.t()[i];
        if (da) (*da)[i] += f * d;
        if (db) (*db)[i] -= f * d;
      }
    });
  }

  /// Scalar dot-product reduction against a fixed weight tensor.
  Value weighted_sum(const Value& x, const Tensor<T>& weights) {
    PS4_REQUIRE(x.t().same_shape(weights), "weighted_sum shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.numel(); ++i)
      acc += static_cast<double>(x.t()[i]) * static_cast<double>(weights[i]);
    Tensor<T> y({1});
    y[0] = static_cast<T>(acc);
    auto wcopy = std::make_shared<Tensor<T>>(weights);
    return make(std::move(y), {x}, [this, x, wcopy](const Tensor<T>& g) {
      if (auto* dx = sink(x))
        for (std::size_t i = 0; i < wcopy->numel(); ++i) (*dx)[i] += g[0] * (*wcopy)[i];
    });
  }

 private:
  struct NodeRec {
    std::vector<int> shape;
    Tensor<T> grad;
    std::function<void(const Tensor<T>&)> back;
  };

  static bool any_tracked(const std::vector<Value>& parents) {
    for (const auto& p : parents)
      if (p.node >= 0) return true;
    return false;
  }

  Tensor<T>* sink(const Value& v) {
    return v.node >= 0 ? &nodes_[static_cast<std::size_t>(v.node)].grad : nullptr;
  }

  Value make(Tensor<T> out, const std::vector<Value>& parents,
             std::function<void(const Tensor<T>&)> back) {
    auto ptr = std::make_shared<Tensor<T>>(std::move(out));
    return make_shared(ptr, parents, std::move(back));
  }

  Value make_shared(std::shared_ptr<Tensor<T>> out, const std::vector<Value>& parents,
                    std::function<void(const Tensor<T>&)> back) {
    if (!recording_ || !any_tracked(parents)) return {std::move(out), -1};
    Value v{out, static_cast<int>(nodes_.size())};
    nodes_.push_back(NodeRec{});
    nodes_.back().shape = out->shape();
    nodes_.back().back = std::move(back);
    return v;
  }

  bool recording_;
  std::vector<NodeRec> nodes_;
};

}  // namespace ps4pro
