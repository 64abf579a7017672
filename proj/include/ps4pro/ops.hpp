#pragma once

// Dense compute kernels behind the autograd tape: conv / transposed conv via
// im2col + Eigen GEMM, pooling, bilinear resampling, bilinear backward
// warping, and the pointwise activations. Each forward kernel has a matching
// backward kernel; the tape pairs them up.

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

#include "ps4pro/tensor.hpp"

namespace ps4pro::ops {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline int deconv_out_dim(int in, int k, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + k;
}

// Unrolls zero-padded k*k patches of x into a {Ci*k*k, Ho*Wo} matrix.
template <typename T>
std::vector<T> im2col(const Tensor<T>& x, int k, int stride, int pad, int ho, int wo) {
  const int ci = x.channels(), h = x.height(), w = x.width();
  std::vector<T> cols(static_cast<std::size_t>(ci) * k * k * ho * wo, T(0));
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            dst += wo;
            continue;
          }
          const T* src = &x.at(c, iy, 0);
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            *dst++ = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
  return cols;
}

// Scatter-add inverse of im2col: accumulates columns back into an image.
template <typename T>
void col2im_add(const std::vector<T>& cols, int k, int stride, int pad, int ho, int wo,
                Tensor<T>& x) {
  const int ci = x.channels(), h = x.height(), w = x.width();
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < ho; ++oy, src += wo) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = &x.at(c, iy, 0);
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

/// Zero-padded 2-D convolution. x {Ci,H,W}, w {Co,Ci,k,k}, b {Co}.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int pad) {
  PS4_REQUIRE(w.ndim() == 4 && x.ndim() == 3, "conv2d expects {Co,Ci,k,k} and {Ci,H,W}");
  PS4_REQUIRE(w.dim(1) == x.dim(0), "conv2d channel mismatch");
  const int co = w.dim(0), ci = w.dim(1), k = w.dim(2);
  PS4_REQUIRE(w.dim(3) == k, "conv2d expects square kernels");
  const int ho = conv_out_dim(x.height(), k, stride, pad);
  const int wo = conv_out_dim(x.width(), k, stride, pad);
  PS4_REQUIRE(ho > 0 && wo > 0, "conv2d output would be empty");

  const auto cols = im2col(x, k, stride, pad, ho, wo);
  Tensor<T> y({co, ho, wo});
  ConstMatMap<T> wm(w.data(), co, static_cast<Eigen::Index>(ci) * k * k);
  ConstMatMap<T> cm(cols.data(), static_cast<Eigen::Index>(ci) * k * k,
                    static_cast<Eigen::Index>(ho) * wo);
  MatMap<T> ym(y.data(), co, static_cast<Eigen::Index>(ho) * wo);
  ym.noalias() = wm * cm;
  for (int c = 0; c < co; ++c) ym.row(c).array() += b[static_cast<std::size_t>(c)];
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int stride,
                     int pad, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const int co = w.dim(0), ci = w.dim(1), k = w.dim(2);
  const int ho = dy.height(), wo = dy.width();
  const Eigen::Index kk = static_cast<Eigen::Index>(ci) * k * k;
  const Eigen::Index npix = static_cast<Eigen::Index>(ho) * wo;
  ConstMatMap<T> dym(dy.data(), co, npix);
  if (dw) {
    const auto cols = im2col(x, k, stride, pad, ho, wo);
    ConstMatMap<T> cm(cols.data(), kk, npix);
    MatMap<T> dwm(dw->data(), co, kk);
    dwm.noalias() += dym * cm.transpose();
  }
  if (db) {
    for (int c = 0; c < co; ++c) (*db)[static_cast<std::size_t>(c)] += dym.row(c).sum();
  }
  if (dx) {
    std::vector<T> dcols(static_cast<std::size_t>(kk) * npix);
    MatMap<T> dcm(dcols.data(), kk, npix);
    ConstMatMap<T> wm(w.data(), co, kk);
    dcm.noalias() = wm.transpose() * dym;
    col2im_add(dcols, k, stride, pad, ho, wo, *dx);
  }
}

/// Transposed convolution (stride-s upsampling). x {Ci,H,W}, w {Ci,Co,k,k}.
template <typename T>
Tensor<T> deconv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                   int pad) {
  PS4_REQUIRE(w.ndim() == 4 && x.ndim() == 3, "deconv2d expects {Ci,Co,k,k} and {Ci,H,W}");
  PS4_REQUIRE(w.dim(0) == x.dim(0), "deconv2d channel mismatch");
  const int ci = w.dim(0), co = w.dim(1), k = w.dim(2);
  const int ho = deconv_out_dim(x.height(), k, stride, pad);
  const int wo = deconv_out_dim(x.width(), k, stride, pad);

  const Eigen::Index kk = static_cast<Eigen::Index>(co) * k * k;
  const Eigen::Index npix = static_cast<Eigen::Index>(x.height()) * x.width();
  std::vector<T> cols(static_cast<std::size_t>(kk) * npix);
  MatMap<T> cm(cols.data(), kk, npix);
  ConstMatMap<T> wm(w.data(), ci, kk);
  ConstMatMap<T> xm(x.data(), ci, npix);
  cm.noalias() = wm.transpose() * xm;

  Tensor<T> y({co, ho, wo});
  col2im_add(cols, k, stride, pad, x.height(), x.width(), y);
  for (int c = 0; c < co; ++c) {
    T* p = &y.at(c, 0, 0);
    const T bias = b[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < static_cast<std::size_t>(ho) * wo; ++i) p[i] += bias;
  }
  return y;
}

template <typename T>
void deconv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int stride,
                       int pad, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const int ci = w.dim(0), co = w.dim(1), k = w.dim(2);
  const int h = x.height(), wd = x.width();
  const Eigen::Index kk = static_cast<Eigen::Index>(co) * k * k;
  const Eigen::Index npix = static_cast<Eigen::Index>(h) * wd;
  const auto dycols = im2col(dy, k, stride, pad, h, wd);
  ConstMatMap<T> dycm(dycols.data(), kk, npix);
  if (dx) {
    ConstMatMap<T> wm(w.data(), ci, kk);
    MatMap<T> dxm(dx->data(), ci, npix);
    dxm.noalias() += wm * dycm;
  }
  if (dw) {
    ConstMatMap<T> xm(x.data(), ci, npix);
    MatMap<T> dwm(dw->data(), ci, kk);
    dwm.noalias() += xm * dycm.transpose();
  }
  if (db) {
    for (int c = 0; c < co; ++c) {
      const T* p = &dy.at(c, 0, 0);
      T s = T(0);
      for (std::size_t i = 0; i < static_cast<std::size_t>(dy.height()) * dy.width(); ++i)
        s += p[i];
      (*db)[static_cast<std::size_t>(c)] += s;
    }
  }
}

/// 2x2 average pooling, stride 2. Requires even H and W.
template <typename T>
Tensor<T> avgpool2(const Tensor<T>& x) {
  PS4_REQUIRE(x.height() % 2 == 0 && x.width() % 2 == 0, "avgpool2 requires even dimensions");
  const int c = x.channels(), ho = x.height() / 2, wo = x.width() / 2;
  Tensor<T> y({c, ho, wo});
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        y.at(ch, oy, ox) =
            (x.at(ch, 2 * oy, 2 * ox) + x.at(ch, 2 * oy, 2 * ox + 1) +
             x.at(ch, 2 * oy + 1, 2 * ox) + x.at(ch, 2 * oy + 1, 2 * ox + 1)) /
            T(4);
  return y;
}

template <typename T>
void avgpool2_backward(const Tensor<T>& dy, Tensor<T>& dx) {
  const int c = dy.channels(), ho = dy.height(), wo = dy.width();
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const T g = dy.at(ch, oy, ox) / T(4);
        dx.at(ch, 2 * oy, 2 * ox) += g;
        dx.at(ch, 2 * oy, 2 * ox + 1) += g;
        dx.at(ch, 2 * oy + 1, 2 * ox) += g;
        dx.at(ch, 2 * oy + 1, 2 * ox + 1) += g;
      }
}

// Bilinear taps for 2x upsampling under the half-pixel-centre convention:
// output i samples input at (i + 0.5)/2 - 0.5, clamped to the border.
struct ResampleTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

inline ResampleTap upsample2_tap(int i, int in_dim) {
  double s = (i + 0.5) / 2.0 - 0.5;
  if (s < 0) s = 0;
  if (s > in_dim - 1) s = in_dim - 1;
  const int i0 = static_cast<int>(std::floor(s));
  const int i1 = std::min(i0 + 1, in_dim - 1);
  return {i0, i1, s - i0};
}

/// Bilinear 2x spatial upsampling (values unchanged; flow scaling is the
/// caller's business).
template <typename T>
Tensor<T> upsample2_bilinear(const Tensor<T>& x) {
  const int c = x.channels(), h = x.height(), w = x.width();
  Tensor<T> y({c, 2 * h, 2 * w});
  std::vector<ResampleTap> xt(static_cast<std::size_t>(2 * w)), yt(static_cast<std::size_t>(2 * h));
  for (int i = 0; i < 2 * w; ++i) xt[static_cast<std::size_t>(i)] = upsample2_tap(i, w);
  for (int i = 0; i < 2 * h; ++i) yt[static_cast<std::size_t>(i)] = upsample2_tap(i, h);
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < 2 * h; ++oy) {
      const auto& ty = yt[static_cast<std::size_t>(oy)];
      for (int ox = 0; ox < 2 * w; ++ox) {
        const auto& tx = xt[static_cast<std::size_t>(ox)];
        const double top = (1 - tx.w1) * x.at(ch, ty.i0, tx.i0) + tx.w1 * x.at(ch, ty.i0, tx.i1);
        const double bot = (1 - tx.w1) * x.at(ch, ty.i1, tx.i0) + tx.w1 * x.at(ch, ty.i1, tx.i1);
        y.at(ch, oy, ox) = static_cast<T>((1 - ty.w1) * top + ty.w1 * bot);
      }
    }
  return y;
}

template <typename T>
void upsample2_bilinear_backward(const Tensor<T>& dy, Tensor<T>& dx) {
  const int c = dx.channels(), h = dx.height(), w = dx.width();
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < 2 * h; ++oy) {
      const auto ty = upsample2_tap(oy, h);
      for (int ox = 0; ox < 2 * w; ++ox) {
        const auto tx = upsample2_tap(ox, w);
        const double g = static_cast<double>(dy.at(ch, oy, ox));
        dx.at(ch, ty.i0, tx.i0) += static_cast<T>((1 - ty.w1) * (1 - tx.w1) * g);
        dx.at(ch, ty.i0, tx.i1) += static_cast<T>((1 - ty.w1) * tx.w1 * g);
        dx.at(ch, ty.i1, tx.i0) += static_cast<T>(ty.w1 * (1 - tx.w1) * g);
        dx.at(ch, ty.i1, tx.i1) += static_cast<T>(ty.w1 * tx.w1 * g);
      }
    }
}

/// Backward warp: out(p) = bilinear sample of img at p + flow(p).
/// flow {2,H,W} with channel 0 = dx (columns), channel 1 = dy (rows);
/// sample coordinates are clamped to the border.
template <typename T>
Tensor<T> warp_bilinear(const Tensor<T>& img, const Tensor<T>& flow) {
  PS4_REQUIRE(flow.channels() == 2, "flow must have 2 channels (dx,dy)");
  PS4_REQUIRE(img.height() == flow.height() && img.width() == flow.width(),
              "image/flow resolution mismatch");
  const int c = img.channels(), h = img.height(), w = img.width();
  Tensor<T> out({c, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      T sx = static_cast<T>(x) + flow.at(0, y, x);
      T sy = static_cast<T>(y) + flow.at(1, y, x);
      if (sx < T(0)) sx = T(0);
      if (sx > T(w - 1)) sx = T(w - 1);
      if (sy < T(0)) sy = T(0);
      if (sy > T(h - 1)) sy = T(h - 1);
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const T wx = sx - static_cast<T>(x0);
      const T wy = sy - static_cast<T>(y0);
      for (int ch = 0; ch < c; ++ch) {
        const T top = (T(1) - wx) * img.at(ch, y0, x0) + wx * img.at(ch, y0, x1);
        const T bot = (T(1) - wx) * img.at(ch, y1, x0) + wx * img.at(ch, y1, x1);
        out.at(ch, y, x) = (T(1) - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

/// Gradients of warp_bilinear w.r.t. the image (scatter) and the flow
/// (sampling-position derivative; zero where the clamp saturates).
template <typename T>
void warp_bilinear_backward(const Tensor<T>& img, const Tensor<T>& flow, const Tensor<T>& dy,
                            Tensor<T>* dimg, Tensor<T>* dflow) {
  const int c = img.channels(), h = img.height(), w = img.width();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T rx = static_cast<T>(x) + flow.at(0, y, x);
      const T ry = static_cast<T>(y) + flow.at(1, y, x);
      T sx = rx, sy = ry;
      if (sx < T(0)) sx = T(0);
      if (sx > T(w - 1)) sx = T(w - 1);
      if (sy < T(0)) sy = T(0);
      if (sy > T(h - 1)) sy = T(h - 1);
      const bool live_x = rx > T(0) && rx < T(w - 1);
      const bool live_y = ry > T(0) && ry < T(h - 1);
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const T wx = sx - static_cast<T>(x0);
      const T wy = sy - static_cast<T>(y0);
      T gx = T(0), gy = T(0);
      for (int ch = 0; ch < c; ++ch) {
        const T g = dy.at(ch, y, x);
        const T v00 = img.at(ch, y0, x0), v01 = img.at(ch, y0, x1);
        const T v10 = img.at(ch, y1, x0), v11 = img.at(ch, y1, x1);
        if (dimg) {
          dimg->at(ch, y0, x0) += g * (T(1) - wy) * (T(1) - wx);
          dimg->at(ch, y0, x1) += g * (T(1) - wy) * wx;
          dimg->at(ch, y1, x0) += g * wy * (T(1) - wx);
          dimg->at(ch, y1, x1) += g * wy * wx;
        }
        gx += g * ((T(1) - wy) * (v01 - v00) + wy * (v11 - v10));
        gy += g * ((T(1) - wx) * (v10 - v00) + wx * (v11 - v01));
      }
      if (dflow) {
        if (live_x) dflow->at(0, y, x) += gx;
        if (live_y) dflow->at(1, y, x) += gy;
      }
    }
  }
}

template <typename T>
T sigmoid_scalar(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = sigmoid_scalar(x[i]);
  return y;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] * sigmoid_scalar(x[i]);
  return y;
}

template <typename T>
void silu_backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx) {
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T s = sigmoid_scalar(x[i]);
    dx[i] += dy[i] * (s + x[i] * s * (T(1) - s));
  }
}

}  // namespace ps4pro::ops
