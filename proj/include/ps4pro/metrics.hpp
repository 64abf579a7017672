#pragma once

// Image quality metrics (PSNR, SSIM, IE) and the evaluation harness.
// PSNR/IE use MAX = 1.0 on the internal pixel range; IE is reported on the
// 0-255 scale (255*sqrt(MSE)), the Middlebury convention. PSNR and SSIM are
// computed on RGB jointly.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ps4pro/data.hpp"
#include "ps4pro/flownet.hpp"
#include "ps4pro/image.hpp"

namespace ps4pro {

namespace detail {

inline double mse(const Tensor<float>& a, const Tensor<float>& b) {
  PS4_REQUIRE(a.same_shape(b), "metric input shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

}  // namespace detail

/// 10*log10(1/MSE); +infinity for identical inputs.
inline double psnr(const Frame& predicted, const Frame& target) {
  const double m = detail::mse(predicted.pixels, target.pixels);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

/// Root-mean-square difference on the 0-255 scale.
inline double interpolation_error(const Frame& predicted, const Frame& target) {
  return 255.0 * std::sqrt(detail::mse(predicted.pixels, target.pixels));
}

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
/// dynamic range 1.0, valid-region windowing, per channel then averaged.
inline double ssim(const Frame& predicted, const Frame& target) {
  const Tensor<float>& a = predicted.pixels;
  const Tensor<float>& b = target.pixels;
  PS4_REQUIRE(a.same_shape(b), "ssim input shape mismatch");
  const int h = a.height(), w = a.width(), win = 11, half = win / 2;
  PS4_REQUIRE(h >= win && w >= win, "ssim needs min side >= 11");

  double g[11];
  double gsum = 0;
  for (int i = 0; i < win; ++i) {
    const double d = i - half;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;

  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    double acc = 0.0;
    std::size_t count = 0;
    for (int y = half; y < h - half; ++y) {
      for (int x = half; x < w - half; ++x) {
        double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        for (int wy = 0; wy < win; ++wy) {
          for (int wx = 0; wx < win; ++wx) {
            const double wgt = g[wy] * g[wx];
            const double va = a.at(ch, y + wy - half, x + wx - half);
            const double vb = b.at(ch, y + wy - half, x + wx - half);
            mu_a += wgt * va;
            mu_b += wgt * vb;
            aa += wgt * va * va;
            bb += wgt * vb * vb;
            ab += wgt * va * vb;
          }
        }
        const double var_a = aa - mu_a * mu_a;
        const double var_b = bb - mu_b * mu_b;
        const double cov = ab - mu_a * mu_b;
        acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        ++count;
      }
    }
    total += acc / static_cast<double>(count);
  }
  return total / 3.0;
}

// ---- evaluation harness ----

struct EvalRow {
  std::string id;
  double t = 0.5;
  double psnr = 0, ssim = 0, ie = 0;
};

struct EvalReport {
  std::string dataset;
  std::string checkpoint;
  std::vector<EvalRow> rows;
  std::size_t skipped = 0;          // unreadable samples
  std::size_t psnr_inf_count = 0;   // excluded from the PSNR mean
  double psnr_mean = 0, ssim_mean = 0, ie_mean = 0;

  void finalize() {
    double p = 0, s = 0, e = 0;
    std::size_t pn = 0;
    psnr_inf_count = 0;
    for (const auto& r : rows) {
      if (std::isinf(r.psnr)) {
        ++psnr_inf_count;
      } else {
        p += r.psnr;
        ++pn;
      }
      s += r.ssim;
      e += r.ie;
    }
    psnr_mean = pn ? p / static_cast<double>(pn) : std::numeric_limits<double>::infinity();
    ssim_mean = rows.empty() ? 0 : s / static_cast<double>(rows.size());
    ie_mean = rows.empty() ? 0 : e / static_cast<double>(rows.size());
  }
};

/// Interpolates every sample of the dataset at its own t and scores it with
/// all metrics. Unreadable samples are skipped and logged, not fatal.
inline EvalReport evaluate(const ModelWeights<float>& weights, const SampleSource& source,
                           const std::string& dataset_id, const std::string& checkpoint_id) {
  PS4_REQUIRE(source.size() > 0, "cannot evaluate an empty dataset");
  EvalReport report;
  report.dataset = dataset_id;
  report.checkpoint = checkpoint_id;
  Rng rng(0);  // fixed-timestep sources ignore it
  for (std::size_t i = 0; i < source.size(); ++i) {
    TripletSample s;
    try {
      s = source.sample(i, rng);
    } catch (const std::exception& e) {
      std::cerr << "[eval] skipping sample " << i << ": " << e.what() << "\n";
      ++report.skipped;
      continue;
    }
    const Frame pred = interpolate(weights, s.frame0, s.frame1, s.t);
    EvalRow row;
    row.id = source.id(i);
    row.t = s.t;
    row.psnr = psnr(pred, s.frame_t);
    row.ssim = ssim(pred, s.frame_t);
    row.ie = interpolation_error(pred, s.frame_t);
    report.rows.push_back(std::move(row));
  }
  report.finalize();
  return report;
}

/// Per-sample CSV next to a JSON summary.
inline void write_report(const EvalReport& report, const std::string& csv_path,
                         const std::string& json_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write report CSV: " + csv_path);
  csv << "id,t,psnr,ssim,ie\n";
  csv.precision(10);
  for (const auto& r : report.rows)
    csv << r.id << "," << r.t << "," << r.psnr << "," << r.ssim << "," << r.ie << "\n";

  nlohmann::ordered_json j{{"dataset", report.dataset},
                           {"checkpoint", report.checkpoint},
                           {"n", report.rows.size()},
                           {"skipped", report.skipped},
                           {"psnr_inf_count", report.psnr_inf_count},
                           {"psnr_mean", report.psnr_mean},
                           {"ssim_mean", report.ssim_mean},
                           {"ie_mean", report.ie_mean}};
  std::ofstream js(json_path);
  if (!js) throw IoError("cannot write report JSON: " + json_path);
  js << j.dump(2) << "\n";
}

}  // namespace ps4pro
