#include "udsr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

namespace udsr {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct PairSums {
  double sse_h = 0, sse_d = 0, sae_h = 0, sae_d = 0;
  long n_h = 0, n_d = 0;
};

PairSums depth_error_sums(const DepthMap& pred, const DepthMap& gt,
                          const DepthMap& input_lq) {
  require(pred.width == gt.width && pred.height == gt.height &&
              pred.width == input_lq.width && pred.height == input_lq.height,
          "masked_error_stats: dimension mismatch");
  PairSums s;
  for (size_t i = 0; i < gt.data.size(); ++i) {
    if (gt.data[i] <= 0.0f) continue;
    double e = double(pred.data[i]) - double(gt.data[i]);
    if (input_lq.data[i] > 0.0f) {
      s.sse_d += e * e;
      s.sae_d += std::abs(e);
      ++s.n_d;
    } else {
      s.sse_h += e * e;
      s.sae_h += std::abs(e);
      ++s.n_h;
    }
  }
  return s;
}

ErrorReport report_from_sums(double sse_h, double sse_d, double sae_h,
                             double sae_d, long n_h, long n_d, double sum_sq_v,
                             double sum_abs_v, long n_v) {
  long n = n_h + n_d;
  require(n > 0, "masked_error_stats: no pixels with defined ground truth");
  ErrorReport r;
  r.n_total = n;
  r.n_h = n_h;
  r.n_d = n_d;
  r.rmse = std::sqrt((sse_h + sse_d) / n);
  r.mae = (sae_h + sae_d) / n;
  r.rmse_h = n_h > 0 ? std::sqrt(sse_h / n_h) : 0.0;
  r.mae_h = n_h > 0 ? sae_h / n_h : 0.0;
  r.rmse_d = n_d > 0 ? std::sqrt(sse_d / n_d) : 0.0;
  r.mae_d = n_d > 0 ? sae_d / n_d : 0.0;
  if (n_v > 0) {
    r.mse_v = sum_sq_v / (3.0 * n_v);
    r.mae_v = sum_abs_v / (3.0 * n_v);
  }
  return r;
}

struct NormalDiffSums {
  double sum_sq = 0, sum_abs = 0;  // accumulated per axis, 3 terms per pixel
  long n = 0;
};

NormalDiffSums normal_diff_sums(const DepthMap& pred, const DepthMap& gt) {
  NormalMap n1 = normals_from_depth(pred);
  NormalMap n2 = normals_from_depth(gt);
  NormalDiffSums s;
  for (int y = 0; y < n1.height; ++y)
    for (int x = 0; x < n1.width; ++x) {
      if (!n1.is_valid(x, y) || !n2.is_valid(x, y)) continue;
      ++s.n;
      for (int c = 0; c < 3; ++c) {
        double d = double(n1.at(c, x, y)) - double(n2.at(c, x, y));
        s.sum_sq += d * d;
        s.sum_abs += std::abs(d);
      }
    }
  return s;
}

}  // namespace

std::string ErrorReport::csv_header() {
  return "rmse,rmse_h,rmse_d,mae,mae_h,mae_d,mse_v";
}

std::string ErrorReport::to_csv_row() const {
  return fmt_double(rmse) + "," + fmt_double(rmse_h) + "," + fmt_double(rmse_d) +
         "," + fmt_double(mae) + "," + fmt_double(mae_h) + "," +
         fmt_double(mae_d) + "," + fmt_double(mse_v);
}

std::string ErrorReport::to_json() const {
  std::string j = "{";
  auto field = [&](const char* k, double v, bool last = false) {
    j += "\"" + std::string(k) + "\": " + fmt_double(v) + (last ? "" : ", ");
  };
  field("rmse", rmse);
  field("rmse_h", rmse_h);
  field("rmse_d", rmse_d);
  field("mae", mae);
  field("mae_h", mae_h);
  field("mae_d", mae_d);
  field("mse_v", mse_v);
  field("mae_v", mae_v);
  j += "\"n_total\": " + std::to_string(n_total) + ", ";
  j += "\"n_h\": " + std::to_string(n_h) + ", ";
  j += "\"n_d\": " + std::to_string(n_d) + "}";
  return j;
}

ErrorReport masked_error_stats(const DepthMap& pred, const DepthMap& gt,
                               const DepthMap& input_lq) {
  PairSums s = depth_error_sums(pred, gt, input_lq);
  require(s.n_h + s.n_d > 0, "masked_error_stats: no pixels with defined ground truth");
  NormalDiffSums v = normal_diff_sums(pred, gt);
  return report_from_sums(s.sse_h, s.sse_d, s.sae_h, s.sae_d, s.n_h, s.n_d,
                          v.sum_sq, v.sum_abs, v.n);
}

double perceptual_metric(const DepthMap& pred, const DepthMap& gt, int p) {
  require(pred.width == gt.width && pred.height == gt.height,
          "perceptual_metric: dimension mismatch");
  require(p == 1 || p == 2, "perceptual_metric: p must be 1 or 2");
  NormalDiffSums s = normal_diff_sums(pred, gt);
  require(s.n > 0, "perceptual_metric: no jointly valid normal pixels");
  return (p == 2 ? s.sum_sq : s.sum_abs) / (3.0 * s.n);
}

double ssim(const DepthMap& a, const DepthMap& b) {
  require(a.width == b.width && a.height == b.height, "ssim: dimension mismatch");
  constexpr int kWin = 11;
  require(a.width >= kWin && a.height >= kWin,
          "ssim: image smaller than the 11x11 window");

  // Normalized 11x11 Gaussian, sigma 1.5.
  double kernel[kWin];
  double ksum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    double d = i - (kWin - 1) / 2.0;
    kernel[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  constexpr double kRange = kDepthRangeMm;
  const double c1 = (0.01 * kRange) * (0.01 * kRange);
  const double c2 = (0.03 * kRange) * (0.03 * kRange);

  double total = 0.0;
  long count = 0;
  for (int y = 0; y + kWin <= a.height; ++y) {
    for (int x = 0; x + kWin <= a.width; ++x) {
      double mu1 = 0, mu2 = 0, s11 = 0, s22 = 0, s12 = 0;
      for (int j = 0; j < kWin; ++j)
        for (int i = 0; i < kWin; ++i) {
          double w = kernel[i] * kernel[j];
          double v1 = a.at(x + i, y + j);
          double v2 = b.at(x + i, y + j);
          mu1 += w * v1;
          mu2 += w * v2;
          s11 += w * v1 * v1;
          s22 += w * v2 * v2;
          s12 += w * v1 * v2;
        }
      double var1 = s11 - mu1 * mu1;
      double var2 = s22 - mu2 * mu2;
      double cov = s12 - mu1 * mu2;
      double num = (2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2);
      double den = (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2);
      total += num / den;
      ++count;
    }
  }
  return total / count;
}

void MetricAccumulator::add(const DepthMap& pred, const DepthMap& gt,
                            const DepthMap& input_lq) {
  PairSums s = depth_error_sums(pred, gt, input_lq);
  sse_h_ += s.sse_h;
  sse_d_ += s.sse_d;
  sae_h_ += s.sae_h;
  sae_d_ += s.sae_d;
  n_h_ += s.n_h;
  n_d_ += s.n_d;
  NormalDiffSums v = normal_diff_sums(pred, gt);
  sum_sq_v_ += v.sum_sq;
  sum_abs_v_ += v.sum_abs;
  n_v_ += v.n;
}

ErrorReport MetricAccumulator::finalize() const {
  return report_from_sums(sse_h_, sse_d_, sae_h_, sae_d_, n_h_, n_d_, sum_sq_v_,
                          sum_abs_v_, n_v_);
}

}  // namespace udsr
