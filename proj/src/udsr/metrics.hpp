#pragma once

// Evaluation metrics: masked RMSE/MAE with hole/defined partitions,
// perceptual surface metrics over normal maps, and windowed SSIM.

#include <string>

#include "udsr/image.hpp"

namespace udsr {

struct ErrorReport {
  double rmse = 0, rmse_h = 0, rmse_d = 0;  // millimeters
  double mae = 0, mae_h = 0, mae_d = 0;     // millimeters
  double mse_v = 0, mae_v = 0;              // dimensionless
  long n_total = 0, n_h = 0, n_d = 0;       // evaluation pixel counts

  std::string to_csv_row() const;  // rmse,rmse_h,rmse_d,mae,mae_h,mae_d,mse_v
  std::string to_json() const;
  static std::string csv_header();
};

// Evaluation pixels are those with defined ground truth (gt > 0). The _d
// variants restrict to pixels where the low-quality input is defined, the _h
// variants to pixels where it is a hole. An empty partition reports 0.
ErrorReport masked_error_stats(const DepthMap& pred, const DepthMap& gt,
                               const DepthMap& input_lq);

// (1/3) sum_i mean |(N1 - N2) . e_i|^p over pixels valid in both normal
// maps, e_i the canonical axes. p = 2 is MSE_v, p = 1 is MAE_v.
double perceptual_metric(const DepthMap& pred, const DepthMap& gt, int p);

// Mean SSIM, 11x11 Gaussian window sigma 1.5, K1 = 0.01, K2 = 0.03,
// dynamic range 5100 mm.
double ssim(const DepthMap& a, const DepthMap& b);

// Streaming evaluation over a frame set: merges raw sums so that partition
// identities hold for the aggregate exactly as for a single pair.
class MetricAccumulator {
public:
  void add(const DepthMap& pred, const DepthMap& gt, const DepthMap& input_lq);
  ErrorReport finalize() const;  // throws if no evaluation pixels were seen

private:
  double sse_h_ = 0, sse_d_ = 0, sae_h_ = 0, sae_d_ = 0;
  long n_h_ = 0, n_d_ = 0;
  double sum_sq_v_ = 0, sum_abs_v_ = 0;  // per-axis projected normal diffs
  long n_v_ = 0;                         // jointly valid normal pixels
};

}  // namespace udsr
