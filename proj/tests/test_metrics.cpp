#include <doctest.h>

#include <array>
#include <cmath>

#include "udsr/common.hpp"
#include "udsr/metrics.hpp"

using namespace udsr;

namespace {

DepthMap random_depth(int w, int h, Rng& rng, double hole_prob = 0.0) {
  DepthMap d(w, h);
  for (auto& v : d.data)
    v = rng.bernoulli(hole_prob) ? 0.0f : float(rng.uniform(200.0, 5000.0));
  return d;
}

// Naive per-pixel loop, written independently of the implementation.
struct NaiveReport {
  double rmse = 0, rmse_h = 0, rmse_d = 0, mae = 0, mae_h = 0, mae_d = 0;
  long n = 0, n_h = 0, n_d = 0;
};

NaiveReport naive_stats(const DepthMap& pred, const DepthMap& gt,
                        const DepthMap& lq) {
  NaiveReport r;
  double se = 0, se_h = 0, se_d = 0, ae = 0, ae_h = 0, ae_d = 0;
  for (int y = 0; y < gt.height; ++y)
    for (int x = 0; x < gt.width; ++x) {
      if (gt.at(x, y) <= 0) continue;
      double e = double(pred.at(x, y)) - gt.at(x, y);
      ++r.n;
      se += e * e;
      ae += std::abs(e);
      if (lq.at(x, y) > 0) {
        ++r.n_d;
        se_d += e * e;
        ae_d += std::abs(e);
      } else {
        ++r.n_h;
        se_h += e * e;
        ae_h += std::abs(e);
      }
    }
  r.rmse = std::sqrt(se / r.n);
  r.mae = ae / r.n;
  r.rmse_h = r.n_h ? std::sqrt(se_h / r.n_h) : 0;
  r.mae_h = r.n_h ? ae_h / r.n_h : 0;
  r.rmse_d = r.n_d ? std::sqrt(se_d / r.n_d) : 0;
  r.mae_d = r.n_d ? ae_d / r.n_d : 0;
  return r;
}

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("masked_error_stats: identical maps give all-zero errors") {
  Rng rng(1);
  DepthMap gt = random_depth(8, 8, rng, 0.1);
  ErrorReport r = masked_error_stats(gt, gt, gt);
  CHECK(r.rmse == 0.0);
  CHECK(r.mae == 0.0);
  CHECK(r.mse_v == 0.0);
  CHECK(r.mae_v == 0.0);
}

TEST_CASE("masked_error_stats: worked 2x2 example") {
  DepthMap gt(2, 2), lq(2, 2), pred(2, 2);
  gt.data = {1000, 1000, 2000, 0};
  lq.data = {1000, 0, 2000, 500};
  pred.data = {1100, 900, 2000, 9999};
  ErrorReport r = masked_error_stats(pred, gt, lq);
  CHECK(r.n_total == 3);
  CHECK(r.n_d == 2);
  CHECK(r.n_h == 1);
  CHECK(r.mae == doctest::Approx((100.0 + 100.0 + 0.0) / 3));
  CHECK(r.mae_d == doctest::Approx(50.0));
  CHECK(r.mae_h == doctest::Approx(100.0));
  CHECK(r.rmse == doctest::Approx(std::sqrt((100.0 * 100 + 100.0 * 100) / 3)));
}

TEST_CASE("masked_error_stats: error cases") {
  DepthMap a(4, 4, 100.0f), small(3, 3, 100.0f), holes(4, 4, 0.0f);
  CHECK_THROWS_AS(masked_error_stats(a, small, a), Error);
  CHECK_THROWS_AS(masked_error_stats(a, holes, a), Error);
}

TEST_CASE("masked_error_stats matches the naive oracle on random triples") {
  Rng rng(2024);
  for (int t = 0; t < 100; ++t) {
    DepthMap gt = random_depth(8, 8, rng, 0.2);
    if (hole_mask(gt).popcount() == 0) gt.at(0, 0) = 1000.0f;
    DepthMap lq = random_depth(8, 8, rng, 0.3);
    DepthMap pred = random_depth(8, 8, rng, 0.05);
    bool any = false;
    for (float v : gt.data) any = any || v > 0;
    if (!any) continue;
    ErrorReport r = masked_error_stats(pred, gt, lq);
    NaiveReport o = naive_stats(pred, gt, lq);
    CHECK(r.n_total == o.n);
    CHECK(r.n_h == o.n_h);
    CHECK(r.n_d == o.n_d);
    CHECK(close_rel(r.rmse, o.rmse, 1e-9));
    CHECK(close_rel(r.mae, o.mae, 1e-9));
    CHECK(close_rel(r.rmse_h, o.rmse_h, 1e-9));
    CHECK(close_rel(r.mae_h, o.mae_h, 1e-9));
    CHECK(close_rel(r.rmse_d, o.rmse_d, 1e-9));
    CHECK(close_rel(r.mae_d, o.mae_d, 1e-9));
    // partition identities
    double lhs = double(r.n_total) * r.rmse * r.rmse;
    double rhs = double(r.n_h) * r.rmse_h * r.rmse_h + double(r.n_d) * r.rmse_d * r.rmse_d;
    CHECK(close_rel(lhs, rhs, 1e-9));
    double lhs_m = double(r.n_total) * r.mae;
    double rhs_m = double(r.n_h) * r.mae_h + double(r.n_d) * r.mae_d;
    CHECK(close_rel(lhs_m, rhs_m, 1e-9));
  }
}

TEST_CASE("perceptual_metric: identity, symmetry and the orthonormal identity") {
  Rng rng(5150);
  DepthMap a = random_depth(9, 8, rng, 0.05);
  CHECK(perceptual_metric(a, a, 1) == 0.0);
  CHECK(perceptual_metric(a, a, 2) == 0.0);

  for (int t = 0; t < 25; ++t) {
    DepthMap x = random_depth(9, 8, rng, 0.1);
    DepthMap y = random_depth(9, 8, rng, 0.1);
    double m2 = perceptual_metric(x, y, 2);
    CHECK(m2 == perceptual_metric(y, x, 2));
    CHECK(perceptual_metric(x, y, 1) == perceptual_metric(y, x, 1));

    // Oracle: (1/3) mean ||n1-n2||^2 over jointly valid pixels.
    NormalMap n1 = normals_from_depth(x), n2 = normals_from_depth(y);
    double acc = 0;
    long n = 0;
    for (int yy = 0; yy < x.height; ++yy)
      for (int xx = 0; xx < x.width; ++xx) {
        if (!n1.is_valid(xx, yy) || !n2.is_valid(xx, yy)) continue;
        ++n;
        for (int c = 0; c < 3; ++c) {
          double d = double(n1.at(c, xx, yy)) - n2.at(c, xx, yy);
          acc += d * d;
        }
      }
    REQUIRE(n > 0);
    CHECK(std::abs(m2 - acc / (3.0 * n)) < 1e-12);
  }
}

TEST_CASE("perceptual_metric: closed form for two constant-slope ramps") {
  const double s1 = 60.0, s2 = -35.0;  // mm per pixel along x
  DepthMap a(10, 10), b(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      a.at(x, y) = float(2500.0 + s1 * x);
      b.at(x, y) = float(2500.0 + s2 * x);
    }
  auto plane_normal = [](double slope) {
    double g = slope / kDepthRangeMm;
    double inv = 1.0 / std::sqrt(g * g + 1.0);
    return std::array<double, 3>{-g * inv, 0.0, inv};
  };
  auto n1 = plane_normal(s1), n2 = plane_normal(s2);
  double expect = 0;
  for (int c = 0; c < 3; ++c) expect += (n1[c] - n2[c]) * (n1[c] - n2[c]);
  expect /= 3.0;
  CHECK(perceptual_metric(a, b, 2) == doctest::Approx(expect).epsilon(1e-9));

  CHECK_THROWS_AS(perceptual_metric(DepthMap(4, 4, 0.0f), DepthMap(4, 4, 0.0f), 2),
                  Error);
}

TEST_CASE("ssim: self-similarity is exactly 1") {
  Rng rng(9);
  DepthMap a = random_depth(16, 12, rng);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-9);
}

TEST_CASE("ssim: constant vs constant+offset matches the luminance term") {
  const double mu1 = 2000.0, off = 400.0;
  DepthMap a(12, 12, float(mu1)), b(12, 12, float(mu1 + off));
  const double c1 = (0.01 * kDepthRangeMm) * (0.01 * kDepthRangeMm);
  double mu2 = mu1 + off;
  double expect = (2 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1);
  CHECK(std::abs(ssim(a, b) - expect) < 1e-9);
}

TEST_CASE("ssim: symmetry, window limits and (=1 iff identical)") {
  Rng rng(31);
  DepthMap a = random_depth(14, 13, rng);
  DepthMap b = random_depth(14, 13, rng);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(ssim(a, b) < 1.0);
  CHECK_THROWS_AS(ssim(DepthMap(10, 10, 1.0f), DepthMap(10, 10, 1.0f)), Error);
  CHECK_THROWS_AS(ssim(a, DepthMap(14, 14, 1.0f)), Error);
}

TEST_CASE("ssim: heavy noise drops similarity below 0.8, oracle-checked") {
  Rng rng(42);
  DepthMap a(24, 24);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) a.at(x, y) = float(1500.0 + 40.0 * x + 25.0 * y);
  DepthMap b = a;
  for (auto& v : b.data)
    v = float(std::max(0.0, v + rng.normal(0.0, 0.3 * kDepthRangeMm)));
  double s = ssim(a, b);
  CHECK(s < 0.8);

  // Direct windowed-formula oracle with explicit weighted moments.
  double kernel[11], ksum = 0;
  for (int i = 0; i < 11; ++i) {
    double d = i - 5.0;
    kernel[i] = std::exp(-d * d / 4.5);
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;
  const double c1 = std::pow(0.01 * kDepthRangeMm, 2);
  const double c2 = std::pow(0.03 * kDepthRangeMm, 2);
  double total = 0;
  long count = 0;
  for (int y0 = 0; y0 + 11 <= 24; ++y0)
    for (int x0 = 0; x0 + 11 <= 24; ++x0) {
      double m1 = 0, m2 = 0;
      for (int j = 0; j < 11; ++j)
        for (int i = 0; i < 11; ++i) {
          double w = kernel[i] * kernel[j];
          m1 += w * a.at(x0 + i, y0 + j);
          m2 += w * b.at(x0 + i, y0 + j);
        }
      double v1 = 0, v2 = 0, cov = 0;
      for (int j = 0; j < 11; ++j)
        for (int i = 0; i < 11; ++i) {
          double w = kernel[i] * kernel[j];
          double d1 = a.at(x0 + i, y0 + j) - m1;
          double d2 = b.at(x0 + i, y0 + j) - m2;
          v1 += w * d1 * d1;
          v2 += w * d2 * d2;
          cov += w * d1 * d2;
        }
      total += ((2 * m1 * m2 + c1) * (2 * cov + c2)) /
               ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2));
      ++count;
    }
  CHECK(std::abs(s - total / count) < 1e-6);
}

TEST_CASE("ErrorReport CSV and JSON serialization") {
  ErrorReport r;
  r.rmse = 1.5;
  r.rmse_h = 2.5;
  r.rmse_d = 0.5;
  r.mae = 1.0;
  r.mae_h = 2.0;
  r.mae_d = 0.25;
  r.mse_v = 0.125;
  r.mae_v = 0.0625;
  r.n_total = 10;
  r.n_h = 4;
  r.n_d = 6;
  CHECK(ErrorReport::csv_header() == "rmse,rmse_h,rmse_d,mae,mae_h,mae_d,mse_v");
  CHECK(r.to_csv_row() == "1.5,2.5,0.5,1,2,0.25,0.125");
  std::string j = r.to_json();
  CHECK(j.find("\"mse_v\": 0.125") != std::string::npos);
  CHECK(j.find("\"mae_v\": 0.0625") != std::string::npos);
  CHECK(j.find("\"n_h\": 4") != std::string::npos);
}

TEST_CASE("MetricAccumulator merges pairs consistently") {
  Rng rng(8);
  DepthMap gt1 = random_depth(8, 8, rng, 0.1), lq1 = random_depth(8, 8, rng, 0.2),
           p1 = random_depth(8, 8, rng);
  DepthMap gt2 = random_depth(8, 8, rng, 0.1), lq2 = random_depth(8, 8, rng, 0.2),
           p2 = random_depth(8, 8, rng);
  MetricAccumulator acc;
  acc.add(p1, gt1, lq1);
  acc.add(p2, gt2, lq2);
  ErrorReport r = acc.finalize();
  ErrorReport r1 = masked_error_stats(p1, gt1, lq1);
  ErrorReport r2 = masked_error_stats(p2, gt2, lq2);
  CHECK(r.n_total == r1.n_total + r2.n_total);
  double pooled_sae = r1.mae * r1.n_total + r2.mae * r2.n_total;
  CHECK(r.mae == doctest::Approx(pooled_sae / r.n_total).epsilon(1e-12));
}
