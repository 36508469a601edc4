#include "udsr/image.hpp"

#include <algorithm>
#include <cmath>

namespace udsr {

float DepthMap::max_defined() const {
  float m = 0.0f;
  for (float v : data) m = std::max(m, v);
  return m;
}

void DepthMap::validate() const {
  require(data.size() == size_t(width) * size_t(height),
          "depth map size does not match dimensions");
  for (float v : data)
    require(v >= 0.0f, "depth map contains a negative value");
}

void RgbImage::clamp01() {
  for (float& v : data) v = std::clamp(v, 0.0f, 1.0f);
}

size_t HoleMask::popcount() const {
  size_t n = 0;
  for (uint8_t v : defined) n += v;
  return n;
}

NormalMap normals_from_depth(const DepthMap& d, int step) {
  require(!d.empty(), "normals_from_depth: empty depth map");
  require(step >= 1, "normals_from_depth: step must be >= 1");
  NormalMap out(d.width, d.height);
  const double inv_range = 1.0 / kDepthRangeMm;
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      if (x + step >= d.width || y + step >= d.height) continue;
      float z0 = d.at(x, y);
      float zx = d.at(x + step, y);
      float zy = d.at(x, y + step);
      if (z0 <= 0.0f || zx <= 0.0f || zy <= 0.0f) continue;
      double gx = (double(zx) - z0) * inv_range / step;
      double gy = (double(zy) - z0) * inv_range / step;
      double inv_n = 1.0 / std::sqrt(gx * gx + gy * gy + 1.0);
      out.at(0, x, y) = float(-gx * inv_n);
      out.at(1, x, y) = float(-gy * inv_n);
      out.at(2, x, y) = float(inv_n);
      out.valid[size_t(y) * d.width + x] = 1;
    }
  }
  return out;
}

namespace {

// Catmull-Rom kernel, a = -0.5.
inline double cubic_weight(double t) {
  t = std::abs(t);
  if (t < 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
  if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
  return 0.0;
}

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

DepthMap bicubic_upsample(const DepthMap& d, int factor) {
  require(factor >= 1, "bicubic_upsample: factor must be >= 1");
  require(!d.empty(), "bicubic_upsample: empty depth map");
  if (factor == 1) return d;

  DepthMap out(d.width * factor, d.height * factor);
  for (int oy = 0; oy < out.height; ++oy) {
    double sy = (oy + 0.5) / factor - 0.5;
    int y0 = int(std::floor(sy));
    double fy = sy - y0;
    for (int ox = 0; ox < out.width; ++ox) {
      double sx = (ox + 0.5) / factor - 0.5;
      int x0 = int(std::floor(sx));
      double fx = sx - x0;

      double acc = 0.0;
      bool near_hole = false;
      for (int j = -1; j <= 2; ++j) {
        double wy = cubic_weight(j - fy);
        int yy = clampi(y0 + j, 0, d.height - 1);
        for (int i = -1; i <= 2; ++i) {
          double wx = cubic_weight(i - fx);
          int xx = clampi(x0 + i, 0, d.width - 1);
          float v = d.at(xx, yy);
          if (v <= 0.0f) near_hole = true;
          acc += wx * wy * v;
        }
      }
      out.at(ox, oy) = near_hole ? 0.0f : float(std::max(acc, 0.0));
    }
  }
  return out;
}

std::vector<RgbdFrame> depth_range_filter(std::vector<RgbdFrame> frames,
                                          double max_depth_mm) {
  require(max_depth_mm > 0.0, "depth_range_filter: threshold must be positive");
  std::vector<RgbdFrame> kept;
  kept.reserve(frames.size());
  for (auto& f : frames)
    if (f.depth.max_defined() <= max_depth_mm) kept.push_back(std::move(f));
  return kept;
}

DepthMap normalize_depth(const DepthMap& d, NormalizeDirection dir) {
  DepthMap out(d.width, d.height);
  if (dir == NormalizeDirection::ToUnit) {
    for (size_t i = 0; i < d.data.size(); ++i) {
      double v = double(d.data[i]) / kDepthRangeMm;
      out.data[i] = float(std::clamp(v, 0.0, 1.0));
    }
  } else {
    for (size_t i = 0; i < d.data.size(); ++i)
      out.data[i] = float(double(d.data[i]) * kDepthRangeMm);
  }
  return out;
}

HoleMask hole_mask(const DepthMap& d) {
  HoleMask m(d.width, d.height);
  for (size_t i = 0; i < d.data.size(); ++i)
    m.defined[i] = d.data[i] > 0.0f ? 1 : 0;
  return m;
}

DepthMap downsample_nearest(const DepthMap& d, int factor) {
  require(factor >= 1, "downsample_nearest: factor must be >= 1");
  require(d.width % factor == 0 && d.height % factor == 0,
          "downsample_nearest: dimensions not divisible by factor");
  DepthMap out(d.width / factor, d.height / factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      out.at(x, y) = d.at(x * factor, y * factor);
  return out;
}

RgbImage downsample_rgb_area(const RgbImage& img, int factor) {
  require(factor >= 1, "downsample_rgb_area: factor must be >= 1");
  require(img.width % factor == 0 && img.height % factor == 0,
          "downsample_rgb_area: dimensions not divisible by factor");
  RgbImage out(img.width / factor, img.height / factor);
  double inv = 1.0 / (factor * factor);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        double acc = 0.0;
        for (int j = 0; j < factor; ++j)
          for (int i = 0; i < factor; ++i)
            acc += img.at(c, x * factor + i, y * factor + j);
        out.at(c, x, y) = float(acc * inv);
      }
  return out;
}

std::vector<float> rgb_to_gray(const RgbImage& img) {
  std::vector<float> gray(size_t(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      gray[size_t(y) * img.width + x] =
          0.299f * img.at(0, x, y) + 0.587f * img.at(1, x, y) +
          0.114f * img.at(2, x, y);
  return gray;
}

}  // namespace udsr
