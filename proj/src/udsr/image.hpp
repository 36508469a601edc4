#pragma once

// Value types and raster operations for depth, RGB, normals and masks.
// Depth is stored in millimeters; value 0 marks a missing measurement (hole).

#include <string>
#include <vector>

#include "udsr/common.hpp"

namespace udsr {

constexpr double kDepthRangeMm = 5100.0;  // normalization constant, 5.1 m

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // row-major, millimeters, 0 = hole

  DepthMap() = default;
  DepthMap(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(size_t(w) * size_t(h), fill) {
    require(w >= 0 && h >= 0, "negative depth map size");
  }

  bool empty() const { return width == 0 || height == 0; }
  size_t size() const { return data.size(); }
  float at(int x, int y) const { return data[size_t(y) * width + x]; }
  float& at(int x, int y) { return data[size_t(y) * width + x]; }

  float max_defined() const;
  void validate() const;  // throws unless sizes agree and all values >= 0
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // planar, 3 * width * height, each in [0,1]

  RgbImage() = default;
  RgbImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(3 * size_t(w) * size_t(h), fill) {}

  bool empty() const { return width == 0 || height == 0; }
  float at(int c, int x, int y) const {
    return data[(size_t(c) * height + y) * width + x];
  }
  float& at(int c, int x, int y) {
    return data[(size_t(c) * height + y) * width + x];
  }
  void clamp01();
};

struct NormalMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;     // planar nx, ny, nz
  std::vector<uint8_t> valid;  // 1 = normal defined at pixel

  NormalMap() = default;
  NormalMap(int w, int h)
      : width(w),
        height(h),
        data(3 * size_t(w) * size_t(h), 0.0f),
        valid(size_t(w) * size_t(h), 0) {}

  float at(int c, int x, int y) const {
    return data[(size_t(c) * height + y) * width + x];
  }
  float& at(int c, int x, int y) {
    return data[(size_t(c) * height + y) * width + x];
  }
  bool is_valid(int x, int y) const { return valid[size_t(y) * width + x] != 0; }
};

struct HoleMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> defined;  // 1 where depth > 0

  HoleMask() = default;
  HoleMask(int w, int h) : width(w), height(h), defined(size_t(w) * size_t(h), 0) {}

  bool at(int x, int y) const { return defined[size_t(y) * width + x] != 0; }
  size_t popcount() const;
};

struct RgbdFrame {
  RgbImage rgb;
  DepthMap depth;
  std::string scene_id;
  std::string frame_id;
};

// Height-field normals from forward differences of depth normalized by 5100,
// unit pixel spacing: n = normalize(-dz/dx, -dz/dy, 1). A pixel is invalid if
// it or any stencil neighbor (x+step, y+step) is a hole or out of bounds.
NormalMap normals_from_depth(const DepthMap& d, int step = 1);

// Catmull-Rom bicubic (a = -0.5), edge-clamped. Output pixels whose 4x4
// support touches a hole are set to 0; negative lobes are clamped to 0.
DepthMap bicubic_upsample(const DepthMap& d, int factor);

// Keeps frames whose maximum defined depth does not exceed the threshold.
std::vector<RgbdFrame> depth_range_filter(std::vector<RgbdFrame> frames,
                                          double max_depth_mm = kDepthRangeMm);

enum class NormalizeDirection { ToUnit, ToMm };

// ToUnit divides by 5100 and clamps to [0,1]; ToMm multiplies by 5100.
// Holes (0) map to 0 either way.
DepthMap normalize_depth(const DepthMap& d, NormalizeDirection dir);

HoleMask hole_mask(const DepthMap& d);

// Plumbing used by the dataset pipeline.
DepthMap downsample_nearest(const DepthMap& d, int factor);
RgbImage downsample_rgb_area(const RgbImage& img, int factor);
std::vector<float> rgb_to_gray(const RgbImage& img);

}  // namespace udsr
