#pragma once

// PNG I/O. Depth maps are 16-bit grayscale PNGs, value = millimeters,
// 0 = hole. RGB images are 8-bit RGB PNGs. Both round-trip exactly.

#include <string>

#include "udsr/image.hpp"

namespace udsr {

DepthMap load_depth_png(const std::string& path);
void save_depth_png(const DepthMap& d, const std::string& path);

RgbImage load_rgb_png(const std::string& path);
void save_rgb_png(const RgbImage& img, const std::string& path);

}  // namespace udsr
