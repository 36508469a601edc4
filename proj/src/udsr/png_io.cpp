#include "udsr/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace udsr {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

void read_png(const std::string& path, int expected_color, int expected_depth,
              int channels, std::vector<uint8_t>& bytes, int& width,
              int& height) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  require(f != nullptr, "cannot open PNG for reading: " + path);

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(r.png != nullptr, "png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  require(r.info != nullptr, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) throw Error("failed to decode PNG: " + path);

  png_init_io(r.png, f.get());
  png_read_info(r.png, r.info);

  width = int(png_get_image_width(r.png, r.info));
  height = int(png_get_image_height(r.png, r.info));
  int color = png_get_color_type(r.png, r.info);
  int depth = png_get_bit_depth(r.png, r.info);
  require(color == expected_color && depth == expected_depth,
          "unexpected PNG format in " + path + " (color type " +
              std::to_string(color) + ", bit depth " + std::to_string(depth) + ")");

  size_t row_bytes = size_t(width) * channels * (expected_depth / 8);
  bytes.resize(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + row_bytes * y;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
}

void write_png(const std::string& path, int color, int bit_depth, int channels,
               int width, int height, const std::vector<uint8_t>& bytes) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  require(f != nullptr, "cannot open PNG for writing: " + path);

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(w.png != nullptr, "png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  require(w.info != nullptr, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) throw Error("failed to encode PNG: " + path);

  png_init_io(w.png, f.get());
  png_set_IHDR(w.png, w.info, width, height, bit_depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);

  size_t row_bytes = size_t(width) * channels * (bit_depth / 8);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(bytes.data() + row_bytes * y);
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

}  // namespace

DepthMap load_depth_png(const std::string& path) {
  std::vector<uint8_t> bytes;
  int w = 0, h = 0;
  read_png(path, PNG_COLOR_TYPE_GRAY, 16, 1, bytes, w, h);
  DepthMap d(w, h);
  // PNG stores 16-bit samples big-endian.
  for (size_t i = 0; i < d.size(); ++i)
    d.data[i] = float(uint16_t(bytes[2 * i]) << 8 | bytes[2 * i + 1]);
  return d;
}

void save_depth_png(const DepthMap& d, const std::string& path) {
  require(!d.empty(), "save_depth_png: empty depth map");
  std::vector<uint8_t> bytes(d.size() * 2);
  for (size_t i = 0; i < d.size(); ++i) {
    double v = std::round(double(d.data[i]));
    uint16_t q = uint16_t(std::clamp(v, 0.0, 65535.0));
    bytes[2 * i] = uint8_t(q >> 8);
    bytes[2 * i + 1] = uint8_t(q & 0xff);
  }
  write_png(path, PNG_COLOR_TYPE_GRAY, 16, 1, d.width, d.height, bytes);
}

RgbImage load_rgb_png(const std::string& path) {
  std::vector<uint8_t> bytes;
  int w = 0, h = 0;
  read_png(path, PNG_COLOR_TYPE_RGB, 8, 3, bytes, w, h);
  RgbImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, x, y) = bytes[(size_t(y) * w + x) * 3 + c] / 255.0f;
  return img;
}

void save_rgb_png(const RgbImage& img, const std::string& path) {
  require(!img.empty(), "save_rgb_png: empty image");
  std::vector<uint8_t> bytes(size_t(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = std::round(std::clamp(double(img.at(c, x, y)), 0.0, 1.0) * 255.0);
        bytes[(size_t(y) * img.width + x) * 3 + c] = uint8_t(v);
      }
  write_png(path, PNG_COLOR_TYPE_RGB, 8, 3, img.width, img.height, bytes);
}

}  // namespace udsr
