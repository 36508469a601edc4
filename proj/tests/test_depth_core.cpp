#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "udsr/common.hpp"
#include "udsr/image.hpp"
#include "udsr/png_io.hpp"

using namespace udsr;

namespace {

DepthMap random_depth(int w, int h, Rng& rng, double hole_prob = 0.0) {
  DepthMap d(w, h);
  for (auto& v : d.data)
    v = rng.bernoulli(hole_prob) ? 0.0f : float(rng.uniform(300.0, 5000.0));
  return d;
}

// Independent stencil walk: valid iff the pixel and both forward neighbors
// are in bounds and nonzero.
int oracle_invalid_count(const DepthMap& d, int step) {
  int invalid = 0;
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      bool ok = x + step < d.width && y + step < d.height && d.at(x, y) > 0 &&
                d.at(x + step, y) > 0 && d.at(x, y + step) > 0;
      if (!ok) ++invalid;
    }
  return invalid;
}

}  // namespace

TEST_CASE("normals: constant plane gives (0,0,1) everywhere valid") {
  DepthMap d(6, 5, 2000.0f);
  NormalMap n = normals_from_depth(d);
  int valid = 0;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x)
      if (n.is_valid(x, y)) {
        ++valid;
        CHECK(n.at(0, x, y) == doctest::Approx(0.0));
        CHECK(n.at(1, x, y) == doctest::Approx(0.0));
        CHECK(n.at(2, x, y) == doctest::Approx(1.0));
      }
  CHECK(valid == 5 * 4);  // far edges are invalid
}

TEST_CASE("normals: x-ramp gives identical normals with nx < 0, ny = 0") {
  DepthMap d(8, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) d.at(x, y) = 1000.0f + 40.0f * x;
  NormalMap n = normals_from_depth(d);
  float nx0 = n.at(0, 0, 0), nz0 = n.at(2, 0, 0);
  CHECK(nx0 < 0.0f);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      REQUIRE(n.is_valid(x, y));
      CHECK(n.at(0, x, y) == doctest::Approx(nx0));
      CHECK(n.at(1, x, y) == doctest::Approx(0.0));
      CHECK(n.at(2, x, y) == doctest::Approx(nz0));
    }
}

TEST_CASE("normals: central hole invalidates its stencil dependents") {
  DepthMap d(4, 4, 1500.0f);
  d.at(2, 1) = 0.0f;
  NormalMap n = normals_from_depth(d);
  int invalid = 0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      if (!n.is_valid(x, y)) ++invalid;
  CHECK(invalid == oracle_invalid_count(d, 1));
  CHECK_FALSE(n.is_valid(2, 1));  // the hole itself
  CHECK_FALSE(n.is_valid(1, 1));  // left neighbor uses it
  CHECK_FALSE(n.is_valid(2, 0));  // pixel above uses it
}

TEST_CASE("normals: unit norm at every valid pixel (property)") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    DepthMap d = random_depth(9, 7, rng, 0.15);
    NormalMap n = normals_from_depth(d);
    int invalid = 0;
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x) {
        if (!n.is_valid(x, y)) {
          ++invalid;
          continue;
        }
        double norm = double(n.at(0, x, y)) * n.at(0, x, y) +
                      double(n.at(1, x, y)) * n.at(1, x, y) +
                      double(n.at(2, x, y)) * n.at(2, x, y);
        CHECK(std::abs(norm - 1.0) < 1e-6);
        CHECK(n.at(2, x, y) > 0.0f);
      }
    CHECK(invalid == oracle_invalid_count(d, 1));
  }
}

TEST_CASE("normals: step parameter and error cases") {
  DepthMap d(8, 8, 1000.0f);
  NormalMap n2 = normals_from_depth(d, 2);
  CHECK(n2.is_valid(0, 0));
  CHECK_FALSE(n2.is_valid(6, 0));
  CHECK_THROWS_AS(normals_from_depth(DepthMap()), Error);
}

TEST_CASE("bicubic: constants are reproduced") {
  DepthMap d(5, 4, 1000.0f);
  DepthMap up = bicubic_upsample(d, 2);
  CHECK(up.width == 10);
  CHECK(up.height == 8);
  for (float v : up.data) CHECK(v == doctest::Approx(1000.0).epsilon(1e-9));
}

TEST_CASE("bicubic: factor 1 is the identity, factor 0 rejected") {
  Rng rng(7);
  DepthMap d = random_depth(6, 5, rng);
  DepthMap same = bicubic_upsample(d, 1);
  CHECK(same.data == d.data);
  CHECK_THROWS_AS(bicubic_upsample(d, 0), Error);
}

TEST_CASE("bicubic: linear ramp reproduced in the interior") {
  const int w = 12, h = 6;
  const double a = 800.0, b = 55.0;
  DepthMap d(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) d.at(x, y) = float(a + b * x);
  DepthMap up = bicubic_upsample(d, 2);
  for (int y = 4; y < up.height - 4; ++y)
    for (int x = 4; x < up.width - 4; ++x) {
      double sx = (x + 0.5) / 2.0 - 0.5;
      double expect = a + b * sx;
      CHECK(std::abs(up.at(x, y) - expect) / expect < 1e-6);
    }
}

TEST_CASE("bicubic: holes poison exactly their 4x4 support") {
  DepthMap d(8, 8, 2000.0f);
  d.at(4, 4) = 0.0f;
  DepthMap up = bicubic_upsample(d, 2);
  CHECK(up.at(1, 1) == doctest::Approx(2000.0));
  int holes = 0;
  for (int y = 0; y < up.height; ++y)
    for (int x = 0; x < up.width; ++x) {
      double sx = (x + 0.5) / 2.0 - 0.5, sy = (y + 0.5) / 2.0 - 0.5;
      int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
      bool support_hole = false;
      for (int j = -1; j <= 2; ++j)
        for (int i = -1; i <= 2; ++i) {
          int xx = std::clamp(x0 + i, 0, 7), yy = std::clamp(y0 + j, 0, 7);
          if (d.at(xx, yy) == 0.0f) support_hole = true;
        }
      CHECK((up.at(x, y) == 0.0f) == support_hole);
      holes += up.at(x, y) == 0.0f ? 1 : 0;
    }
  CHECK(holes > 0);
}

TEST_CASE("bicubic: translation equivariance on a hole-free ramp") {
  const int w = 16, h = 6;
  auto make_ramp = [&](int shift) {
    DepthMap d(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) d.at(x, y) = float(1000.0 + 30.0 * (x + shift));
    return d;
  };
  DepthMap up0 = bicubic_upsample(make_ramp(0), 2);
  DepthMap up1 = bicubic_upsample(make_ramp(1), 2);
  // Shifting the input by one source pixel shifts the output by two.
  for (int y = 0; y < up0.height; ++y)
    for (int x = 4; x + 2 < up0.width - 4; ++x)
      CHECK(up1.at(x, y) == doctest::Approx(up0.at(x + 2, y)).epsilon(1e-6));
}

TEST_CASE("depth_range_filter keeps/drops around the 5.1 m threshold") {
  auto frame_with_max = [](float mx) {
    RgbdFrame f;
    f.depth = DepthMap(4, 4, 1000.0f);
    f.depth.at(1, 1) = mx;
    f.rgb = RgbImage(4, 4, 0.5f);
    return f;
  };
  std::vector<RgbdFrame> frames;
  frames.push_back(frame_with_max(5000.0f));
  frames.push_back(frame_with_max(5200.0f));
  auto kept = depth_range_filter(std::move(frames));
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].depth.max_defined() == doctest::Approx(5000.0));

  CHECK(depth_range_filter({}).empty());
  CHECK_THROWS_AS(depth_range_filter({}, -1.0), Error);
}

TEST_CASE("normalize_depth definitions and hole preservation") {
  DepthMap d(3, 1);
  d.at(0, 0) = 5100.0f;
  d.at(1, 0) = 0.0f;
  d.at(2, 0) = 2550.0f;
  DepthMap unit = normalize_depth(d, NormalizeDirection::ToUnit);
  CHECK(unit.at(0, 0) == doctest::Approx(1.0));
  CHECK(unit.at(1, 0) == 0.0f);
  CHECK(unit.at(2, 0) == doctest::Approx(0.5));
  DepthMap back = normalize_depth(unit, NormalizeDirection::ToMm);
  CHECK(back.at(0, 0) == 5100.0f);
  CHECK(back.at(1, 0) == 0.0f);
  CHECK(back.at(2, 0) == 2550.0f);
}

TEST_CASE("normalize_depth round trip is the identity on [0, 5100] (property)") {
  Rng rng(33);
  DepthMap d(16, 16);
  for (auto& v : d.data) v = float(rng.uniform(0.0, 5100.0));
  DepthMap rt = normalize_depth(normalize_depth(d, NormalizeDirection::ToUnit),
                                NormalizeDirection::ToMm);
  // float storage of the unit-range intermediate costs at most ~5e-4 mm
  for (size_t i = 0; i < d.size(); ++i)
    CHECK(std::abs(double(rt.data[i]) - d.data[i]) < 1e-3);
}

TEST_CASE("normalize_depth clamps above range") {
  DepthMap d(1, 1, 6000.0f);
  CHECK(normalize_depth(d, NormalizeDirection::ToUnit).at(0, 0) == 1.0f);
}

TEST_CASE("hole_mask basics and popcount property") {
  DepthMap all(4, 4, 123.0f);
  CHECK(hole_mask(all).popcount() == 16);
  DepthMap none(4, 4, 0.0f);
  CHECK(hole_mask(none).popcount() == 0);

  DepthMap checker(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker.at(x, y) = (x + y) % 2 ? 900.0f : 0.0f;
  CHECK(hole_mask(checker).popcount() == 8);

  Rng rng(5);
  DepthMap d = random_depth(7, 9, rng, 0.3);
  size_t nonzero = 0;
  for (float v : d.data) nonzero += v > 0 ? 1 : 0;
  CHECK(hole_mask(d).popcount() == nonzero);
}

TEST_CASE("PNG round trip is exact for depth and rgb") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "udsr_png_test";
  fs::create_directories(dir);

  Rng rng(77);
  DepthMap d(13, 9);
  for (auto& v : d.data) v = float(rng.uniform_int(0, 65535));
  std::string dp = (dir / "d.png").string();
  save_depth_png(d, dp);
  DepthMap d2 = load_depth_png(dp);
  REQUIRE(d2.width == d.width);
  REQUIRE(d2.height == d.height);
  CHECK(d2.data == d.data);

  RgbImage img(11, 7);
  for (auto& v : img.data) v = float(rng.uniform_int(0, 255)) / 255.0f;
  std::string ip = (dir / "i.png").string();
  save_rgb_png(img, ip);
  RgbImage img2 = load_rgb_png(ip);
  REQUIRE(img2.width == img.width);
  CHECK(img2.data == img.data);

  CHECK_THROWS_AS(load_depth_png((dir / "missing.png").string()), Error);
  // A 16-bit gray PNG is not a valid RGB PNG and vice versa.
  CHECK_THROWS_AS(load_rgb_png(dp), Error);
  CHECK_THROWS_AS(load_depth_png(ip), Error);
}

TEST_CASE("downsample and rgb helpers") {
  DepthMap d(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) d.at(x, y) = float(100 * (y * 4 + x));
  DepthMap half = downsample_nearest(d, 2);
  CHECK(half.width == 2);
  CHECK(half.at(0, 0) == d.at(0, 0));
  CHECK(half.at(1, 1) == d.at(2, 2));
  CHECK_THROWS_AS(downsample_nearest(DepthMap(5, 5, 1.0f), 2), Error);

  RgbImage img(4, 2, 0.25f);
  RgbImage down = downsample_rgb_area(img, 2);
  CHECK(down.width == 2);
  CHECK(down.at(0, 0, 0) == doctest::Approx(0.25));
}
