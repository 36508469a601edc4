#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "udsr/datagen.hpp"
#include "udsr/metrics.hpp"
#include "udsr/png_io.hpp"

using namespace udsr;

TEST_CASE("render: single fronto-parallel plane gives constant depth") {
  ScenePrimitive plane;
  plane.kind = ScenePrimitive::Kind::Plane;
  plane.a[0] = 0;
  plane.a[1] = 0;
  plane.a[2] = 2000;
  plane.b[0] = 0;
  plane.b[1] = 0;
  plane.b[2] = -1;
  auto [rgb, depth] = render_view({plane}, 16, 12, 5100.0);
  for (float v : depth.data) CHECK(v == doctest::Approx(2000.0).epsilon(1e-9));
  CHECK(rgb.width == 16);
}

TEST_CASE("render: sphere center depth matches the analytic intersection") {
  // background plane plus a centered sphere
  ScenePrimitive plane;
  plane.kind = ScenePrimitive::Kind::Plane;
  plane.a[2] = 4000;
  plane.b[2] = -1;
  ScenePrimitive sphere;
  sphere.kind = ScenePrimitive::Kind::Sphere;
  sphere.a[0] = 0;
  sphere.a[1] = 0;
  sphere.a[2] = 2500;
  sphere.radius = 400;
  const int w = 17, h = 13;  // odd so a pixel center is near the axis
  auto [rgb, depth] = render_view({plane, sphere}, w, h, 5100.0);
  (void)rgb;
  // The central pixel's ray passes almost through the sphere center; its
  // first hit is cz - r corrected for the half-pixel offset.
  double f = 0.8 * std::max(w, h);
  double dx = (w / 2 + 0.5 - w / 2.0) / f, dy = (h / 2 + 0.5 - h / 2.0) / f;
  double nrm = std::sqrt(dx * dx + dy * dy + 1.0);
  double ddx = dx / nrm, ddy = dy / nrm, ddz = 1.0 / nrm;
  // analytic smallest positive root of |t d - c|^2 = r^2
  double b = ddx * 0 + ddy * 0 + ddz * 2500;
  double cc = 2500.0 * 2500.0 - 400.0 * 400.0;
  double t = b - std::sqrt(b * b - cc);
  double expect = t * ddz;
  CHECK(std::abs(depth.at(w / 2, h / 2) - expect) < 1e-3);
  CHECK(depth.at(0, 0) == doctest::Approx(4000.0));  // background visible at corner
}

TEST_CASE("render_scene: deterministic per seed, in-range, hole-free") {
  SceneSpec spec;
  spec.seed = 31337;
  spec.width = 32;
  spec.height = 24;
  auto [rgb1, d1] = render_scene(spec);
  auto [rgb2, d2] = render_scene(spec);
  CHECK(d1.data == d2.data);
  CHECK(rgb1.data == rgb2.data);
  for (float v : d1.data) {
    CHECK(v > 0.0f);
    CHECK(v <= spec.max_depth_mm);
  }
  spec.seed = 31338;
  auto [rgb3, d3] = render_scene(spec);
  (void)rgb3;
  CHECK(d3.data != d1.data);

  SceneSpec bad;
  bad.min_depth_mm = 0;
  CHECK_THROWS_AS(make_scene_primitives(bad), Error);
}

TEST_CASE("degrade: all-zero spec reduces to nearest downsampling") {
  SceneSpec spec;
  spec.seed = 5;
  spec.width = 32;
  spec.height = 24;
  auto [rgb, clean] = render_scene(spec);
  (void)rgb;
  DegradationSpec d;
  d.noise_coeff_mm = 0;
  d.quant_step_mm = 0;
  d.grazing_nz_threshold = 0;
  d.blob_rate = 0;
  d.downsample_factor = 2;
  DepthMap out = degrade(clean, d, 1);
  DepthMap expect = downsample_nearest(clean, 2);
  CHECK(out.data == expect.data);
}

TEST_CASE("degrade: noise sigma matches the depth-dependent model") {
  DepthMap flat(400, 250, 2000.0f);
  DegradationSpec d;
  d.noise_coeff_mm = 8.0;
  d.quant_step_mm = 0;
  d.grazing_nz_threshold = 0;
  d.blob_rate = 0;
  d.downsample_factor = 1;
  DepthMap noisy = degrade(flat, d, 99);
  double mean = 0;
  for (float v : noisy.data) mean += v;
  mean /= double(noisy.size());
  double var = 0;
  for (float v : noisy.data) var += (v - mean) * (v - mean);
  var /= double(noisy.size());
  double sigma = std::sqrt(var);
  double expect = 8.0 * 2.0 * 2.0;  // coeff * (2000/1000)^2
  CHECK(sigma > 0.9 * expect);
  CHECK(sigma < 1.1 * expect);
  // never negative
  for (float v : noisy.data) CHECK(v >= 0.0f);
}

TEST_CASE("degrade: hole fraction grows with the blob rate") {
  SceneSpec spec;
  spec.seed = 6;
  spec.width = 64;
  spec.height = 48;
  auto [rgb, clean] = render_scene(spec);
  (void)rgb;
  DegradationSpec d;
  d.noise_coeff_mm = 0;
  d.quant_step_mm = 0;
  d.grazing_nz_threshold = 0;
  d.downsample_factor = 1;
  size_t prev = 0;
  for (double rate : {0.0, 2.0, 4.0, 8.0, 16.0}) {
    d.blob_rate = rate;
    DepthMap out = degrade(clean, d, 4242);
    size_t holes = out.size() - hole_mask(out).popcount();
    CHECK(holes >= prev);
    prev = holes;
  }
  CHECK(prev > 0);
}

TEST_CASE("degrade: quantization snaps to the step grid") {
  DepthMap flat(8, 8, 1234.0f);
  DegradationSpec d;
  d.noise_coeff_mm = 0;
  d.quant_step_mm = 20;
  d.grazing_nz_threshold = 0;
  d.blob_rate = 0;
  d.downsample_factor = 1;
  DepthMap out = degrade(flat, d, 1);
  for (float v : out.data) CHECK(v == doctest::Approx(1240.0));
}

TEST_CASE("ssim_patch_filter keeps clean pairs and drops corrupt/misaligned ones") {
  SceneSpec spec;
  spec.seed = 77;
  spec.width = 32;
  spec.height = 24;
  auto [rgb, clean] = render_scene(spec);
  (void)rgb;

  PatchPair identical{clean, clean};

  DegradationSpec heavy;
  heavy.noise_coeff_mm = 300.0;
  heavy.quant_step_mm = 0;
  heavy.grazing_nz_threshold = 0;
  heavy.blob_rate = 0;
  heavy.downsample_factor = 1;
  PatchPair corrupt{degrade(clean, heavy, 3), clean};
  REQUIRE(ssim(corrupt.raw, corrupt.rendered) < 0.8);

  PatchPair misaligned{clean, clean};
  misaligned.rendered.at(5, 5) = 0.0f;  // rendering hole where raw has depth

  auto kept = ssim_patch_filter({identical, corrupt, misaligned}, 0.8);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].raw.data == clean.data);

  // threshold 1.0 admits nothing, ssim being capped at 1
  CHECK(ssim_patch_filter({identical}, 1.0).empty());
  // order invariance of the kept set
  auto kept2 = ssim_patch_filter({misaligned, identical, corrupt}, 0.8);
  REQUIRE(kept2.size() == 1);
  CHECK(kept2[0].raw.data == kept[0].raw.data);
}

TEST_CASE("build_splits: the 10-scene worked example") {
  std::vector<std::string> scenes;
  for (int i = 0; i < 10; ++i) scenes.push_back("scene" + std::to_string(i));
  auto splits = build_splits(scenes, {0.6, 0.2, 0.2}, 9);
  int a = 0, b = 0, v = 0, t = 0;
  for (auto& [id, s] : splits) {
    if (s == Split::TrainA) ++a;
    if (s == Split::TrainB) ++b;
    if (s == Split::Val) ++v;
    if (s == Split::Test) ++t;
  }
  CHECK(a == 3);
  CHECK(b == 3);
  CHECK(v == 2);
  CHECK(t == 2);

  auto again = build_splits(scenes, {0.6, 0.2, 0.2}, 9);
  CHECK(splits == again);

  CHECK_THROWS_AS(build_splits({"a", "b", "c"}, {0.6, 0.2, 0.2}, 1), Error);
  CHECK_THROWS_AS(build_splits(scenes, {0.6, 0.2, 0.3}, 1), Error);
  std::vector<std::string> dup = {"x", "x", "y", "z"};
  CHECK_THROWS_AS(build_splits(dup, {0.5, 0.25, 0.25}, 1), Error);
}

TEST_CASE("build_splits: disjointness across seeds (property)") {
  std::vector<std::string> scenes;
  for (int i = 0; i < 13; ++i) scenes.push_back("s" + std::to_string(i));
  for (uint64_t seed = 0; seed < 25; ++seed) {
    auto splits = build_splits(scenes, {0.6, 0.2, 0.2}, seed);
    CHECK(splits.size() == scenes.size());
    std::set<Split> seen;
    for (auto& [id, s] : splits) seen.insert(s);
    CHECK(seen.count(Split::TrainA));
    CHECK(seen.count(Split::TrainB));
    CHECK(seen.count(Split::Test));
  }
}

TEST_CASE("manifest: save/load round trip, split queries, validation") {
  namespace fs = std::filesystem;
  DatasetManifest m;
  auto frame = [](std::string scene, std::string id, Split s) {
    ManifestFrame f;
    f.scene_id = std::move(scene);
    f.frame_id = std::move(id);
    f.split = s;
    f.rgb_path = "r.png";
    f.lq_path = "l.png";
    f.hq_path = "h.png";
    f.hqdown_path = "hd.png";
    return f;
  };
  m.frames.push_back(frame("a", "f0", Split::TrainA));
  m.frames.push_back(frame("a", "f1", Split::TrainA));
  m.frames.push_back(frame("b", "f0", Split::TrainB));
  m.frames.push_back(frame("c", "f0", Split::Test));
  std::string path = (fs::temp_directory_path() / "udsr_manifest_test.json").string();
  m.save(path);
  DatasetManifest m2 = DatasetManifest::load(path);
  REQUIRE(m2.frames.size() == 4);
  CHECK(m2.by_split(Split::TrainA).size() == 2);
  CHECK(m2.by_split(Split::Test).size() == 1);
  CHECK(m2.frames[0].scene_id == "a");

  // a scene in two splits violates disjointness
  DatasetManifest bad = m;
  bad.frames.push_back(frame("a", "f9", Split::Test));
  CHECK_THROWS_AS(bad.validate(), Error);
  // test frames need both lq and hq
  DatasetManifest bad2 = m;
  bad2.frames[3].hq_path = "";
  CHECK_THROWS_AS(bad2.validate(), Error);
}

TEST_CASE("augment_holes: identity at probability 0, growth of the hole set") {
  Rng rng(1);
  DepthMap d(40, 32, 1000.0f);
  d.at(3, 3) = 0.0f;
  DepthMap same = augment_holes(d, rng, 0.0);
  CHECK(same.data == d.data);

  Rng rng2(2);
  DepthMap out = augment_holes(d, rng2, 1.0);
  size_t before = hole_mask(d).popcount();
  size_t after = hole_mask(out).popcount();
  CHECK(after <= before);  // defined count can only shrink
  // existing zeros stay zero
  CHECK(out.at(3, 3) == 0.0f);
}

TEST_CASE("augment_holes: rectangle counts, sizes and bounds") {
  const int W = 64, H = 48;
  Rng rng(20240810);
  int applied = 0;
  const int draws = 2000;
  for (int i = 0; i < draws; ++i) {
    HoleAugmentation aug = plan_hole_augmentation(W, H, rng, 0.9);
    if (!aug.applied) continue;
    ++applied;
    CHECK(aug.n_rects >= 10);
    CHECK(aug.n_rects <= 75);
    REQUIRE(aug.rects.size() == size_t(aug.n_rects));
    for (const HoleRect& r : aug.rects) {
      CHECK(r.w >= 1);
      CHECK(r.h >= 1);
      CHECK(r.h <= H / 8 + 1);  // size window [dim/128, dim/8] after rounding
      CHECK(r.w <= W / 8 + 1);
      CHECK(r.x >= 0);
      CHECK(r.y >= 0);
      CHECK(r.x + r.w <= W);
      CHECK(r.y + r.h <= H);
    }
  }
  double rate = double(applied) / draws;
  CHECK(rate >= 0.88);
  CHECK(rate <= 0.92);
}

TEST_CASE("augment_holes_tensor zeroes rectangles per sample") {
  ad::Array<float> depth(ad::Shape{2, 1, 32, 40}, 0.5f);
  Rng rng(3);
  augment_holes_tensor(depth, rng, 1.0);
  size_t zeros = 0;
  for (float v : depth.v) zeros += v == 0.0f ? 1 : 0;
  CHECK(zeros > 0);
}

TEST_CASE("generate_dataset writes the documented directory layout") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "udsr_synth_test";
  fs::remove_all(dir);
  SynthOptions opt;
  opt.frames_per_scene = 2;
  generate_dataset(dir.string(), 2, 32, 24, 123, opt);
  CHECK(fs::exists(dir / "scenes" / "s000" / "f000.rgb.png"));
  CHECK(fs::exists(dir / "scenes" / "s000" / "f001.lq.png"));
  CHECK(fs::exists(dir / "scenes" / "s001" / "f000.hq.png"));
  CHECK(fs::exists(dir / "scenes" / "s001" / "f001.hqdown.png"));
  // lq is downsampled
  DepthMap lq = load_depth_png((dir / "scenes" / "s000" / "f000.lq.png").string());
  DepthMap hq = load_depth_png((dir / "scenes" / "s000" / "f000.hq.png").string());
  CHECK(lq.width * 2 == hq.width);
  CHECK(lq.height * 2 == hq.height);
  CHECK_THROWS_AS(generate_dataset(dir.string(), 1, 30, 24, 1, opt), Error);
}
