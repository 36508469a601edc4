#include "udsr/datagen.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "udsr/metrics.hpp"
#include "udsr/png_io.hpp"

namespace udsr {

namespace {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

Vec3 normalize(Vec3 v) {
  double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return {v.x / n, v.y / n, v.z / n};
}

double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

struct Hit {
  double t = -1.0;
  Vec3 normal;  // geometric, facing the camera
  const ScenePrimitive* prim = nullptr;
};

bool intersect(const ScenePrimitive& p, Vec3 o, Vec3 d, Hit& hit) {
  switch (p.kind) {
    case ScenePrimitive::Kind::Plane: {
      Vec3 n{p.b[0], p.b[1], p.b[2]};
      Vec3 pt{p.a[0], p.a[1], p.a[2]};
      double denom = dot(n, d);
      if (std::abs(denom) < 1e-12) return false;
      double t = dot(n, Vec3{pt.x - o.x, pt.y - o.y, pt.z - o.z}) / denom;
      if (t <= 1e-9) return false;
      hit = {t, denom < 0 ? n : Vec3{-n.x, -n.y, -n.z}, &p};
      return true;
    }
    case ScenePrimitive::Kind::Sphere: {
      Vec3 c{p.a[0] - o.x, p.a[1] - o.y, p.a[2] - o.z};
      double b = dot(d, c);
      double disc = b * b - (dot(c, c) - p.radius * p.radius);
      if (disc < 0) return false;
      double t = b - std::sqrt(disc);
      if (t <= 1e-9) return false;
      Vec3 hp{o.x + t * d.x, o.y + t * d.y, o.z + t * d.z};
      Vec3 n = normalize({hp.x - p.a[0], hp.y - p.a[1], hp.z - p.a[2]});
      hit = {t, n, &p};
      return true;
    }
    case ScenePrimitive::Kind::Box: {
      double tmin = 1e-9, tmax = 1e300;
      int axis = 0;
      double sign = 1.0;
      const double* lo = p.a;
      const double* hi = p.b;
      const double ov[3] = {o.x, o.y, o.z};
      const double dv[3] = {d.x, d.y, d.z};
      for (int i = 0; i < 3; ++i) {
        if (std::abs(dv[i]) < 1e-12) {
          if (ov[i] < lo[i] || ov[i] > hi[i]) return false;
          continue;
        }
        double inv = 1.0 / dv[i];
        double t0 = (lo[i] - ov[i]) * inv;
        double t1 = (hi[i] - ov[i]) * inv;
        double s = -1.0;
        if (t0 > t1) {
          std::swap(t0, t1);
          s = 1.0;
        }
        if (t0 > tmin) {
          tmin = t0;
          axis = i;
          sign = s;
        }
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return false;
      }
      if (tmin <= 1e-9) return false;
      Vec3 n{0, 0, 0};
      (&n.x)[axis] = sign;
      hit = {tmin, n, &p};
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<ScenePrimitive> make_scene_primitives(const SceneSpec& spec) {
  require(spec.width > 0 && spec.height > 0, "scene spec: empty resolution");
  require(spec.min_depth_mm > 0 && spec.max_depth_mm > spec.min_depth_mm,
          "scene spec: degenerate depth range");
  Rng rng(mix_seed(spec.seed, 0x5ce11e));
  std::vector<ScenePrimitive> prims;
  const double span = spec.max_depth_mm - spec.min_depth_mm;

  auto albedo = [&](ScenePrimitive& p) {
    p.albedo[0] = float(rng.uniform(0.15, 0.95));
    p.albedo[1] = float(rng.uniform(0.15, 0.95));
    p.albedo[2] = float(rng.uniform(0.15, 0.95));
  };

  // Background plane, slightly tilted, covering the whole view.
  {
    ScenePrimitive p;
    p.kind = ScenePrimitive::Kind::Plane;
    double z0 = spec.min_depth_mm + span * rng.uniform(0.62, 0.78);
    p.a[0] = 0;
    p.a[1] = 0;
    p.a[2] = z0;
    Vec3 n = normalize({rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), -1.0});
    p.b[0] = n.x;
    p.b[1] = n.y;
    p.b[2] = n.z;
    albedo(p);
    prims.push_back(p);
  }

  // Foreground tilted planes appear as finite panels (thin boxes) so they
  // do not occlude the whole frame.
  for (int i = 1; i < spec.planes; ++i) {
    ScenePrimitive p;
    p.kind = ScenePrimitive::Kind::Box;
    double z = spec.min_depth_mm + span * rng.uniform(0.35, 0.55);
    double cx = z * rng.uniform(-0.3, 0.3);
    double cy = z * rng.uniform(-0.25, 0.25);
    double wx = z * rng.uniform(0.08, 0.25);
    double wy = z * rng.uniform(0.08, 0.25);
    double wz = span * rng.uniform(0.01, 0.03);
    p.a[0] = cx - wx;
    p.a[1] = cy - wy;
    p.a[2] = z - wz;
    p.b[0] = cx + wx;
    p.b[1] = cy + wy;
    p.b[2] = z + wz;
    albedo(p);
    prims.push_back(p);
  }

  for (int i = 0; i < spec.spheres; ++i) {
    ScenePrimitive p;
    p.kind = ScenePrimitive::Kind::Sphere;
    double z = spec.min_depth_mm + span * rng.uniform(0.28, 0.5);
    p.radius = z * rng.uniform(0.08, 0.2);
    p.a[0] = z * rng.uniform(-0.32, 0.32);
    p.a[1] = z * rng.uniform(-0.26, 0.26);
    p.a[2] = z;
    // keep the whole sphere inside the depth range
    if (p.a[2] - p.radius < spec.min_depth_mm) p.a[2] = spec.min_depth_mm + p.radius;
    albedo(p);
    prims.push_back(p);
  }

  for (int i = 0; i < spec.boxes; ++i) {
    ScenePrimitive p;
    p.kind = ScenePrimitive::Kind::Box;
    double z = spec.min_depth_mm + span * rng.uniform(0.3, 0.55);
    double cx = z * rng.uniform(-0.3, 0.3);
    double cy = z * rng.uniform(-0.25, 0.25);
    double wx = z * rng.uniform(0.06, 0.16);
    double wy = z * rng.uniform(0.06, 0.16);
    double wz = span * rng.uniform(0.03, 0.08);
    p.a[0] = cx - wx;
    p.a[1] = cy - wy;
    p.a[2] = z - wz;
    p.b[0] = cx + wx;
    p.b[1] = cy + wy;
    p.b[2] = z + wz;
    albedo(p);
    prims.push_back(p);
  }
  return prims;
}

std::pair<RgbImage, DepthMap> render_view(const std::vector<ScenePrimitive>& prims,
                                          int width, int height,
                                          double max_depth_mm,
                                          const double offset[3]) {
  require(!prims.empty(), "render_view: no primitives");
  require(width > 0 && height > 0, "render_view: empty resolution");
  Vec3 o{0, 0, 0};
  if (offset) o = {offset[0], offset[1], offset[2]};

  const double f = 0.8 * std::max(width, height);
  const Vec3 light = normalize({0.35, 0.25, -0.9});

  RgbImage rgb(width, height);
  DepthMap depth(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      Vec3 d = normalize({(x + 0.5 - width / 2.0) / f,
                          (y + 0.5 - height / 2.0) / f, 1.0});
      Hit best;
      for (const auto& p : prims) {
        Hit h;
        if (intersect(p, o, d, h) && (best.t < 0 || h.t < best.t)) best = h;
      }
      require(best.t > 0, "render_view: ray missed the scene (degenerate spec)");
      double z = o.z + best.t * d.z;
      require(z > 0 && z <= max_depth_mm,
              "render_view: depth out of range (degenerate spec)");
      depth.at(x, y) = float(z);
      double shade = 0.3 + 0.7 * std::max(0.0, dot(best.normal, light));
      for (int c = 0; c < 3; ++c)
        rgb.at(c, x, y) = float(std::clamp(best.prim->albedo[c] * shade, 0.0, 1.0));
    }
  }
  return {std::move(rgb), std::move(depth)};
}

std::pair<RgbImage, DepthMap> render_scene(const SceneSpec& spec) {
  auto prims = make_scene_primitives(spec);
  return render_view(prims, spec.width, spec.height, spec.max_depth_mm);
}

DepthMap degrade(const DepthMap& clean, const DegradationSpec& spec, uint64_t seed) {
  require(spec.noise_coeff_mm >= 0 && spec.quant_step_mm >= 0 &&
              spec.blob_rate >= 0 && spec.downsample_factor >= 1,
          "degradation spec: negative parameter");
  DepthMap d = clean;

  if (spec.noise_coeff_mm > 0) {
    Rng rng(mix_seed(seed, 0x01));
    for (float& v : d.data) {
      if (v <= 0.0f) continue;
      double sigma = spec.noise_coeff_mm * (double(v) / 1000.0) * (double(v) / 1000.0);
      v = float(std::max(0.0, double(v) + rng.normal(0.0, sigma)));
    }
  }

  if (spec.quant_step_mm > 0)
    for (float& v : d.data)
      if (v > 0.0f)
        v = float(std::round(double(v) / spec.quant_step_mm) * spec.quant_step_mm);

  if (spec.grazing_nz_threshold > 0) {
    NormalMap n = normals_from_depth(clean);
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x)
        if (n.is_valid(x, y) && n.at(2, x, y) < spec.grazing_nz_threshold)
          d.at(x, y) = 0.0f;
  }

  // Blob holes come from a dedicated stream and are applied as a prefix of
  // a fixed candidate sequence, so a larger rate only adds holes.
  int n_blobs = int(std::lround(spec.blob_rate));
  if (n_blobs > 0) {
    Rng rng(mix_seed(seed, 0x02));
    for (int i = 0; i < n_blobs; ++i) {
      double cx = rng.uniform(0, d.width);
      double cy = rng.uniform(0, d.height);
      double rx = rng.uniform(1.0, std::max(2.0, d.width / 12.0));
      double ry = rng.uniform(1.0, std::max(2.0, d.height / 12.0));
      int x0 = std::max(0, int(cx - rx)), x1 = std::min(d.width - 1, int(cx + rx));
      int y0 = std::max(0, int(cy - ry)), y1 = std::min(d.height - 1, int(cy + ry));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          double ex = (x + 0.5 - cx) / rx, ey = (y + 0.5 - cy) / ry;
          if (ex * ex + ey * ey <= 1.0) d.at(x, y) = 0.0f;
        }
    }
  }

  if (spec.downsample_factor > 1) d = downsample_nearest(d, spec.downsample_factor);
  return d;
}

std::vector<PatchPair> ssim_patch_filter(const std::vector<PatchPair>& pairs,
                                         double threshold) {
  std::vector<PatchPair> kept;
  for (const auto& pr : pairs) {
    bool misaligned = false;
    require(pr.raw.width == pr.rendered.width && pr.raw.height == pr.rendered.height,
            "ssim_patch_filter: pair dimension mismatch");
    for (size_t i = 0; i < pr.raw.data.size(); ++i)
      if (pr.rendered.data[i] <= 0.0f && pr.raw.data[i] > 0.0f) {
        misaligned = true;
        break;
      }
    if (misaligned) continue;
    if (ssim(pr.raw, pr.rendered) > threshold) kept.push_back(pr);
  }
  return kept;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::TrainA: return "trainA";
    case Split::TrainB: return "trainB";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "trainA") return Split::TrainA;
  if (name == "trainB") return Split::TrainB;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw Error("unknown split name '" + name + "'", ErrorKind::Config);
}

std::map<std::string, Split> build_splits(const std::vector<std::string>& scene_ids,
                                          const SplitFractions& fr, uint64_t seed) {
  size_t n = scene_ids.size();
  require(n >= 4, "build_splits: need at least 4 scenes, got " + std::to_string(n));
  require(fr.train > 0 && fr.val >= 0 && fr.test > 0 &&
              std::abs(fr.train + fr.val + fr.test - 1.0) < 1e-9,
          "build_splits: fractions must be positive and sum to 1");
  {
    std::set<std::string> uniq(scene_ids.begin(), scene_ids.end());
    require(uniq.size() == n, "build_splits: duplicate scene ids");
  }

  std::vector<std::string> order = scene_ids;
  Rng rng(mix_seed(seed, 0x5b117));
  for (size_t i = n - 1; i > 0; --i) {
    size_t j = size_t(rng.uniform_int(0, int64_t(i)));
    std::swap(order[i], order[j]);
  }

  size_t n_train = size_t(std::lround(fr.train * double(n)));
  size_t n_val = size_t(std::lround(fr.val * double(n)));
  n_train = std::max<size_t>(n_train, 2);
  if (n_train + n_val >= n) n_val = n - n_train - 1;
  size_t n_test = n - n_train - n_val;
  require(n_test >= 1, "build_splits: no scenes left for the test split");
  size_t n_a = (n_train + 1) / 2;

  std::map<std::string, Split> out;
  size_t i = 0;
  for (; i < n_a; ++i) out[order[i]] = Split::TrainA;
  for (; i < n_train; ++i) out[order[i]] = Split::TrainB;
  for (; i < n_train + n_val; ++i) out[order[i]] = Split::Val;
  for (; i < n; ++i) out[order[i]] = Split::Test;
  return out;
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open manifest: " + path, ErrorKind::Config);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid manifest JSON: ") + e.what(), ErrorKind::Config);
  }
  DatasetManifest m;
  m.schema_version = j.value("schema_version", 1);
  require(m.schema_version == 1, "unsupported manifest schema version",
          ErrorKind::Config);
  for (const auto& fj : j.at("frames")) {
    ManifestFrame fr;
    fr.scene_id = fj.at("scene").get<std::string>();
    fr.frame_id = fj.at("frame").get<std::string>();
    fr.split = split_from_name(fj.at("split").get<std::string>());
    fr.rgb_path = fj.value("rgb", "");
    fr.lq_path = fj.value("lq", "");
    fr.hq_path = fj.value("hq", "");
    fr.hqdown_path = fj.value("hqdown", "");
    m.frames.push_back(std::move(fr));
  }
  m.validate();
  return m;
}

void DatasetManifest::save(const std::string& path) const {
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["frames"] = nlohmann::json::array();
  for (const auto& fr : frames) {
    j["frames"].push_back({{"scene", fr.scene_id},
                           {"frame", fr.frame_id},
                           {"split", split_name(fr.split)},
                           {"rgb", fr.rgb_path},
                           {"lq", fr.lq_path},
                           {"hq", fr.hq_path},
                           {"hqdown", fr.hqdown_path}});
  }
  std::ofstream f(path);
  require(f.good(), "cannot write manifest: " + path);
  f << j.dump(2) << "\n";
}

std::vector<const ManifestFrame*> DatasetManifest::by_split(Split s) const {
  std::vector<const ManifestFrame*> out;
  for (const auto& f : frames)
    if (f.split == s) out.push_back(&f);
  return out;
}

void DatasetManifest::validate() const {
  std::map<std::string, Split> scene_split;
  for (const auto& f : frames) {
    auto it = scene_split.find(f.scene_id);
    if (it == scene_split.end())
      scene_split[f.scene_id] = f.split;
    else
      require(it->second == f.split,
              "manifest: scene '" + f.scene_id + "' appears in multiple splits");
    if (f.split == Split::Test)
      require(!f.lq_path.empty() && !f.hq_path.empty(),
              "manifest: test frame '" + f.frame_id + "' lacks lq or hq entry");
  }
}

HoleAugmentation plan_hole_augmentation(int width, int height, Rng& rng,
                                        double apply_prob) {
  HoleAugmentation aug;
  if (!rng.bernoulli(apply_prob)) return aug;
  aug.applied = true;
  aug.n_rects = int(rng.uniform_int(10, 75));
  aug.rects.reserve(aug.n_rects);
  for (int i = 0; i < aug.n_rects; ++i) {
    HoleRect r;
    r.h = std::max(1, int(std::lround(rng.uniform(height / 128.0, height / 8.0))));
    r.w = std::max(1, int(std::lround(rng.uniform(width / 128.0, width / 8.0))));
    r.h = std::min(r.h, height);
    r.w = std::min(r.w, width);
    r.x = int(rng.uniform_int(0, width - r.w));
    r.y = int(rng.uniform_int(0, height - r.h));
    aug.rects.push_back(r);
  }
  return aug;
}

DepthMap augment_holes(const DepthMap& d, Rng& rng, double apply_prob) {
  HoleAugmentation aug = plan_hole_augmentation(d.width, d.height, rng, apply_prob);
  if (!aug.applied) return d;
  DepthMap out = d;
  for (const HoleRect& r : aug.rects)
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x) out.at(x, y) = 0.0f;
  return out;
}

void generate_dataset(const std::string& out_dir, int num_scenes, int width,
                      int height, uint64_t seed, const SynthOptions& opt) {
  require(num_scenes >= 1, "generate_dataset: need at least one scene",
          ErrorKind::Usage);
  require(width % (4 * opt.degradation.downsample_factor) == 0 &&
              height % (4 * opt.degradation.downsample_factor) == 0,
          "generate_dataset: resolution must be divisible by 4x the "
          "downsample factor",
          ErrorKind::Usage);
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "scenes");

  for (int s = 0; s < num_scenes; ++s) {
    char scene_id[16];
    std::snprintf(scene_id, sizeof(scene_id), "s%03d", s);
    SceneSpec spec = opt.scene_template;
    spec.seed = mix_seed(seed, mix_seed(0xa11, uint64_t(s)));
    spec.width = width;
    spec.height = height;
    auto prims = make_scene_primitives(spec);
    fs::create_directories(fs::path(out_dir) / "scenes" / scene_id);

    Rng cam_rng(mix_seed(spec.seed, 0xca3));
    for (int fidx = 0; fidx < opt.frames_per_scene; ++fidx) {
      char frame_id[16];
      std::snprintf(frame_id, sizeof(frame_id), "f%03d", fidx);
      double offset[3] = {0, 0, 0};
      if (fidx > 0) {
        offset[0] = cam_rng.uniform(-40.0, 40.0);
        offset[1] = cam_rng.uniform(-30.0, 30.0);
        offset[2] = cam_rng.uniform(-25.0, 25.0);
      }
      auto [rgb, clean] = render_view(prims, width, height, spec.max_depth_mm, offset);
      DepthMap lq = degrade(clean, opt.degradation,
                            mix_seed(spec.seed, mix_seed(0xde6, uint64_t(fidx))));
      DepthMap hqdown = downsample_nearest(clean, opt.degradation.downsample_factor);

      fs::path base = fs::path(out_dir) / "scenes" / scene_id;
      save_rgb_png(rgb, (base / (std::string(frame_id) + ".rgb.png")).string());
      save_depth_png(clean, (base / (std::string(frame_id) + ".hq.png")).string());
      save_depth_png(hqdown, (base / (std::string(frame_id) + ".hqdown.png")).string());
      save_depth_png(lq, (base / (std::string(frame_id) + ".lq.png")).string());
    }
  }
}

}  // namespace udsr
