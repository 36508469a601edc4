#pragma once

// Synthetic RGB-D scene generation, sensor-style degradation, the SSIM
// patch filter, hole augmentation, and the paired/unpaired split framework.

#include <map>
#include <string>
#include <vector>

#include "udsr/ad.hpp"
#include "udsr/image.hpp"

namespace udsr {

// ---- scene generation ----

struct SceneSpec {
  uint64_t seed = 0;
  int planes = 2;   // tilted foreground planes (besides the background)
  int spheres = 2;
  int boxes = 1;
  double min_depth_mm = 500.0;
  double max_depth_mm = kDepthRangeMm;
  int width = 64;
  int height = 48;
};

struct ScenePrimitive {
  enum class Kind { Plane, Sphere, Box };
  Kind kind = Kind::Plane;
  // Plane: a = point on plane, b = unit normal (facing the camera, bz < 0).
  // Sphere: a = center, radius. Box: a = lo corner, b = hi corner.
  double a[3] = {0, 0, 0};
  double b[3] = {0, 0, -1};
  double radius = 0.0;
  float albedo[3] = {0.5f, 0.5f, 0.5f};
};

std::vector<ScenePrimitive> make_scene_primitives(const SceneSpec& spec);

// Analytic ray cast from a pinhole camera at `offset` looking down +z.
// Depth is the z coordinate of the nearest hit; RGB is diffuse-shaded so
// color edges coincide with depth discontinuities. Throws if any pixel
// misses all primitives or falls outside (0, max_depth].
std::pair<RgbImage, DepthMap> render_view(const std::vector<ScenePrimitive>& prims,
                                          int width, int height,
                                          double max_depth_mm,
                                          const double offset[3] = nullptr);

std::pair<RgbImage, DepthMap> render_scene(const SceneSpec& spec);

// ---- degradation ----

struct DegradationSpec {
  double noise_coeff_mm = 18.0;       // sigma(d) = coeff * (d / 1000)^2
  double quant_step_mm = 20.0;        // 0 disables quantization
  double grazing_nz_threshold = 0.45; // hole where the clean normal's nz drops below
  double blob_rate = 10.0;            // number of elliptic hole blobs
  int downsample_factor = 2;
};

// Noise, quantization, grazing-angle and blob holes, then nearest
// downsampling. Never produces negative depth.
DepthMap degrade(const DepthMap& clean, const DegradationSpec& spec, uint64_t seed);

// ---- SSIM patch filter ----

struct PatchPair {
  DepthMap raw;
  DepthMap rendered;
};

// Keeps pairs with ssim(raw, rendered) > threshold, and drops pairs where
// the rendered patch has holes the raw patch lacks.
std::vector<PatchPair> ssim_patch_filter(const std::vector<PatchPair>& pairs,
                                         double threshold);

// ---- splits & manifest ----

enum class Split { TrainA, TrainB, Val, Test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct SplitFractions {
  double train = 0.6, val = 0.2, test = 0.2;
};

// Scene-level assignment: train/val/test by the fractions, then the train
// scenes divide into disjoint A and B halves.
std::map<std::string, Split> build_splits(const std::vector<std::string>& scene_ids,
                                          const SplitFractions& fractions,
                                          uint64_t seed);

struct ManifestFrame {
  std::string scene_id;
  std::string frame_id;
  Split split = Split::Test;
  std::string rgb_path, lq_path, hq_path, hqdown_path;  // relative to root
};

struct DatasetManifest {
  int schema_version = 1;
  std::vector<ManifestFrame> frames;

  static DatasetManifest load(const std::string& path);
  void save(const std::string& path) const;
  std::vector<const ManifestFrame*> by_split(Split s) const;
  void validate() const;  // split-disjointness and test completeness
};

// ---- hole augmentation ----

struct HoleRect {
  int x = 0, y = 0, w = 0, h = 0;
};

struct HoleAugmentation {
  bool applied = false;
  int n_rects = 0;
  std::vector<HoleRect> rects;
};

// With probability apply_prob draws N ~ U{10..75} axis-aligned rectangles,
// heights in [H/128, H/8], widths in [W/128, W/8] (at least 1px), positions
// uniform within bounds.
HoleAugmentation plan_hole_augmentation(int width, int height, Rng& rng,
                                        double apply_prob = 0.9);

DepthMap augment_holes(const DepthMap& d, Rng& rng, double apply_prob = 0.9);

template <typename T>
void augment_holes_tensor(ad::Array<T>& depth, Rng& rng, double apply_prob = 0.9) {
  ad::Shape s = depth.shape;
  require(s.c == 1, "augment_holes_tensor: expected 1-channel depth");
  for (int n = 0; n < s.n; ++n) {
    HoleAugmentation aug = plan_hole_augmentation(s.w, s.h, rng, apply_prob);
    if (!aug.applied) continue;
    T* base = depth.v.data() + size_t(n) * s.h * s.w;
    for (const HoleRect& r : aug.rects)
      for (int y = r.y; y < r.y + r.h; ++y)
        for (int x = r.x; x < r.x + r.w; ++x) base[size_t(y) * s.w + x] = T(0);
  }
}

// ---- dataset synthesis (CLI `synth`) ----

struct SynthOptions {
  int frames_per_scene = 4;
  DegradationSpec degradation;
  SceneSpec scene_template;  // seed/width/height overridden per call
};

// Writes scenes/<scene>/<frame>.{rgb,lq,hq,hqdown}.png under out_dir.
void generate_dataset(const std::string& out_dir, int num_scenes, int width,
                      int height, uint64_t seed, const SynthOptions& opt);

}  // namespace udsr
