// extern "C" surface over the core library. All exceptions stop here and
// become status codes plus a thread-local message.

#include "udsr/udsr.h"

#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "udsr/checkpoint.hpp"
#include "udsr/datagen.hpp"
#include "udsr/gradsuite.hpp"
#include "udsr/metrics.hpp"
#include "udsr/networks.hpp"
#include "udsr/png_io.hpp"
#include "udsr/training.hpp"

namespace {

thread_local std::string g_last_error;

int to_status(const udsr::Error& e) {
  switch (e.kind()) {
    case udsr::ErrorKind::Usage: return UDSR_ERR_USAGE;
    case udsr::ErrorKind::Config: return UDSR_ERR_CONFIG;
    case udsr::ErrorKind::Runtime: return UDSR_ERR_RUNTIME;
  }
  return UDSR_ERR_RUNTIME;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return UDSR_OK;
  } catch (const udsr::Error& e) {
    g_last_error = e.what();
    return to_status(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return UDSR_ERR_RUNTIME;
  }
}

template <typename T, typename Fn>
T* guarded_ptr(Fn&& fn) {
  try {
    T* p = fn();
    g_last_error.clear();
    return p;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return nullptr;
  }
}

nlohmann::json parse_options(const char* options_json) {
  if (!options_json || !*options_json) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(options_json);
  } catch (const nlohmann::json::exception& e) {
    throw udsr::Error(std::string("invalid options JSON: ") + e.what(),
                      udsr::ErrorKind::Config);
  }
}

udsr::nets::NetworkConfig net_config(const char* path) {
  if (!path || !*path) return {};
  return udsr::nets::NetworkConfig::load(path);
}

udsr::PhaseConfig phase_config(const char* path, const udsr::PhaseConfig& fallback) {
  if (!path || !*path) return fallback;
  return udsr::PhaseConfig::load(path);
}

udsr::FrameStore load_store(const char* manifest, const char* data_dir) {
  udsr::require(manifest && *manifest, "manifest path is required",
                udsr::ErrorKind::Usage);
  udsr::DatasetManifest m = udsr::DatasetManifest::load(manifest);
  std::string root = data_dir && *data_dir
                         ? data_dir
                         : std::filesystem::path(manifest).parent_path().string();
  return udsr::FrameStore::load(m, root);
}

int write_buf(const std::string& s, char* buf, size_t cap) {
  if (buf && cap > 0) {
    size_t n = std::min(cap - 1, s.size());
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
  }
  return int(s.size());
}

}  // namespace

struct udsr_depth {
  udsr::DepthMap map;
};

struct udsr_report {
  udsr::ErrorReport report;
};

extern "C" {

const char* udsr_version(void) { return "1.0.0"; }

const char* udsr_last_error(void) { return g_last_error.c_str(); }

void udsr_set_threads(int n) {
  omp_set_num_threads(n > 0 ? n : omp_get_num_procs());
}

udsr_depth* udsr_depth_load(const char* png_path) {
  return guarded_ptr<udsr_depth>([&] {
    udsr::require(png_path != nullptr, "png_path is NULL", udsr::ErrorKind::Usage);
    return new udsr_depth{udsr::load_depth_png(png_path)};
  });
}

udsr_depth* udsr_depth_create(int width, int height, const float* mm_values) {
  return guarded_ptr<udsr_depth>([&] {
    udsr::require(width > 0 && height > 0, "dimensions must be positive",
                  udsr::ErrorKind::Usage);
    udsr::DepthMap d(width, height);
    if (mm_values)
      std::copy(mm_values, mm_values + d.size(), d.data.begin());
    d.validate();
    return new udsr_depth{std::move(d)};
  });
}

int udsr_depth_save(const udsr_depth* d, const char* png_path) {
  return guarded([&] {
    udsr::require(d && png_path, "NULL argument", udsr::ErrorKind::Usage);
    udsr::save_depth_png(d->map, png_path);
  });
}

void udsr_depth_free(udsr_depth* d) { delete d; }

int udsr_depth_width(const udsr_depth* d) { return d ? d->map.width : 0; }
int udsr_depth_height(const udsr_depth* d) { return d ? d->map.height : 0; }

float udsr_depth_get(const udsr_depth* d, int x, int y) {
  if (!d || x < 0 || y < 0 || x >= d->map.width || y >= d->map.height)
    return std::nanf("");
  return d->map.at(x, y);
}

udsr_depth* udsr_depth_bicubic_upsample(const udsr_depth* d, int factor) {
  return guarded_ptr<udsr_depth>([&] {
    udsr::require(d != nullptr, "depth handle is NULL", udsr::ErrorKind::Usage);
    return new udsr_depth{udsr::bicubic_upsample(d->map, factor)};
  });
}

udsr_report* udsr_evaluate(const udsr_depth* pred, const udsr_depth* gt,
                           const udsr_depth* input_lq) {
  return guarded_ptr<udsr_report>([&] {
    udsr::require(pred && gt && input_lq, "NULL depth handle",
                  udsr::ErrorKind::Usage);
    return new udsr_report{
        udsr::masked_error_stats(pred->map, gt->map, input_lq->map)};
  });
}

double udsr_report_value(const udsr_report* r, const char* field) {
  if (!r || !field) return std::nan("");
  const udsr::ErrorReport& e = r->report;
  std::string f = field;
  if (f == "rmse") return e.rmse;
  if (f == "rmse_h") return e.rmse_h;
  if (f == "rmse_d") return e.rmse_d;
  if (f == "mae") return e.mae;
  if (f == "mae_h") return e.mae_h;
  if (f == "mae_d") return e.mae_d;
  if (f == "mse_v") return e.mse_v;
  if (f == "mae_v") return e.mae_v;
  if (f == "n_total") return double(e.n_total);
  if (f == "n_h") return double(e.n_h);
  if (f == "n_d") return double(e.n_d);
  return std::nan("");
}

int udsr_report_csv(const udsr_report* r, int with_header, char* buf, size_t cap) {
  if (!r) return -1;
  std::string s;
  if (with_header) s = udsr::ErrorReport::csv_header() + "\n";
  s += r->report.to_csv_row() + "\n";
  return write_buf(s, buf, cap);
}

int udsr_report_json(const udsr_report* r, char* buf, size_t cap) {
  if (!r) return -1;
  return write_buf(r->report.to_json(), buf, cap);
}

void udsr_report_free(udsr_report* r) { delete r; }

int udsr_synth(const char* out_dir, int num_scenes, int width, int height,
               uint64_t seed, const char* options_json) {
  return guarded([&] {
    udsr::require(out_dir && *out_dir, "output directory is required",
                  udsr::ErrorKind::Usage);
    nlohmann::json j = parse_options(options_json);
    udsr::SynthOptions opt;
    opt.frames_per_scene = j.value("frames_per_scene", opt.frames_per_scene);
    opt.degradation.noise_coeff_mm =
        j.value("noise_coeff_mm", opt.degradation.noise_coeff_mm);
    opt.degradation.quant_step_mm =
        j.value("quant_step_mm", opt.degradation.quant_step_mm);
    opt.degradation.grazing_nz_threshold =
        j.value("grazing_nz_threshold", opt.degradation.grazing_nz_threshold);
    opt.degradation.blob_rate = j.value("blob_rate", opt.degradation.blob_rate);
    opt.degradation.downsample_factor =
        j.value("downsample_factor", opt.degradation.downsample_factor);
    opt.scene_template.planes = j.value("planes", opt.scene_template.planes);
    opt.scene_template.spheres = j.value("spheres", opt.scene_template.spheres);
    opt.scene_template.boxes = j.value("boxes", opt.scene_template.boxes);
    udsr::generate_dataset(out_dir, num_scenes, width, height, seed, opt);
  });
}

int udsr_split(const char* data_dir, double train_frac, double val_frac,
               double test_frac, uint64_t seed, const char* manifest_out) {
  return guarded([&] {
    udsr::require(data_dir && manifest_out, "NULL argument", udsr::ErrorKind::Usage);
    namespace fs = std::filesystem;
    fs::path scenes_dir = fs::path(data_dir) / "scenes";
    udsr::require(fs::is_directory(scenes_dir),
                  "no scenes/ directory under " + std::string(data_dir),
                  udsr::ErrorKind::Usage);

    std::vector<std::string> scene_ids;
    for (const auto& e : fs::directory_iterator(scenes_dir))
      if (e.is_directory()) scene_ids.push_back(e.path().filename().string());
    std::sort(scene_ids.begin(), scene_ids.end());

    auto assignment = udsr::build_splits(
        scene_ids, udsr::SplitFractions{train_frac, val_frac, test_frac}, seed);

    udsr::DatasetManifest manifest;
    for (const auto& scene : scene_ids) {
      std::vector<std::string> frame_ids;
      for (const auto& e : fs::directory_iterator(scenes_dir / scene)) {
        std::string name = e.path().filename().string();
        const std::string suffix = ".rgb.png";
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
          frame_ids.push_back(name.substr(0, name.size() - suffix.size()));
      }
      std::sort(frame_ids.begin(), frame_ids.end());
      for (const auto& frame : frame_ids) {
        udsr::ManifestFrame mf;
        mf.scene_id = scene;
        mf.frame_id = frame;
        mf.split = assignment.at(scene);
        std::string base = "scenes/" + scene + "/" + frame;
        mf.rgb_path = base + ".rgb.png";
        mf.lq_path = base + ".lq.png";
        mf.hq_path = base + ".hq.png";
        mf.hqdown_path = base + ".hqdown.png";
        manifest.frames.push_back(std::move(mf));
      }
    }
    manifest.validate();
    manifest.save(manifest_out);
  });
}

int udsr_degrade(const char* depth_png_in, const char* depth_png_out,
                 uint64_t seed, const char* options_json) {
  return guarded([&] {
    udsr::require(depth_png_in && depth_png_out, "NULL argument",
                  udsr::ErrorKind::Usage);
    nlohmann::json j = parse_options(options_json);
    udsr::DegradationSpec spec;
    spec.noise_coeff_mm = j.value("noise_coeff_mm", spec.noise_coeff_mm);
    spec.quant_step_mm = j.value("quant_step_mm", spec.quant_step_mm);
    spec.grazing_nz_threshold =
        j.value("grazing_nz_threshold", spec.grazing_nz_threshold);
    spec.blob_rate = j.value("blob_rate", spec.blob_rate);
    spec.downsample_factor = j.value("downsample_factor", spec.downsample_factor);
    udsr::DepthMap in = udsr::load_depth_png(depth_png_in);
    udsr::save_depth_png(udsr::degrade(in, spec, seed), depth_png_out);
  });
}

int udsr_filter(const char* manifest_in, const char* data_dir,
                const char* manifest_out, double ssim_threshold, int* kept,
                int* total) {
  return guarded([&] {
    udsr::require(manifest_in && manifest_out, "NULL argument",
                  udsr::ErrorKind::Usage);
    udsr::DatasetManifest m = udsr::DatasetManifest::load(manifest_in);
    std::string root = data_dir && *data_dir
                           ? data_dir
                           : std::filesystem::path(manifest_in).parent_path().string();
    namespace fs = std::filesystem;
    udsr::DatasetManifest out;
    int n_total = 0, n_kept = 0;
    for (const auto& f : m.frames) {
      ++n_total;
      udsr::PatchPair pair;
      pair.raw = udsr::load_depth_png((fs::path(root) / f.lq_path).string());
      pair.rendered = udsr::load_depth_png((fs::path(root) / f.hqdown_path).string());
      auto kept_pairs = udsr::ssim_patch_filter({pair}, ssim_threshold);
      if (!kept_pairs.empty()) {
        out.frames.push_back(f);
        ++n_kept;
      }
    }
    out.save(manifest_out);
    if (kept) *kept = n_kept;
    if (total) *total = n_total;
  });
}

int udsr_upsample(const char* depth_png_in, const char* depth_png_out, int factor) {
  return guarded([&] {
    udsr::require(depth_png_in && depth_png_out, "NULL argument",
                  udsr::ErrorKind::Usage);
    udsr::DepthMap in = udsr::load_depth_png(depth_png_in);
    udsr::save_depth_png(udsr::bicubic_upsample(in, factor), depth_png_out);
  });
}

int udsr_train_guidance(const char* manifest, const char* data_dir,
                        const char* config_json_path, const char* net_config_path,
                        const char* ckpt_out, const char* log_csv) {
  return guarded([&] {
    udsr::require(ckpt_out && *ckpt_out, "checkpoint output path is required",
                  udsr::ErrorKind::Usage);
    udsr::FrameStore store = load_store(manifest, data_dir);
    udsr::PhaseConfig cfg = phase_config(config_json_path,
                                         udsr::micro_guidance_config());
    udsr::nets::NetworkConfig nc = net_config(net_config_path);
    udsr::nets::GuidanceNet<float> f_rgb;
    f_rgb.init("f_rgb", nc.guidance);
    f_rgb.init_params(udsr::mix_seed(cfg.seed, 0x96d));
    udsr::train_guidance(f_rgb, store, cfg, log_csv ? log_csv : "");
    std::vector<udsr::ad::Parameter<float>*> ps;
    f_rgb.collect(ps);
    udsr::save_checkpoint(ckpt_out, ps);
  });
}

int udsr_train_translation(const char* manifest, const char* data_dir,
                           const char* config_json_path,
                           const char* net_config_path, const char* ckpt_out,
                           const char* log_csv) {
  return guarded([&] {
    udsr::require(ckpt_out && *ckpt_out, "checkpoint output path is required",
                  udsr::ErrorKind::Usage);
    udsr::FrameStore store = load_store(manifest, data_dir);
    udsr::PhaseConfig cfg = phase_config(config_json_path,
                                         udsr::micro_translation_config());
    udsr::nets::NetworkConfig nc = net_config(net_config_path);
    udsr::TranslationNets nets;
    nets.init(nc, cfg.seed);
    udsr::train_translation(nets, store, cfg, log_csv ? log_csv : "");
    auto ps = nets.generator_params();
    udsr::save_checkpoint(ckpt_out, ps);
  });
}

namespace {

void load_generators(udsr::TranslationNets& nets,
                     const udsr::nets::NetworkConfig& nc,
                     const char* translation_ckpt) {
  nets.init(nc, 0);
  udsr::require(translation_ckpt && *translation_ckpt,
                "translation checkpoint is required", udsr::ErrorKind::Usage);
  auto ps = nets.generator_params();
  udsr::load_checkpoint(translation_ckpt, ps);
}

void load_guidance(udsr::nets::GuidanceNet<float>& f_rgb,
                   const udsr::nets::NetworkConfig& nc, const char* guidance_ckpt) {
  f_rgb.init("f_rgb", nc.guidance);
  f_rgb.init_params(0);
  udsr::require(guidance_ckpt && *guidance_ckpt, "guidance checkpoint is required",
                udsr::ErrorKind::Usage);
  std::vector<udsr::ad::Parameter<float>*> ps;
  f_rgb.collect(ps);
  udsr::load_checkpoint(guidance_ckpt, ps);
}

}  // namespace

int udsr_train_enhancement(const char* manifest, const char* data_dir,
                           const char* translation_ckpt, const char* guidance_ckpt,
                           const char* config_json_path,
                           const char* net_config_path, const char* ckpt_out,
                           const char* log_csv) {
  return guarded([&] {
    udsr::require(ckpt_out && *ckpt_out, "checkpoint output path is required",
                  udsr::ErrorKind::Usage);
    udsr::FrameStore store = load_store(manifest, data_dir);
    udsr::PhaseConfig cfg = phase_config(config_json_path,
                                         udsr::micro_enhancement_config());
    udsr::nets::NetworkConfig nc = net_config(net_config_path);
    udsr::TranslationNets tnets;
    load_generators(tnets, nc, translation_ckpt);
    udsr::nets::GuidanceNet<float> f_rgb;
    load_guidance(f_rgb, nc, guidance_ckpt);
    udsr::nets::EnhancementNet<float> f_e;
    f_e.init("f_e", nc.enhancement);
    f_e.init_params(udsr::mix_seed(cfg.seed, 0xe4a4));
    udsr::train_enhancement(f_e, tnets.g_h2l, f_rgb, store, cfg,
                            log_csv ? log_csv : "");
    std::vector<udsr::ad::Parameter<float>*> ps;
    f_e.collect(ps);
    udsr::save_checkpoint(ckpt_out, ps);
  });
}

int udsr_finetune_sr(const char* manifest, const char* data_dir,
                     const char* translation_ckpt, const char* guidance_ckpt,
                     const char* enhancement_ckpt, const char* config_json_path,
                     const char* net_config_path, const char* ckpt_out,
                     const char* log_csv) {
  return guarded([&] {
    udsr::require(ckpt_out && *ckpt_out, "checkpoint output path is required",
                  udsr::ErrorKind::Usage);
    udsr::FrameStore store = load_store(manifest, data_dir);
    udsr::PhaseConfig cfg = phase_config(config_json_path,
                                         udsr::micro_sr_finetune_config());
    udsr::nets::NetworkConfig nc = net_config(net_config_path);
    udsr::TranslationNets tnets;
    load_generators(tnets, nc, translation_ckpt);
    udsr::nets::GuidanceNet<float> f_rgb;
    load_guidance(f_rgb, nc, guidance_ckpt);
    udsr::nets::EnhancementNet<float> f_e;
    f_e.init("f_e", nc.enhancement);
    f_e.init_params(0);
    udsr::require(enhancement_ckpt && *enhancement_ckpt,
                  "enhancement checkpoint is required", udsr::ErrorKind::Usage);
    std::vector<udsr::ad::Parameter<float>*> ps;
    f_e.collect(ps);
    udsr::load_checkpoint(enhancement_ckpt, ps);
    udsr::finetune_sr(f_e, tnets.g_h2l, f_rgb, store, cfg, log_csv ? log_csv : "");
    udsr::save_checkpoint(ckpt_out, ps);
  });
}

int udsr_infer(const char* rgb_png, const char* depth_png, const char* guidance_ckpt,
               const char* enhancement_ckpt, const char* net_config_path,
               int factor, const char* out_png) {
  return guarded([&] {
    udsr::require(rgb_png && depth_png && out_png, "NULL argument",
                  udsr::ErrorKind::Usage);
    udsr::nets::NetworkConfig nc = net_config(net_config_path);
    udsr::nets::GuidanceNet<float> f_rgb;
    load_guidance(f_rgb, nc, guidance_ckpt);
    udsr::nets::EnhancementNet<float> f_e;
    f_e.init("f_e", nc.enhancement);
    f_e.init_params(0);
    udsr::require(enhancement_ckpt && *enhancement_ckpt,
                  "enhancement checkpoint is required", udsr::ErrorKind::Usage);
    std::vector<udsr::ad::Parameter<float>*> ps;
    f_e.collect(ps);
    udsr::load_checkpoint(enhancement_ckpt, ps);

    udsr::RgbImage rgb = udsr::load_rgb_png(rgb_png);
    udsr::DepthMap lq = udsr::load_depth_png(depth_png);
    udsr::DepthMap out = udsr::infer(f_e, f_rgb, rgb, lq, factor);
    udsr::save_depth_png(out, out_png);
  });
}

int udsr_eval_files(const char* pred_png, const char* gt_png, const char* input_png,
                    const char* csv_out, const char* json_out) {
  return guarded([&] {
    udsr::require(pred_png && gt_png && input_png, "NULL argument",
                  udsr::ErrorKind::Usage);
    udsr::DepthMap pred = udsr::load_depth_png(pred_png);
    udsr::DepthMap gt = udsr::load_depth_png(gt_png);
    udsr::DepthMap lq = udsr::load_depth_png(input_png);
    udsr::ErrorReport r = udsr::masked_error_stats(pred, gt, lq);
    if (csv_out && *csv_out) {
      std::ofstream f(csv_out);
      udsr::require(f.good(), std::string("cannot write ") + csv_out);
      f << udsr::ErrorReport::csv_header() << "\n" << r.to_csv_row() << "\n";
    }
    if (json_out && *json_out) {
      std::ofstream f(json_out);
      udsr::require(f.good(), std::string("cannot write ") + json_out);
      f << r.to_json() << "\n";
    }
  });
}

int udsr_gradcheck(double tolerance, double* max_rel_err) {
  double max_err = 1e300;
  int rc = guarded([&] { max_err = udsr::gradient_suite_max_err(nullptr); });
  if (max_rel_err) *max_rel_err = max_err;
  if (rc != UDSR_OK) return rc;
  if (!(max_err <= tolerance)) {
    g_last_error = "gradient check exceeded tolerance";
    return UDSR_ERR_RUNTIME;
  }
  return UDSR_OK;
}

}  // extern "C"
