#pragma once

// The two-phase training procedure: guidance pre-training, unpaired
// translation, enhancement with on-the-fly pseudo-examples, and the x2 SR
// fine-tune. Runs are bit-reproducible for a fixed (seed, config).

#include <string>
#include <vector>

#include "udsr/checkpoint.hpp"
#include "udsr/datagen.hpp"
#include "udsr/losses.hpp"
#include "udsr/metrics.hpp"
#include "udsr/networks.hpp"

namespace udsr {

// ---- learning-rate schedule ----

struct LrSchedule {
  double initial_lr = 2e-4;
  long constant_steps = 0;
  long decay_steps = 0;
  double final_lr = 0.0;  // paper schedules decay to 0
};

double lr_at(const LrSchedule& s, long step);

// ---- phase configuration ----

struct AugmentOptions {
  bool hflip = true;
  bool rot180 = true;  // right-angle rotation that preserves the frame shape
  bool random_crop = false;
  int crop_w = 0, crop_h = 0;
};

struct PhaseConfig {
  int schema_version = 1;
  long iterations = 500;
  int batch = 2;
  int gd_ratio = 3;  // generator updates per discriminator update
  uint64_t seed = 1;
  double hole_aug_prob = 0.9;
  LrSchedule lr;
  double beta1 = 0.5, beta2 = 0.999, adam_eps = 1e-8;
  double gen_weight_decay = 1e-4;  // generators only; discriminators run clean
  std::string loss_preset = "scannet-renderscannet-phase1";
  AugmentOptions augment;
  int log_every = 10;

  static PhaseConfig from_json(const std::string& json_text);
  static PhaseConfig load(const std::string& path);
  std::string to_json() const;
  void validate() const;
};

// Desk-scale defaults for the four phases. The paper-scale schedules keep
// the same shapes with far larger iteration counts (e.g. translation:
// 120K constant + 175K decay at lr 2e-4; guidance: 150K + 150K at 2e-3;
// SR fine-tune: 5K + 25K at 2e-4).
PhaseConfig micro_guidance_config();
PhaseConfig micro_translation_config();
PhaseConfig micro_enhancement_config();
PhaseConfig micro_sr_finetune_config();

// ---- in-memory dataset ----

struct StoredFrame {
  std::string scene_id, frame_id;
  Split split = Split::Test;
  RgbImage rgb;      // full resolution
  RgbImage rgb_lq;   // area-downsampled to the low-quality resolution
  DepthMap lq, hq, hqdown;
};

class FrameStore {
public:
  static FrameStore load(const DatasetManifest& manifest, const std::string& root);

  const std::vector<StoredFrame>& frames() const { return frames_; }
  const std::vector<int>& split_indices(Split s) const;
  int lq_width() const { return lq_w_; }
  int lq_height() const { return lq_h_; }

private:
  std::vector<StoredFrame> frames_;
  std::vector<int> idx_a_, idx_b_, idx_val_, idx_test_;
  int lq_w_ = 0, lq_h_ = 0;
};

// ---- network bundles ----

struct TranslationNets {
  nets::GeneratorNet<float> g_h2l, g_l2h;
  nets::DiscriminatorNet<float> d_depth_l, d_norm_l, d_depth_h, d_norm_h;

  void init(const nets::NetworkConfig& cfg, uint64_t seed);
  std::vector<ad::Parameter<float>*> generator_params();
  std::vector<ad::Parameter<float>*> discriminator_params();
};

// ---- training phases ----

struct TrainHistory {
  std::vector<std::string> columns;          // loss component names
  std::vector<long> steps;
  std::vector<std::vector<double>> rows;     // one row per logged step
  long g_steps = 0, d_steps = 0;             // update counters
};

TrainHistory train_guidance(nets::GuidanceNet<float>& f_rgb, const FrameStore& data,
                            const PhaseConfig& cfg, const std::string& log_csv = "");

TrainHistory train_translation(TranslationNets& nets, const FrameStore& data,
                               const PhaseConfig& cfg,
                               const std::string& log_csv = "");

TrainHistory train_enhancement(nets::EnhancementNet<float>& f_e,
                               nets::GeneratorNet<float>& g_h2l_frozen,
                               nets::GuidanceNet<float>& f_rgb_frozen,
                               const FrameStore& data, const PhaseConfig& cfg,
                               const std::string& log_csv = "");

TrainHistory finetune_sr(nets::EnhancementNet<float>& f_e,
                         nets::GeneratorNet<float>& g_h2l_frozen,
                         nets::GuidanceNet<float>& f_rgb_frozen,
                         const FrameStore& data, const PhaseConfig& cfg,
                         const std::string& log_csv = "");

// ---- inference & evaluation ----

// Bicubic upsampling (factor 2) or pass-through (factor 1), then guidance
// estimate and enhancement forward; output back in millimeters.
DepthMap infer(nets::EnhancementNet<float>& f_e, nets::GuidanceNet<float>& f_rgb,
               const RgbImage& rgb, const DepthMap& depth_lq, int factor);

// Enhancement metrics on a split: prediction vs hqdown with lq as input.
ErrorReport evaluate_enhancement(nets::EnhancementNet<float>& f_e,
                                 nets::GuidanceNet<float>& f_rgb,
                                 const FrameStore& data, Split split);
ErrorReport baseline_enhancement(const FrameStore& data, Split split);

// SR (x2) metrics on a split: prediction vs hq, bicubic-upsampled lq as input.
ErrorReport evaluate_sr(nets::EnhancementNet<float>& f_e,
                        nets::GuidanceNet<float>& f_rgb, const FrameStore& data,
                        Split split);
ErrorReport baseline_sr_bicubic(const FrameStore& data, Split split);

}  // namespace udsr
