#include "udsr/training.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "udsr/png_io.hpp"

namespace udsr {

using ad::Array;
using ad::Shape;
using ad::Tape;
using ad::Var;
using nets::Domain;
using nets::FwdCtx;

// ---- schedule ----

double lr_at(const LrSchedule& s, long step) {
  require(step >= 0, "lr_at: negative step");
  if (step < s.constant_steps) return s.initial_lr;
  long t = step - s.constant_steps;
  if (s.decay_steps <= 0 || t >= s.decay_steps) return s.final_lr;
  double frac = double(t) / double(s.decay_steps);
  return s.initial_lr + (s.final_lr - s.initial_lr) * frac;
}

// ---- config ----

void PhaseConfig::validate() const {
  require(schema_version == 1, "unsupported phase config schema version",
          ErrorKind::Config);
  require(iterations >= 1, "phase config: iterations must be >= 1", ErrorKind::Config);
  require(batch >= 1, "phase config: batch must be >= 1", ErrorKind::Config);
  require(gd_ratio >= 1, "phase config: gd_ratio must be >= 1", ErrorKind::Config);
  require(hole_aug_prob >= 0 && hole_aug_prob <= 1,
          "phase config: hole_aug_prob must be in [0,1]", ErrorKind::Config);
  require(lr.initial_lr >= 0 && lr.final_lr >= 0 && lr.final_lr <= lr.initial_lr,
          "phase config: lr schedule must be non-increasing", ErrorKind::Config);
  require(lr.constant_steps >= 0 && lr.decay_steps >= 0,
          "phase config: negative schedule length", ErrorKind::Config);
  if (augment.random_crop)
    require(augment.crop_w >= 8 && augment.crop_h >= 8 &&
                augment.crop_w % 4 == 0 && augment.crop_h % 4 == 0,
            "phase config: crop size must be >= 8 and divisible by 4",
            ErrorKind::Config);
  LossWeights::preset(loss_preset);  // throws on unknown name
}

PhaseConfig PhaseConfig::from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid phase config JSON: ") + e.what(),
                ErrorKind::Config);
  }
  PhaseConfig c;
  c.schema_version = j.value("schema_version", 1);
  c.iterations = j.value("iterations", c.iterations);
  c.batch = j.value("batch", c.batch);
  c.gd_ratio = j.value("gd_ratio", c.gd_ratio);
  c.seed = j.value("seed", c.seed);
  c.hole_aug_prob = j.value("hole_aug_prob", c.hole_aug_prob);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.gen_weight_decay = j.value("weight_decay", c.gen_weight_decay);
  c.loss_preset = j.value("loss_preset", c.loss_preset);
  c.log_every = j.value("log_every", c.log_every);
  if (j.contains("lr")) {
    const auto& l = j["lr"];
    c.lr.initial_lr = l.value("initial", c.lr.initial_lr);
    c.lr.constant_steps = l.value("constant_steps", c.lr.constant_steps);
    c.lr.decay_steps = l.value("decay_steps", c.lr.decay_steps);
    c.lr.final_lr = l.value("final", c.lr.final_lr);
  }
  if (j.contains("augment")) {
    const auto& a = j["augment"];
    c.augment.hflip = a.value("hflip", c.augment.hflip);
    c.augment.rot180 = a.value("rot180", c.augment.rot180);
    c.augment.random_crop = a.value("random_crop", c.augment.random_crop);
    c.augment.crop_w = a.value("crop_w", c.augment.crop_w);
    c.augment.crop_h = a.value("crop_h", c.augment.crop_h);
  }
  c.validate();
  return c;
}

PhaseConfig micro_guidance_config() {
  PhaseConfig c;
  c.iterations = 500;
  c.batch = 2;
  c.lr = {2e-3, 250, 250, 0.0};
  c.beta1 = 0.9;
  c.beta2 = 0.999;
  c.gen_weight_decay = 0.0;
  c.hole_aug_prob = 0.0;
  return c;
}

PhaseConfig micro_translation_config() {
  PhaseConfig c;
  c.iterations = 800;
  c.batch = 1;
  c.gd_ratio = 3;
  c.lr = {2e-4, 400, 400, 0.0};
  c.beta1 = 0.5;
  c.beta2 = 0.999;
  c.gen_weight_decay = 1e-4;
  c.hole_aug_prob = 0.0;
  c.loss_preset = "scannet-renderscannet-phase1";
  return c;
}

PhaseConfig micro_enhancement_config() {
  PhaseConfig c;
  c.iterations = 1500;
  c.batch = 2;
  c.lr = {1e-3, 500, 1000, 0.0};
  c.beta1 = 0.9;
  c.beta2 = 0.999;
  c.gen_weight_decay = 0.0;
  c.hole_aug_prob = 0.9;
  c.loss_preset = "scannet-renderscannet-phase1";
  return c;
}

PhaseConfig micro_sr_finetune_config() {
  PhaseConfig c;
  c.iterations = 400;
  c.batch = 2;
  c.lr = {2e-4, 150, 250, 0.0};
  c.beta1 = 0.9;
  c.beta2 = 0.999;
  c.gen_weight_decay = 0.0;
  c.hole_aug_prob = 0.9;
  c.loss_preset = "sr-finetune";
  c.augment.hflip = false;
  c.augment.rot180 = false;
  return c;
}

PhaseConfig PhaseConfig::load(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open phase config: " + path, ErrorKind::Config);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

std::string PhaseConfig::to_json() const {
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["iterations"] = iterations;
  j["batch"] = batch;
  j["gd_ratio"] = gd_ratio;
  j["seed"] = seed;
  j["hole_aug_prob"] = hole_aug_prob;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_eps"] = adam_eps;
  j["weight_decay"] = gen_weight_decay;
  j["loss_preset"] = loss_preset;
  j["log_every"] = log_every;
  j["lr"] = {{"initial", lr.initial_lr},
             {"constant_steps", lr.constant_steps},
             {"decay_steps", lr.decay_steps},
             {"final", lr.final_lr}};
  j["augment"] = {{"hflip", augment.hflip},
                  {"rot180", augment.rot180},
                  {"random_crop", augment.random_crop},
                  {"crop_w", augment.crop_w},
                  {"crop_h", augment.crop_h}};
  return j.dump(2);
}

// ---- frame store ----

FrameStore FrameStore::load(const DatasetManifest& manifest, const std::string& root) {
  manifest.validate();
  namespace fs = std::filesystem;
  FrameStore store;
  for (const auto& mf : manifest.frames) {
    StoredFrame f;
    f.scene_id = mf.scene_id;
    f.frame_id = mf.frame_id;
    f.split = mf.split;
    auto full = [&](const std::string& rel) { return (fs::path(root) / rel).string(); };
    f.rgb = load_rgb_png(full(mf.rgb_path));
    f.lq = load_depth_png(full(mf.lq_path));
    f.hq = load_depth_png(full(mf.hq_path));
    f.hqdown = load_depth_png(full(mf.hqdown_path));
    require(f.rgb.width == f.hq.width && f.rgb.height == f.hq.height,
            "frame '" + mf.frame_id + "': rgb and hq depth sizes differ");
    require(f.lq.width == f.hqdown.width && f.lq.height == f.hqdown.height,
            "frame '" + mf.frame_id + "': lq and hqdown sizes differ");
    require(f.hq.width % f.lq.width == 0 && f.hq.height % f.lq.height == 0,
            "frame '" + mf.frame_id + "': hq size not a multiple of lq size");
    int factor = f.hq.width / f.lq.width;
    f.rgb_lq = factor == 1 ? f.rgb : downsample_rgb_area(f.rgb, factor);
    store.frames_.push_back(std::move(f));
  }
  require(!store.frames_.empty(), "frame store: empty manifest");
  store.lq_w_ = store.frames_[0].lq.width;
  store.lq_h_ = store.frames_[0].lq.height;
  for (size_t i = 0; i < store.frames_.size(); ++i) {
    const auto& f = store.frames_[i];
    require(f.lq.width == store.lq_w_ && f.lq.height == store.lq_h_,
            "frame store: frames disagree on low-quality resolution");
    switch (f.split) {
      case Split::TrainA: store.idx_a_.push_back(int(i)); break;
      case Split::TrainB: store.idx_b_.push_back(int(i)); break;
      case Split::Val: store.idx_val_.push_back(int(i)); break;
      case Split::Test: store.idx_test_.push_back(int(i)); break;
    }
  }
  return store;
}

const std::vector<int>& FrameStore::split_indices(Split s) const {
  switch (s) {
    case Split::TrainA: return idx_a_;
    case Split::TrainB: return idx_b_;
    case Split::Val: return idx_val_;
    case Split::Test: return idx_test_;
  }
  return idx_test_;
}

// ---- sample assembly ----

namespace {

struct Xform {
  int crop_x = 0, crop_y = 0;
  int out_w = 0, out_h = 0;
  bool flip_x = false, flip_y = false;
};

Xform draw_xform(int w, int h, const AugmentOptions& aug, Rng& rng) {
  Xform xf;
  xf.out_w = w;
  xf.out_h = h;
  if (aug.random_crop && aug.crop_w <= w && aug.crop_h <= h) {
    xf.out_w = aug.crop_w;
    xf.out_h = aug.crop_h;
    xf.crop_x = int(rng.uniform_int(0, w - aug.crop_w));
    xf.crop_y = int(rng.uniform_int(0, h - aug.crop_h));
  }
  bool rot = aug.rot180 && rng.bernoulli(0.5);
  bool hf = aug.hflip && rng.bernoulli(0.5);
  xf.flip_x = rot ^ hf;
  xf.flip_y = rot;
  return xf;
}

inline int src_x(const Xform& xf, int x) {
  return xf.crop_x + (xf.flip_x ? xf.out_w - 1 - x : x);
}
inline int src_y(const Xform& xf, int y) {
  return xf.crop_y + (xf.flip_y ? xf.out_h - 1 - y : y);
}

Array<float> depth_to_array(const DepthMap& d, const Xform& xf) {
  Array<float> a(Shape{1, 1, xf.out_h, xf.out_w});
  for (int y = 0; y < xf.out_h; ++y)
    for (int x = 0; x < xf.out_w; ++x) {
      double v = double(d.at(src_x(xf, x), src_y(xf, y))) / kDepthRangeMm;
      a[size_t(y) * xf.out_w + x] = float(std::clamp(v, 0.0, 1.0));
    }
  return a;
}

Array<float> rgb_to_array(const RgbImage& img, const Xform& xf) {
  Array<float> a(Shape{1, 3, xf.out_h, xf.out_w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < xf.out_h; ++y)
      for (int x = 0; x < xf.out_w; ++x)
        a[(size_t(c) * xf.out_h + y) * xf.out_w + x] =
            img.at(c, src_x(xf, x), src_y(xf, y));
  return a;
}

Array<float> gray_from_rgb(const Array<float>& rgb) {
  Shape s = rgb.shape;
  Array<float> g(Shape{s.n, 1, s.h, s.w});
  size_t plane = size_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (size_t i = 0; i < plane; ++i) {
      size_t base = size_t(n) * 3 * plane;
      g[size_t(n) * plane + i] = 0.299f * rgb[base + i] +
                                 0.587f * rgb[base + plane + i] +
                                 0.114f * rgb[base + 2 * plane + i];
    }
  return g;
}

Xform plain_xform(int w, int h) { return Xform{0, 0, w, h, false, false}; }

DepthMap array_to_depth(const Array<float>& a) {
  Shape s = a.shape;
  DepthMap d(s.w, s.h);
  for (size_t i = 0; i < a.count(); ++i)
    d.data[i] = float(std::clamp(double(a[i]), 0.0, 1.0) * kDepthRangeMm);
  return d;
}

int pick(const std::vector<int>& indices, Rng& rng, const char* what) {
  require(!indices.empty(), std::string("empty dataset split for ") + what);
  return indices[size_t(rng.uniform_int(0, int64_t(indices.size()) - 1))];
}

// CSV logging at the configured cadence.
struct CsvLog {
  std::ofstream file;
  bool enabled = false;

  CsvLog(const std::string& path, const std::vector<std::string>& columns) {
    if (path.empty()) return;
    file.open(path);
    require(file.good(), "cannot open training log: " + path);
    enabled = true;
    file << "step,lr";
    for (const auto& c : columns) file << "," << c;
    file << "\n";
  }
  void row(long step, double lr, const std::vector<double>& vals) {
    if (!enabled) return;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", lr);
    file << step << "," << buf;
    for (double v : vals) {
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      file << "," << buf;
    }
    file << "\n";
  }
};

void check_finite(const std::vector<double>& vals, long iteration) {
  for (double v : vals)
    if (!std::isfinite(v))
      throw Error("NaN loss at iteration " + std::to_string(iteration));
}

Array<float> guidance_estimate(nets::GuidanceNet<float>& f_rgb,
                               const Array<float>& rgb, Domain domain) {
  Tape<float> t;
  FwdCtx frozen{false, false};
  Var<float> out = f_rgb.forward(t, t.leaf(rgb), domain, frozen);
  return Array<float>(out.shape(), out.val());
}

Array<float> degrade_with_generator(nets::GeneratorNet<float>& g_h2l,
                                    const Array<float>& rgb,
                                    const Array<float>& depth) {
  Tape<float> t;
  FwdCtx frozen{false, false};
  Var<float> out = g_h2l.forward(t, t.leaf(rgb), t.leaf(depth), frozen);
  return Array<float>(out.shape(), out.val());
}

}  // namespace

// ---- guidance pre-training ----

TrainHistory train_guidance(nets::GuidanceNet<float>& f_rgb, const FrameStore& data,
                            const PhaseConfig& cfg, const std::string& log_csv) {
  cfg.validate();
  const auto& idx_a = data.split_indices(Split::TrainA);
  const auto& idx_b = data.split_indices(Split::TrainB);
  require(!idx_a.empty() && !idx_b.empty(),
          "train_guidance: empty training split");

  std::vector<ad::Parameter<float>*> params;
  f_rgb.collect(params);
  Rng rng(mix_seed(cfg.seed, 0x90d4));
  TrainHistory hist;
  hist.columns = {"loss"};
  CsvLog log(log_csv, hist.columns);

  for (long it = 0; it < cfg.iterations; ++it) {
    double lr = lr_at(cfg.lr, it);
    Tape<float> tape;
    FwdCtx ctx{true, true};
    Var<float> total = tape.scalar(0.0f);
    // Half the batch from each domain, matching encoder per domain.
    for (int b = 0; b < cfg.batch; ++b) {
      bool source = b % 2 == 0;
      const StoredFrame& f =
          data.frames()[size_t(pick(source ? idx_a : idx_b, rng, "guidance"))];
      Xform xf = draw_xform(data.lq_width(), data.lq_height(), cfg.augment, rng);
      Array<float> rgb = rgb_to_array(f.rgb_lq, xf);
      Array<float> target = depth_to_array(source ? f.lq : f.hqdown, xf);
      Var<float> est = f_rgb.forward(tape, tape.leaf(rgb),
                                     source ? Domain::Source : Domain::Target, ctx);
      total = total + masked_l1(est, tape.leaf(target), defined_mask(target),
                                defined_count(target));
    }
    total = ad::mul_scalar(total, 1.0f / float(cfg.batch));
    tape.backward(total);
    ad::export_grads(tape, params);
    ad::adam_step(params, {lr, cfg.beta1, cfg.beta2, cfg.adam_eps, 0.0});

    double loss = double(total.scalar());
    check_finite({loss}, it);
    hist.g_steps += 1;
    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      hist.steps.push_back(it);
      hist.rows.push_back({loss});
      log.row(it, lr, {loss});
    }
  }
  return hist;
}

// ---- unpaired translation ----

void TranslationNets::init(const nets::NetworkConfig& cfg, uint64_t seed) {
  g_h2l.init("g_h2l", cfg.generator);
  g_l2h.init("g_l2h", cfg.generator);
  nets::DiscriminatorConfig dd = cfg.discriminator;
  dd.in_channels = 1;
  nets::DiscriminatorConfig dn = cfg.discriminator;
  dn.in_channels = 3;
  d_depth_l.init("d_depth_l", dd);
  d_norm_l.init("d_norm_l", dn);
  d_depth_h.init("d_depth_h", dd);
  d_norm_h.init("d_norm_h", dn);
  g_h2l.init_params(mix_seed(seed, 1));
  g_l2h.init_params(mix_seed(seed, 2));
  d_depth_l.init_params(mix_seed(seed, 3));
  d_norm_l.init_params(mix_seed(seed, 4));
  d_depth_h.init_params(mix_seed(seed, 5));
  d_norm_h.init_params(mix_seed(seed, 6));
}

std::vector<ad::Parameter<float>*> TranslationNets::generator_params() {
  std::vector<ad::Parameter<float>*> ps;
  g_h2l.collect(ps);
  g_l2h.collect(ps);
  return ps;
}

std::vector<ad::Parameter<float>*> TranslationNets::discriminator_params() {
  std::vector<ad::Parameter<float>*> ps;
  d_depth_l.collect(ps);
  d_norm_l.collect(ps);
  d_depth_h.collect(ps);
  d_norm_h.collect(ps);
  return ps;
}

TrainHistory train_translation(TranslationNets& nets, const FrameStore& data,
                               const PhaseConfig& cfg, const std::string& log_csv) {
  cfg.validate();
  const auto& idx_a = data.split_indices(Split::TrainA);
  const auto& idx_b = data.split_indices(Split::TrainB);
  require(!idx_a.empty() && !idx_b.empty(),
          "train_translation: empty training split");

  LossWeights lw = LossWeights::preset(cfg.loss_preset);
  auto gen_params = nets.generator_params();
  auto disc_params = nets.discriminator_params();
  Rng rng(mix_seed(cfg.seed, 0x7a35));
  TrainHistory hist;
  hist.columns = {"cycle",  "range",  "idt",    "adv_depth_l",
                  "adv_norm_l", "adv_depth_h", "adv_norm_h", "d_total"};
  CsvLog log(log_csv, hist.columns);

  struct BatchArrays {
    Array<float> rgb_a, d_l, rgb_b, d_h;
  };
  auto draw_batch = [&](int n) {
    std::vector<BatchArrays> batch;
    batch.reserve(n);
    for (int b = 0; b < n; ++b) {
      const StoredFrame& fa = data.frames()[size_t(pick(idx_a, rng, "translation"))];
      Xform xa = draw_xform(data.lq_width(), data.lq_height(), cfg.augment, rng);
      const StoredFrame& fb = data.frames()[size_t(pick(idx_b, rng, "translation"))];
      Xform xb = draw_xform(data.lq_width(), data.lq_height(), cfg.augment, rng);
      batch.push_back({rgb_to_array(fa.rgb_lq, xa), depth_to_array(fa.lq, xa),
                       rgb_to_array(fb.rgb_lq, xb), depth_to_array(fb.hqdown, xb)});
    }
    return batch;
  };

  double last_cycle = 0, last_range = 0, last_idt = 0;
  double last_adv[4] = {0, 0, 0, 0};

  for (long it = 0; it < cfg.iterations; ++it) {
    double lr = lr_at(cfg.lr, it);

    // The last generator batch's fakes feed the discriminator update.
    std::vector<BatchArrays> d_batch;
    std::vector<Array<float>> fake_l, fake_h, rec_h;

    // generator updates, each on a fresh unpaired batch
    for (int r = 0; r < cfg.gd_ratio; ++r) {
      auto batch = draw_batch(cfg.batch);
      Tape<float> tape;
      FwdCtx gctx{true, true};
      FwdCtx dctx{true, false};  // gradients flow through, weights untouched
      Var<float> cycle = tape.scalar(0.0f), range = tape.scalar(0.0f),
                 idt = tape.scalar(0.0f);
      std::vector<Var<float>> adv(4, tape.scalar(0.0f));
      const bool last_round = r + 1 == cfg.gd_ratio;
      if (last_round) {
        fake_l.clear();
        fake_h.clear();
        rec_h.clear();
      }
      for (const auto& s : batch) {
        Var<float> rgb_a = tape.leaf(s.rgb_a), d_l = tape.leaf(s.d_l);
        Var<float> rgb_b = tape.leaf(s.rgb_b), d_h = tape.leaf(s.d_h);
        Var<float> d_h_deg = nets.g_h2l.forward(tape, rgb_b, d_h, gctx);
        Var<float> d_l_enh = nets.g_l2h.forward(tape, rgb_a, d_l, gctx);
        Var<float> d_h_rec = nets.g_l2h.forward(tape, rgb_b, d_h_deg, gctx);
        Var<float> g_idt = nets.g_l2h.forward(tape, rgb_b, d_h, gctx);

        cycle = cycle + cycle_loss(d_h, d_h_rec, s.d_h);
        range = range + range_loss(d_l, d_l_enh, d_h, d_h_deg, s.d_l, s.d_h,
                                   lw.range_l, lw.range_h);
        idt = idt + identity_loss(g_idt, d_h, s.d_h, lw.idt_h);
        adv[0] = adv[0] + lsgan_g_loss(nets.d_depth_l.forward(tape, d_h_deg, dctx));
        adv[1] = adv[1] + lsgan_g_loss(nets.d_norm_l.forward(
                              tape, differentiable_normals(d_h_deg), dctx));
        adv[2] = adv[2] + lsgan_g_loss(nets.d_depth_h.forward(tape, d_l_enh, dctx));
        adv[3] = adv[3] + lsgan_g_loss(nets.d_norm_h.forward(
                              tape, differentiable_normals(d_l_enh), dctx));
        if (last_round) {
          fake_l.emplace_back(d_h_deg.shape(), d_h_deg.val());
          fake_h.emplace_back(d_l_enh.shape(), d_l_enh.val());
          rec_h.emplace_back(d_h_rec.shape(), d_h_rec.val());
        }
      }
      float inv_b = 1.0f / float(cfg.batch);
      TranslationLossParts<float> parts;
      parts.cycle = ad::mul_scalar(cycle, inv_b);
      parts.range = ad::mul_scalar(range, inv_b);
      parts.idt = ad::mul_scalar(idt, inv_b);
      for (auto& a : adv) parts.adv_g.push_back(ad::mul_scalar(a, inv_b));
      Var<float> total = translation_total_loss(parts, lw);
      tape.backward(total);
      ad::export_grads(tape, gen_params);
      ad::adam_step(gen_params,
                    {lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.gen_weight_decay});
      hist.g_steps += 1;

      last_cycle = parts.cycle.scalar();
      last_range = parts.range.scalar();
      last_idt = parts.idt.scalar();
      for (int i = 0; i < 4; ++i) last_adv[i] = parts.adv_g[i].scalar();
      if (last_round) d_batch = std::move(batch);
    }

    // discriminator update; fakes come from the last generator batch, and
    // the target-depth discriminator sees the reconstruction in place of
    // the real sample.
    double d_total_val = 0;
    {
      const auto& batch = d_batch;
      Tape<float> tape;
      FwdCtx dctx{true, true};
      Var<float> d_total = tape.scalar(0.0f);
      for (size_t b = 0; b < batch.size(); ++b) {
        Var<float> real_l = tape.leaf(batch[b].d_l);
        Var<float> real_h = tape.leaf(batch[b].d_h);
        Var<float> f_l = tape.leaf(fake_l[b]);
        Var<float> f_h = tape.leaf(fake_h[b]);
        Var<float> r_h = tape.leaf(rec_h[b]);
        d_total = d_total + lsgan_d_loss(nets.d_depth_l.forward(tape, real_l, dctx),
                                         nets.d_depth_l.forward(tape, f_l, dctx));
        d_total = d_total +
                  lsgan_d_loss(nets.d_norm_l.forward(
                                   tape, differentiable_normals(real_l), dctx),
                               nets.d_norm_l.forward(
                                   tape, differentiable_normals(f_l), dctx));
        d_total = d_total + lsgan_d_loss(nets.d_depth_h.forward(tape, r_h, dctx),
                                         nets.d_depth_h.forward(tape, f_h, dctx));
        d_total = d_total +
                  lsgan_d_loss(nets.d_norm_h.forward(
                                   tape, differentiable_normals(real_h), dctx),
                               nets.d_norm_h.forward(
                                   tape, differentiable_normals(f_h), dctx));
      }
      d_total = ad::mul_scalar(d_total, 1.0f / float(batch.size()));
      tape.backward(d_total);
      ad::export_grads(tape, disc_params);
      ad::adam_step(disc_params, {lr, cfg.beta1, cfg.beta2, cfg.adam_eps, 0.0});
      hist.d_steps += 1;
      d_total_val = d_total.scalar();
    }

    std::vector<double> vals = {last_cycle,  last_range,  last_idt, last_adv[0],
                                last_adv[1], last_adv[2], last_adv[3], d_total_val};
    check_finite(vals, it);
    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      hist.steps.push_back(it);
      hist.rows.push_back(vals);
      log.row(it, lr, vals);
    }
  }
  return hist;
}

// ---- enhancement with pseudo-examples ----

namespace {

// Shared by train_enhancement (low resolution) and finetune_sr (full
// resolution with bicubic-upsampled inputs).
TrainHistory run_enhancement_loop(nets::EnhancementNet<float>& f_e,
                                  nets::GeneratorNet<float>& g_h2l,
                                  nets::GuidanceNet<float>& f_rgb,
                                  const FrameStore& data, const PhaseConfig& cfg,
                                  const std::string& log_csv, bool sr_mode) {
  cfg.validate();
  const auto& idx_a = data.split_indices(Split::TrainA);
  const auto& idx_b = data.split_indices(Split::TrainB);
  require(!idx_a.empty() && !idx_b.empty(), "enhancement: empty training split");

  LossWeights lw = LossWeights::preset(cfg.loss_preset);
  std::vector<ad::Parameter<float>*> params;
  f_e.collect(params);
  Rng rng(mix_seed(cfg.seed, sr_mode ? 0xf17e : 0xe4a));
  TrainHistory hist;
  hist.columns = {"loss_h", "loss_l", "total"};
  CsvLog log(log_csv, hist.columns);

  const int full_w = data.frames()[0].hq.width;
  const int full_h = data.frames()[0].hq.height;
  const int res_w = sr_mode ? full_w : data.lq_width();
  const int res_h = sr_mode ? full_h : data.lq_height();
  const int sr_factor = full_w / data.lq_width();

  const int n_pseudo = cfg.batch - cfg.batch / 2;
  const int n_real = cfg.batch / 2;

  for (long it = 0; it < cfg.iterations; ++it) {
    double lr = lr_at(cfg.lr, it);
    Tape<float> tape;
    FwdCtx ctx{true, true};
    Var<float> loss_h = tape.scalar(0.0f), loss_l = tape.scalar(0.0f);

    for (int b = 0; b < n_pseudo; ++b) {
      const StoredFrame& f = data.frames()[size_t(pick(idx_b, rng, "enhancement"))];
      Xform xf = draw_xform(res_w, res_h, cfg.augment, rng);
      Array<float> rgb = rgb_to_array(sr_mode ? f.rgb : f.rgb_lq, xf);
      Array<float> d_h = depth_to_array(sr_mode ? f.hq : f.hqdown, xf);
      Array<float> input = degrade_with_generator(g_h2l, rgb, d_h);
      augment_holes_tensor(input, rng, cfg.hole_aug_prob);
      Array<float> guide = guidance_estimate(f_rgb, rgb, Domain::Target);
      Var<float> dhat = f_e.forward(tape, tape.leaf(rgb), tape.leaf(input),
                                    tape.leaf(guide), ctx);
      loss_h = loss_h + enhancement_pseudo_loss(dhat, tape.leaf(d_h), input, d_h, lw);
    }

    for (int b = 0; b < n_real; ++b) {
      const StoredFrame& f = data.frames()[size_t(pick(idx_a, rng, "enhancement"))];
      Xform xf = draw_xform(res_w, res_h, cfg.augment, rng);
      Array<float> rgb = rgb_to_array(sr_mode ? f.rgb : f.rgb_lq, xf);
      Array<float> target;
      if (sr_mode) {
        DepthMap up = bicubic_upsample(f.lq, sr_factor);
        require(up.width == f.rgb.width && up.height == f.rgb.height,
                "finetune_sr: upsampled depth does not match rgb resolution");
        target = depth_to_array(up, xf);
      } else {
        target = depth_to_array(f.lq, xf);
      }
      Array<float> input = target;
      augment_holes_tensor(input, rng, cfg.hole_aug_prob);
      Array<float> guide = guidance_estimate(f_rgb, rgb, Domain::Source);
      Var<float> dhat = f_e.forward(tape, tape.leaf(rgb), tape.leaf(input),
                                    tape.leaf(guide), ctx);
      loss_l = loss_l + enhancement_self_loss(dhat, tape.leaf(target), input,
                                              target, gray_from_rgb(rgb), lw);
    }

    loss_h = ad::mul_scalar(loss_h, 1.0f / float(n_pseudo));
    if (n_real > 0) loss_l = ad::mul_scalar(loss_l, 1.0f / float(n_real));
    Var<float> total = loss_h + loss_l;
    tape.backward(total);
    ad::export_grads(tape, params);
    ad::adam_step(params, {lr, cfg.beta1, cfg.beta2, cfg.adam_eps, 0.0});
    hist.g_steps += 1;

    std::vector<double> vals = {double(loss_h.scalar()), double(loss_l.scalar()),
                                double(total.scalar())};
    check_finite(vals, it);
    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      hist.steps.push_back(it);
      hist.rows.push_back(vals);
      log.row(it, lr, vals);
    }
  }
  return hist;
}

}  // namespace

TrainHistory train_enhancement(nets::EnhancementNet<float>& f_e,
                               nets::GeneratorNet<float>& g_h2l_frozen,
                               nets::GuidanceNet<float>& f_rgb_frozen,
                               const FrameStore& data, const PhaseConfig& cfg,
                               const std::string& log_csv) {
  return run_enhancement_loop(f_e, g_h2l_frozen, f_rgb_frozen, data, cfg, log_csv,
                              /*sr_mode=*/false);
}

TrainHistory finetune_sr(nets::EnhancementNet<float>& f_e,
                         nets::GeneratorNet<float>& g_h2l_frozen,
                         nets::GuidanceNet<float>& f_rgb_frozen,
                         const FrameStore& data, const PhaseConfig& cfg,
                         const std::string& log_csv) {
  require(data.frames()[0].hq.width > data.lq_width(),
          "finetune_sr: dataset has no resolution gap to super-resolve");
  return run_enhancement_loop(f_e, g_h2l_frozen, f_rgb_frozen, data, cfg, log_csv,
                              /*sr_mode=*/true);
}

// ---- inference ----

DepthMap infer(nets::EnhancementNet<float>& f_e, nets::GuidanceNet<float>& f_rgb,
               const RgbImage& rgb, const DepthMap& depth_lq, int factor) {
  require(factor == 1 || factor == 2, "infer: factor must be 1 or 2",
          ErrorKind::Usage);
  DepthMap d = factor == 1 ? depth_lq : bicubic_upsample(depth_lq, factor);
  require(d.width == rgb.width && d.height == rgb.height,
          "infer: rgb resolution does not match " + std::to_string(factor) +
              "x upsampled depth");

  Xform xf = plain_xform(d.width, d.height);
  Array<float> rgb_arr = rgb_to_array(rgb, xf);
  Array<float> d_arr = depth_to_array(d, xf);
  Array<float> guide = guidance_estimate(f_rgb, rgb_arr, Domain::Source);

  Tape<float> tape;
  FwdCtx frozen{false, false};
  Var<float> out = f_e.forward(tape, tape.leaf(rgb_arr), tape.leaf(d_arr),
                               tape.leaf(guide), frozen);
  return array_to_depth(Array<float>(out.shape(), out.val()));
}

// ---- evaluation ----

ErrorReport evaluate_enhancement(nets::EnhancementNet<float>& f_e,
                                 nets::GuidanceNet<float>& f_rgb,
                                 const FrameStore& data, Split split) {
  MetricAccumulator acc;
  for (int i : data.split_indices(split)) {
    const StoredFrame& f = data.frames()[size_t(i)];
    DepthMap pred = infer(f_e, f_rgb, f.rgb_lq, f.lq, 1);
    acc.add(pred, f.hqdown, f.lq);
  }
  return acc.finalize();
}

ErrorReport baseline_enhancement(const FrameStore& data, Split split) {
  MetricAccumulator acc;
  for (int i : data.split_indices(split)) {
    const StoredFrame& f = data.frames()[size_t(i)];
    acc.add(f.lq, f.hqdown, f.lq);
  }
  return acc.finalize();
}

ErrorReport evaluate_sr(nets::EnhancementNet<float>& f_e,
                        nets::GuidanceNet<float>& f_rgb, const FrameStore& data,
                        Split split) {
  MetricAccumulator acc;
  for (int i : data.split_indices(split)) {
    const StoredFrame& f = data.frames()[size_t(i)];
    int factor = f.hq.width / f.lq.width;
    DepthMap pred = infer(f_e, f_rgb, f.rgb, f.lq, factor);
    acc.add(pred, f.hq, bicubic_upsample(f.lq, factor));
  }
  return acc.finalize();
}

ErrorReport baseline_sr_bicubic(const FrameStore& data, Split split) {
  MetricAccumulator acc;
  for (int i : data.split_indices(split)) {
    const StoredFrame& f = data.frames()[size_t(i)];
    int factor = f.hq.width / f.lq.width;
    DepthMap up = bicubic_upsample(f.lq, factor);
    acc.add(up, f.hq, up);
  }
  return acc.finalize();
}

}  // namespace udsr
