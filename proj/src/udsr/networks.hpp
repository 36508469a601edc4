#pragma once

// Micro-scale realizations of the four network families. Widths and block
// counts are configuration; the paper-scale presets differ only in numbers.

#include <memory>
#include <string>
#include <vector>

#include "udsr/nn.hpp"

namespace udsr::nets {

using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Var;

enum class NormKind { None, Group, Instance };
enum class Act { None, Relu, LeakyRelu, Sigmoid };
enum class Domain { Source, Target };

struct FwdCtx {
  bool train = true;      // update spectral-norm power iteration vectors
  bool trainable = true;  // request weight gradients
};

struct GeneratorConfig {
  int base_width = 16;
  int res_blocks = 3;  // paper scale: 9
  bool identity_init = true;
  int groupnorm_groups = 8;
};

struct DiscriminatorConfig {
  int in_channels = 1;  // 1 for depth, 3 for normals
  int base_width = 16;
};

struct GuidanceConfig {
  int base_width = 16;
  int res_blocks = 2;  // paper scale: 6
};

struct EnhancementConfig {
  int base_width = 16;
  int feature_channels = 8;
};

struct NetworkConfig {
  int schema_version = 1;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  GuidanceConfig guidance;
  EnhancementConfig enhancement;

  static NetworkConfig from_json(const std::string& json_text);
  static NetworkConfig load(const std::string& path);
  std::string to_json() const;
};

// ---- layer toolkit ----

template <typename T>
struct ConvLayer {
  Parameter<T> w, b;
  int stride = 1, pad = 1, k = 3;
  bool spectral = false;

  void init(const std::string& name, int in_c, int out_c, int kernel,
            int stride_, int pad_, bool spectral_) {
    k = kernel;
    stride = stride_;
    pad = pad_;
    spectral = spectral_;
    w.init(name + ".w", Shape{out_c, in_c, k, k}, ad::ParamRole::ConvWeight);
    b.init(name + ".b", Shape{1, out_c, 1, 1}, ad::ParamRole::Bias);
    w.spectral = spectral_;
  }

  Var<T> forward(Tape<T>& t, Var<T> x, const FwdCtx& ctx) {
    Var<T> wv = spectral ? ad::spectral_norm(t, w, 1, ctx.train, ctx.trainable)
                         : ad::use(t, w, ctx.trainable);
    Var<T> bv = ad::use(t, b, ctx.trainable);
    return ad::conv2d(x, wv, bv, stride, pad);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct ConvBlock {
  ConvLayer<T> conv;
  NormKind norm = NormKind::None;
  int groups = 1;
  Parameter<T> gain, shift;
  Act act = Act::Relu;

  void init(const std::string& name, int in_c, int out_c, int kernel,
            int stride, NormKind norm_, int groups_, Act act_,
            bool spectral = false) {
    conv.init(name, in_c, out_c, kernel, stride, /*pad=*/1, spectral);
    norm = norm_;
    act = act_;
    groups = norm_ == NormKind::Instance ? out_c : groups_;
    if (norm != NormKind::None) {
      require(out_c % groups == 0, "conv block '" + name +
                                       "': channels not divisible by groups");
      gain.init(name + ".gain", Shape{1, out_c, 1, 1}, ad::ParamRole::Gain);
      shift.init(name + ".shift", Shape{1, out_c, 1, 1}, ad::ParamRole::Shift);
    }
  }

  Var<T> forward(Tape<T>& t, Var<T> x, const FwdCtx& ctx) {
    Var<T> y = conv.forward(t, x, ctx);
    if (norm != NormKind::None)
      y = ad::group_norm(y, groups, ad::use(t, gain, ctx.trainable),
                         ad::use(t, shift, ctx.trainable));
    switch (act) {
      case Act::None: break;
      case Act::Relu: y = ad::relu(y); break;
      case Act::LeakyRelu: y = ad::leaky_relu(y, T(0.2)); break;
      case Act::Sigmoid: y = ad::sigmoid(y); break;
    }
    return y;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    conv.collect(out);
    if (norm != NormKind::None) {
      out.push_back(&gain);
      out.push_back(&shift);
    }
  }
};

template <typename T>
struct ResBlock {
  ConvBlock<T> c0, c1;

  void init(const std::string& name, int ch, NormKind norm, int groups) {
    c0.init(name + ".c0", ch, ch, 3, 1, norm, groups, Act::Relu);
    c1.init(name + ".c1", ch, ch, 3, 1, norm, groups, Act::None);
  }

  Var<T> forward(Tape<T>& t, Var<T> x, const FwdCtx& ctx) {
    return x + c1.forward(t, c0.forward(t, x, ctx), ctx);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    c0.collect(out);
    c1.collect(out);
  }
};

// Three-level U-Net with skip connections; the head emits 1-channel
// pre-activation logits. Spatial extents must be divisible by 4.
template <typename T>
struct UNet {
  ConvBlock<T> e0a, e0b, e1a, e1b, e2a, e2b;
  ConvBlock<T> d1a, d1b, d0a, d0b;
  ConvLayer<T> head;

  void init(const std::string& name, int in_c, int width, NormKind norm,
            int groups) {
    int w = width;
    e0a.init(name + ".e0a", in_c, w, 3, 1, norm, groups, Act::Relu);
    e0b.init(name + ".e0b", w, w, 3, 1, norm, groups, Act::Relu);
    e1a.init(name + ".e1a", w, 2 * w, 3, 2, norm, groups, Act::Relu);
    e1b.init(name + ".e1b", 2 * w, 2 * w, 3, 1, norm, groups, Act::Relu);
    e2a.init(name + ".e2a", 2 * w, 4 * w, 3, 2, norm, groups, Act::Relu);
    e2b.init(name + ".e2b", 4 * w, 4 * w, 3, 1, norm, groups, Act::Relu);
    d1a.init(name + ".d1a", 4 * w, 2 * w, 3, 1, norm, groups, Act::Relu);
    d1b.init(name + ".d1b", 4 * w, 2 * w, 3, 1, norm, groups, Act::Relu);
    d0a.init(name + ".d0a", 2 * w, w, 3, 1, norm, groups, Act::Relu);
    d0b.init(name + ".d0b", 2 * w, w, 3, 1, norm, groups, Act::Relu);
    head.init(name + ".head", w, 1, 3, 1, 1, false);
  }

  Var<T> forward(Tape<T>& t, Var<T> x, const FwdCtx& ctx) {
    Shape s = x.shape();
    require(s.h % 4 == 0 && s.w % 4 == 0,
            "unet: spatial extents must be divisible by 4, got " + s.str());
    auto s0 = e0b.forward(t, e0a.forward(t, x, ctx), ctx);
    auto s1 = e1b.forward(t, e1a.forward(t, s0, ctx), ctx);
    auto s2 = e2b.forward(t, e2a.forward(t, s1, ctx), ctx);
    auto u1 = d1a.forward(t, ad::upsample_nearest2(s2), ctx);
    u1 = d1b.forward(t, ad::concat_c<T>({u1, s1}), ctx);
    auto u0 = d0a.forward(t, ad::upsample_nearest2(u1), ctx);
    u0 = d0b.forward(t, ad::concat_c<T>({u0, s0}), ctx);
    return head.forward(t, u0, ctx);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    e0a.collect(out);
    e0b.collect(out);
    e1a.collect(out);
    e1b.collect(out);
    e2a.collect(out);
    e2b.collect(out);
    d1a.collect(out);
    d1b.collect(out);
    d0a.collect(out);
    d0b.collect(out);
    head.collect(out);
  }
};

// ---- translation generator ----
// Separate RGB/depth encoders, concatenated features through ResNet blocks,
// decoder emits a residual added to the input depth in pre-sigmoid space.
// Zero-initializing the head makes the initial mapping the identity (up to
// the [1e-3, 1-1e-3] clamp), which is the identity warm start.

template <typename T>
struct GeneratorNet {
  GeneratorConfig cfg;
  ConvBlock<T> rgb0, rgb1, dep0, dep1;
  std::vector<ResBlock<T>> blocks;
  ConvBlock<T> up0;
  ConvLayer<T> head;

  void init(const std::string& name, const GeneratorConfig& c) {
    cfg = c;
    int w = c.base_width;
    int g = c.groupnorm_groups;
    require(w % 2 == 0, "generator width must be even");
    rgb0.init(name + ".rgb0", 3, w / 2, 3, 1, NormKind::Group, std::min(g, w / 2), Act::Relu);
    rgb1.init(name + ".rgb1", w / 2, w, 3, 2, NormKind::Group, g, Act::Relu);
    dep0.init(name + ".dep0", 1, w / 2, 3, 1, NormKind::Group, std::min(g, w / 2), Act::Relu);
    dep1.init(name + ".dep1", w / 2, w, 3, 2, NormKind::Group, g, Act::Relu);
    blocks.resize(c.res_blocks);
    for (int i = 0; i < c.res_blocks; ++i)
      blocks[i].init(name + ".res" + std::to_string(i), 2 * w, NormKind::Group, g);
    up0.init(name + ".up0", 2 * w, w, 3, 1, NormKind::Group, g, Act::Relu);
    head.init(name + ".head", w, 1, 3, 1, 1, false);
  }

  Var<T> forward(Tape<T>& t, Var<T> rgb, Var<T> depth, const FwdCtx& ctx) {
    Shape rs = rgb.shape(), ds = depth.shape();
    require(rs.h == ds.h && rs.w == ds.w && rs.n == ds.n,
            "generator: rgb/depth resolution mismatch");
    require(rs.c == 3 && ds.c == 1, "generator: expected 3-channel rgb, 1-channel depth");
    require(ds.h % 2 == 0 && ds.w % 2 == 0,
            "generator: spatial extents must be even");
    auto fr = rgb1.forward(t, rgb0.forward(t, rgb, ctx), ctx);
    auto fd = dep1.forward(t, dep0.forward(t, depth, ctx), ctx);
    auto f = ad::concat_c<T>({fr, fd});
    for (auto& b : blocks) f = b.forward(t, f, ctx);
    auto u = up0.forward(t, ad::upsample_nearest2(f), ctx);
    auto residual = head.forward(t, u, ctx);
    auto dc = ad::clamp_v(depth, T(1e-3), T(1) - T(1e-3));
    auto pre = ad::log_v(dc) - ad::log_v(ad::add_scalar(ad::neg(dc), T(1)));
    return ad::sigmoid(pre + residual);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    rgb0.collect(out);
    rgb1.collect(out);
    dep0.collect(out);
    dep1.collect(out);
    for (auto& b : blocks) b.collect(out);
    up0.collect(out);
    head.collect(out);
  }

  void init_params(uint64_t seed) {
    std::vector<Parameter<T>*> ps;
    collect(ps);
    ad::xavier_init(ps, seed);
    if (cfg.identity_init) {
      std::fill(head.w.value.v.begin(), head.w.value.v.end(), T(0));
      std::fill(head.b.value.v.begin(), head.b.value.v.end(), T(0));
    }
  }
};

// ---- patch discriminator ----
// Strided conv stack with spectral normalization on every weight and no
// feature normalization; linear patch scores (LSGAN). With base width W the
// stack is k4s2(in->W), k4s2(W->2W), k4s1(2W->4W), k4s1(4W->1), so a
// 64x64 input yields a 14x14 score map.

template <typename T>
struct DiscriminatorNet {
  DiscriminatorConfig cfg;
  ConvLayer<T> c0, c1, c2, c3;

  void init(const std::string& name, const DiscriminatorConfig& c) {
    cfg = c;
    int w = c.base_width;
    c0.init(name + ".c0", c.in_channels, w, 4, 2, 1, true);
    c1.init(name + ".c1", w, 2 * w, 4, 2, 1, true);
    c2.init(name + ".c2", 2 * w, 4 * w, 4, 1, 1, true);
    c3.init(name + ".c3", 4 * w, 1, 4, 1, 1, true);
  }

  Var<T> forward(Tape<T>& t, Var<T> x, const FwdCtx& ctx) {
    require(x.shape().c == cfg.in_channels,
            "discriminator: expected " + std::to_string(cfg.in_channels) +
                " input channels, got " + std::to_string(x.shape().c));
    auto y = ad::leaky_relu(c0.forward(t, x, ctx), T(0.2));
    y = ad::leaky_relu(c1.forward(t, y, ctx), T(0.2));
    y = ad::leaky_relu(c2.forward(t, y, ctx), T(0.2));
    return c3.forward(t, y, ctx);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    c0.collect(out);
    c1.collect(out);
    c2.collect(out);
    c3.collect(out);
  }

  void init_params(uint64_t seed) {
    std::vector<Parameter<T>*> ps;
    collect(ps);
    ad::xavier_init(ps, seed);
  }
};

// ---- image guidance network ----
// Per-domain feature extractor (2 downsampling blocks, R ResNet blocks,
// 2 upsampling blocks) with a shared U-Net depth predictor; InstanceNorm
// in both parts.

template <typename T>
struct FeatureExtractor {
  ConvBlock<T> in0, down1, down2;
  std::vector<ResBlock<T>> res;
  ConvBlock<T> up1, up2;

  void init(const std::string& name, int width, int res_blocks) {
    int w = width;
    in0.init(name + ".in0", 3, w, 3, 1, NormKind::Instance, 1, Act::Relu);
    down1.init(name + ".down1", w, 2 * w, 3, 2, NormKind::Instance, 1, Act::Relu);
    down2.init(name + ".down2", 2 * w, 2 * w, 3, 2, NormKind::Instance, 1, Act::Relu);
    res.resize(res_blocks);
    for (int i = 0; i < res_blocks; ++i)
      res[i].init(name + ".res" + std::to_string(i), 2 * w, NormKind::Instance, 1);
    up1.init(name + ".up1", 2 * w, 2 * w, 3, 1, NormKind::Instance, 1, Act::Relu);
    up2.init(name + ".up2", 2 * w, w, 3, 1, NormKind::Instance, 1, Act::Relu);
  }

  Var<T> forward(Tape<T>& t, Var<T> rgb, const FwdCtx& ctx) {
    Shape s = rgb.shape();
    require(s.h % 4 == 0 && s.w % 4 == 0,
            "feature extractor: spatial extents must be divisible by 4");
    auto y = in0.forward(t, rgb, ctx);
    y = down1.forward(t, y, ctx);
    y = down2.forward(t, y, ctx);
    for (auto& r : res) y = r.forward(t, y, ctx);
    y = up1.forward(t, ad::upsample_nearest2(y), ctx);
    y = up2.forward(t, ad::upsample_nearest2(y), ctx);
    return y;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    in0.collect(out);
    down1.collect(out);
    down2.collect(out);
    for (auto& r : res) r.collect(out);
    up1.collect(out);
    up2.collect(out);
  }
};

template <typename T>
struct GuidanceNet {
  GuidanceConfig cfg;
  FeatureExtractor<T> enc_src, enc_tgt;
  UNet<T> decoder;

  void init(const std::string& name, const GuidanceConfig& c) {
    cfg = c;
    enc_src.init(name + ".enc_src", c.base_width, c.res_blocks);
    enc_tgt.init(name + ".enc_tgt", c.base_width, c.res_blocks);
    decoder.init(name + ".unet", c.base_width, c.base_width, NormKind::Instance, 1);
  }

  Var<T> forward(Tape<T>& t, Var<T> rgb, Domain domain, const FwdCtx& ctx) {
    auto& enc = domain == Domain::Source ? enc_src : enc_tgt;
    return ad::sigmoid(decoder.forward(t, enc.forward(t, rgb, ctx), ctx));
  }

  void collect(std::vector<Parameter<T>*>& out) {
    enc_src.collect(out);
    enc_tgt.collect(out);
    decoder.collect(out);
  }

  void init_params(uint64_t seed) {
    std::vector<Parameter<T>*> ps;
    collect(ps);
    ad::xavier_init(ps, seed);
  }
};

// ---- enhancement network ----
// Vanilla U-Net over (rgb, depth, guidance depth, rgb features, depth
// features) ending in a sigmoid; the two-layer conv feature extractors
// train with it.

template <typename T>
struct EnhancementNet {
  EnhancementConfig cfg;
  ConvLayer<T> rgb_fx0, rgb_fx1, dep_fx0, dep_fx1;
  UNet<T> unet;

  void init(const std::string& name, const EnhancementConfig& c) {
    cfg = c;
    int f = c.feature_channels;
    rgb_fx0.init(name + ".rgb_fx0", 3, f, 3, 1, 1, false);
    rgb_fx1.init(name + ".rgb_fx1", f, f, 3, 1, 1, false);
    dep_fx0.init(name + ".dep_fx0", 1, f, 3, 1, 1, false);
    dep_fx1.init(name + ".dep_fx1", f, f, 3, 1, 1, false);
    // No feature normalization: the net regresses absolute depth, which
    // per-sample statistics would erase.
    unet.init(name + ".unet", 3 + 1 + 1 + 2 * f, c.base_width, NormKind::None, 1);
  }

  Var<T> extract_rgb_features(Tape<T>& t, Var<T> rgb, const FwdCtx& ctx) {
    return rgb_fx1.forward(t, ad::relu(rgb_fx0.forward(t, rgb, ctx)), ctx);
  }
  Var<T> extract_depth_features(Tape<T>& t, Var<T> depth, const FwdCtx& ctx) {
    return dep_fx1.forward(t, ad::relu(dep_fx0.forward(t, depth, ctx)), ctx);
  }

  Var<T> forward_with_features(Tape<T>& t, Var<T> rgb, Var<T> depth,
                               Var<T> guidance, Var<T> rgb_features,
                               Var<T> depth_features, const FwdCtx& ctx) {
    Shape rs = rgb.shape(), ds = depth.shape(), gs = guidance.shape();
    require(rs.h == ds.h && rs.w == ds.w && gs.h == ds.h && gs.w == ds.w,
            "enhancement: inputs must share spatial resolution");
    auto x = ad::concat_c<T>({rgb, depth, guidance, rgb_features, depth_features});
    auto logits = unet.forward(t, x, ctx);
    // The depth channel feeds the output logits directly (scaled, centered),
    // giving the decoder a magnitude path that survives the bottleneck.
    // Bounded to [-2, 2] so the sigmoid never starts saturated.
    auto inject = ad::mul_scalar(ad::add_scalar(depth, T(-0.5)), T(4));
    return ad::sigmoid(logits + inject);
  }

  Var<T> forward(Tape<T>& t, Var<T> rgb, Var<T> depth, Var<T> guidance,
                 const FwdCtx& ctx) {
    auto rf = extract_rgb_features(t, rgb, ctx);
    auto df = extract_depth_features(t, depth, ctx);
    return forward_with_features(t, rgb, depth, guidance, rf, df, ctx);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    rgb_fx0.collect(out);
    rgb_fx1.collect(out);
    dep_fx0.collect(out);
    dep_fx1.collect(out);
    unet.collect(out);
  }

  void init_params(uint64_t seed) {
    std::vector<Parameter<T>*> ps;
    collect(ps);
    ad::xavier_init(ps, seed);
  }
};

}  // namespace udsr::nets
