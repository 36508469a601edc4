#pragma once

// The training losses: weighted depth terms, perceptual surface terms,
// boundary and smoothness regularizers, the unpaired translation objective
// and the LSGAN pieces. Everything is built from tape ops so each loss
// carries its analytic gradient.

#include <array>
#include <string>
#include <vector>

#include "udsr/ad.hpp"

namespace udsr {

// Per-pixel weight chosen by the input-depth hole mask: first number for
// pixels with depth, second for holes.
struct WeightMask {
  double w_defined = 1.0;
  double w_hole = 1.0;
};

struct LossWeights {
  // translation objective
  double cycle_h = 5, range_l = 2, range_h = 1, idt_h = 1;
  // pseudo-supervised enhancement loss (targets from H)
  double depth1_h = 15, depth2_h = 10;
  WeightMask w_depth1_h{1, 30}, w_depth2_h{0, 20};
  double surf1_h = 3, surf2_h = 3;
  WeightMask w_surf1_h{1, 5}, w_surf2_h{1, 5};
  double smooth_h = 2e-7;
  // self-supervised enhancement loss (targets from L)
  double depth1_l = 40, depth2_l = 20;
  WeightMask w_depth1_l{1, 40}, w_depth2_l{0, 20};
  double smooth_l = 2e-7;
  double edge_l = 1;

  static LossWeights preset(const std::string& name);
  static std::vector<std::string> preset_names();
  static LossWeights from_json(const std::string& json_text);
  std::string to_json() const;
};

// ---- weight-map construction ----
// Weights follow the (augmented) input depth's holes; pixels whose real
// target is undefined are excluded (weight 0).

template <typename T>
ad::Array<T> weight_map(const ad::Array<T>& input_depth, const WeightMask& wm,
                        const ad::Array<T>* target_depth = nullptr) {
  ad::Array<T> w(input_depth.shape);
  for (size_t i = 0; i < w.count(); ++i) {
    w[i] = input_depth[i] > T(0) ? T(wm.w_defined) : T(wm.w_hole);
    if (target_depth && (*target_depth)[i] <= T(0)) w[i] = T(0);
  }
  return w;
}

template <typename T>
ad::Array<T> defined_mask(const ad::Array<T>& depth) {
  ad::Array<T> m(depth.shape);
  for (size_t i = 0; i < m.count(); ++i) m[i] = depth[i] > T(0) ? T(1) : T(0);
  return m;
}

template <typename T>
size_t defined_count(const ad::Array<T>& depth) {
  size_t n = 0;
  for (size_t i = 0; i < depth.count(); ++i)
    if (depth[i] > T(0)) ++n;
  return n;
}

// Weight map on the normal grid (h-1, w-1). A target stencil containing a
// hole makes the target normal meaningless, so such pixels are excluded.
template <typename T>
ad::Array<T> normal_grid_weight_map(const ad::Array<T>& input_depth,
                                    const WeightMask& wm,
                                    const ad::Array<T>* target_depth = nullptr) {
  ad::Shape s = input_depth.shape;
  require(s.h >= 2 && s.w >= 2, "normal_grid_weight_map: spatial extent < 2x2");
  ad::Shape so{s.n, 1, s.h - 1, s.w - 1};
  ad::Array<T> w(so);
  auto at = [&](const ad::Array<T>& a, int n, int y, int x) {
    return a[(size_t(n) * s.h + y) * s.w + x];
  };
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y + 1 < s.h; ++y)
      for (int x = 0; x + 1 < s.w; ++x) {
        T v = at(input_depth, n, y, x) > T(0) ? T(wm.w_defined) : T(wm.w_hole);
        if (target_depth) {
          bool tgt_ok = at(*target_depth, n, y, x) > T(0) &&
                        at(*target_depth, n, y, x + 1) > T(0) &&
                        at(*target_depth, n, y + 1, x) > T(0);
          if (!tgt_ok) v = T(0);
        }
        w[(size_t(n) * so.h + y) * so.w + x] = v;
      }
  return w;
}

// ---- differentiable pieces ----

// Height-field normals from a normalized ([0,1]) depth tensor [n,1,h,w];
// output [n,3,h-1,w-1], channels (nx, ny, nz).
template <typename T>
ad::Var<T> differentiable_normals(ad::Var<T> depth) {
  ad::Shape s = depth.shape();
  require(s.c == 1, "differentiable_normals: depth must be 1-channel");
  require(s.h >= 2 && s.w >= 2, "differentiable_normals: extent < 2x2");
  auto zx = ad::crop(ad::grad_h(depth), 0, 0, s.w - 1, s.h - 1);
  auto zy = ad::crop(ad::grad_v(depth), 0, 0, s.w - 1, s.h - 1);
  auto one = depth.tape->constant(zx.shape(), T(1));
  auto norm = ad::sqrt_v(ad::add_scalar(
      ad::square(zx) + ad::square(zy) + one, T(1e-12)));
  auto nx = ad::div(ad::neg(zx), norm);
  auto ny = ad::div(ad::neg(zy), norm);
  auto nz = ad::div(one, norm);
  return ad::concat_c<T>({nx, ny, nz});
}

// mean over defined pixels of |a - b|, the masked L1 used against real maps.
template <typename T>
ad::Var<T> masked_l1(ad::Var<T> a, ad::Var<T> b, const ad::Array<T>& mask01,
                     size_t n_defined) {
  ad::Tape<T>& t = *a.tape;
  auto m = t.leaf(mask01);
  auto s = ad::sum_all(m * ad::abs_v(a - b));
  return ad::mul_scalar(s, T(1) / T(std::max<size_t>(n_defined, 1)));
}

// ---- the individual losses ----

// lambda1 * mean(w1 . |pred-target|) + lambda2 * mean(w2 . (pred-target)^2),
// means over all pixels so lambdas stay resolution-independent.
template <typename T>
ad::Var<T> depth_loss(ad::Var<T> pred, ad::Var<T> target,
                      const ad::Array<T>& wmap1, const ad::Array<T>& wmap2,
                      double lambda1, double lambda2) {
  require(pred.shape() == target.shape(), "depth_loss: shape mismatch");
  ad::Tape<T>& t = *pred.tape;
  auto d = pred - target;
  auto w1 = t.leaf(wmap1);
  auto w2 = t.leaf(wmap2);
  auto l1 = ad::mul_scalar(ad::mean_all(w1 * ad::abs_v(d)), T(lambda1));
  auto l2 = ad::mul_scalar(ad::mean_all(w2 * ad::square(d)), T(lambda2));
  return l1 + l2;
}

// lambda_s1 * MAE_v + lambda_s2 * MSE_v with per-pixel weights on the
// normal grid; directions are the canonical basis, averaged over three.
template <typename T>
ad::Var<T> perceptual_surface_loss(ad::Var<T> pred, ad::Var<T> target,
                                   const ad::Array<T>& wmap1,
                                   const ad::Array<T>& wmap2, double lambda_s1,
                                   double lambda_s2) {
  ad::Shape s = pred.shape();
  require(s.h >= 2 && s.w >= 2, "perceptual_surface_loss: extent < 2x2");
  ad::Tape<T>& t = *pred.tape;
  auto dn = differentiable_normals(pred) - differentiable_normals(target);
  auto w1 = t.leaf(wmap1);
  auto w2 = t.leaf(wmap2);
  auto w1x3 = ad::concat_c<T>({w1, w1, w1});
  auto w2x3 = ad::concat_c<T>({w2, w2, w2});
  auto mae_v = ad::mean_all(w1x3 * ad::abs_v(dn));
  auto mse_v = ad::mean_all(w2x3 * ad::square(dn));
  return ad::mul_scalar(mae_v, T(lambda_s1)) + ad::mul_scalar(mse_v, T(lambda_s2));
}

// mean(|grad_h D| e^-|grad_h I|) + mean(|grad_v D| e^-|grad_v I|); the image
// attenuation is precomputed from grayscale luminance.
template <typename T>
ad::Var<T> boundary_loss(ad::Var<T> pred_depth, const ad::Array<T>& gray) {
  ad::Shape s = pred_depth.shape();
  require(gray.shape.n == s.n && gray.shape.h == s.h && gray.shape.w == s.w,
          "boundary_loss: image/depth size mismatch");
  ad::Tape<T>& t = *pred_depth.tape;

  ad::Array<T> eh(ad::Shape{s.n, 1, s.h, s.w - 1});
  ad::Array<T> ev(ad::Shape{s.n, 1, s.h - 1, s.w});
  for (int n = 0; n < s.n; ++n) {
    const T* g = gray.v.data() + size_t(n) * s.h * s.w;
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x + 1 < s.w; ++x)
        eh[(size_t(n) * s.h + y) * (s.w - 1) + x] =
            std::exp(-std::abs(g[size_t(y) * s.w + x + 1] - g[size_t(y) * s.w + x]));
    for (int y = 0; y + 1 < s.h; ++y)
      for (int x = 0; x < s.w; ++x)
        ev[(size_t(n) * (s.h - 1) + y) * s.w + x] =
            std::exp(-std::abs(g[size_t(y + 1) * s.w + x] - g[size_t(y) * s.w + x]));
  }
  auto lh = ad::mean_all(t.leaf(eh) * ad::abs_v(ad::grad_h(pred_depth)));
  auto lv = ad::mean_all(t.leaf(ev) * ad::abs_v(ad::grad_v(pred_depth)));
  return lh + lv;
}

// Total variation of the normal image: ||grad_h N||_2 + ||grad_v N||_2,
// each norm the root of summed squares over all pixels and channels.
template <typename T>
ad::Var<T> smoothness_loss(ad::Var<T> normals) {
  auto gh = ad::grad_h(normals);
  auto gv = ad::grad_v(normals);
  auto nh = ad::sqrt_v(ad::add_scalar(ad::sum_all(ad::square(gh)), T(1e-12)));
  auto nv = ad::sqrt_v(ad::add_scalar(ad::sum_all(ad::square(gv)), T(1e-12)));
  return nh + nv;
}

// L1 + MSE_v between a real target depth and its reconstruction, both terms
// with uniform weights; pixels with undefined target are excluded.
template <typename T>
ad::Var<T> cycle_loss(ad::Var<T> d_target, ad::Var<T> d_rec,
                      const ad::Array<T>& target_values) {
  ad::Tape<T>& t = *d_target.tape;
  auto mask = defined_mask(target_values);
  size_t nd = defined_count(target_values);
  auto l1 = masked_l1(d_rec, d_target, mask, nd);

  auto dn = differentiable_normals(d_rec) - differentiable_normals(d_target);
  WeightMask uniform{1, 1};
  auto nw = normal_grid_weight_map(target_values, uniform, &target_values);
  size_t nv = 0;
  for (size_t i = 0; i < nw.count(); ++i)
    if (nw[i] > T(0)) ++nv;
  auto nwv = t.leaf(nw);
  auto nw3 = ad::concat_c<T>({nwv, nwv, nwv});
  auto mse_v = ad::mul_scalar(ad::sum_all(nw3 * ad::square(dn)),
                              T(1) / T(3 * std::max<size_t>(nv, 1)));
  return l1 + mse_v;
}

// lambda_l * L1(enhanced, source) + lambda_h * L1(degraded, target), each L1
// over the defined pixels of the respective real map.
template <typename T>
ad::Var<T> range_loss(ad::Var<T> d_l, ad::Var<T> d_l_enh, ad::Var<T> d_h,
                      ad::Var<T> d_h_deg, const ad::Array<T>& l_values,
                      const ad::Array<T>& h_values, double lambda_l,
                      double lambda_h) {
  auto ml = masked_l1(d_l_enh, d_l, defined_mask(l_values), defined_count(l_values));
  auto mh = masked_l1(d_h_deg, d_h, defined_mask(h_values), defined_count(h_values));
  return ad::mul_scalar(ml, T(lambda_l)) + ad::mul_scalar(mh, T(lambda_h));
}

template <typename T>
ad::Var<T> identity_loss(ad::Var<T> translated, ad::Var<T> d_target,
                         const ad::Array<T>& target_values, double lambda_idt) {
  auto l1 = masked_l1(translated, d_target, defined_mask(target_values),
                      defined_count(target_values));
  return ad::mul_scalar(l1, T(lambda_idt));
}

// ---- LSGAN ----

template <typename T>
ad::Var<T> lsgan_d_loss(ad::Var<T> real_scores, ad::Var<T> fake_scores) {
  auto r = ad::mean_all(ad::square(ad::add_scalar(real_scores, T(-1))));
  auto f = ad::mean_all(ad::square(fake_scores));
  return ad::mul_scalar(r + f, T(0.5));
}

template <typename T>
ad::Var<T> lsgan_g_loss(ad::Var<T> fake_scores) {
  return ad::mean_all(ad::square(ad::add_scalar(fake_scores, T(-1))));
}

// ---- composed objectives ----

template <typename T>
struct TranslationLossParts {
  ad::Var<T> cycle;                   // unweighted
  ad::Var<T> range;                   // internally weighted
  ad::Var<T> idt;                     // internally weighted
  std::vector<ad::Var<T>> adv_g;      // generator LSGAN terms, unit weights
};

// Full generator-side objective:
// lambda_cycle * L_cycle + L_adv + L_idt + L_range.
template <typename T>
ad::Var<T> translation_total_loss(const TranslationLossParts<T>& parts,
                                  const LossWeights& lw) {
  auto total = ad::mul_scalar(parts.cycle, T(lw.cycle_h));
  for (const auto& a : parts.adv_g) total = total + a;
  return total + parts.idt + parts.range;
}

// L^H: depth + perceptual surface + smoothness on the prediction's normals.
// input_depth is the (hole-augmented) degraded input the weights follow.
template <typename T>
ad::Var<T> enhancement_pseudo_loss(ad::Var<T> dhat, ad::Var<T> target,
                                   const ad::Array<T>& input_depth,
                                   const ad::Array<T>& target_values,
                                   const LossWeights& lw) {
  auto w1 = weight_map(input_depth, lw.w_depth1_h, &target_values);
  auto w2 = weight_map(input_depth, lw.w_depth2_h, &target_values);
  auto l = depth_loss(dhat, target, w1, w2, lw.depth1_h, lw.depth2_h);
  auto s1 = normal_grid_weight_map(input_depth, lw.w_surf1_h, &target_values);
  auto s2 = normal_grid_weight_map(input_depth, lw.w_surf2_h, &target_values);
  l = l + perceptual_surface_loss(dhat, target, s1, s2, lw.surf1_h, lw.surf2_h);
  auto smooth = smoothness_loss(differentiable_normals(dhat));
  return l + ad::mul_scalar(smooth, T(lw.smooth_h));
}

// L^L: depth + boundary + smoothness; the target is the real source map.
template <typename T>
ad::Var<T> enhancement_self_loss(ad::Var<T> dhat, ad::Var<T> target,
                                 const ad::Array<T>& input_depth,
                                 const ad::Array<T>& target_values,
                                 const ad::Array<T>& gray,
                                 const LossWeights& lw) {
  auto w1 = weight_map(input_depth, lw.w_depth1_l, &target_values);
  auto w2 = weight_map(input_depth, lw.w_depth2_l, &target_values);
  auto l = depth_loss(dhat, target, w1, w2, lw.depth1_l, lw.depth2_l);
  l = l + ad::mul_scalar(boundary_loss(dhat, gray), T(lw.edge_l));
  auto smooth = smoothness_loss(differentiable_normals(dhat));
  return l + ad::mul_scalar(smooth, T(lw.smooth_l));
}

}  // namespace udsr
