#include "udsr/gradsuite.hpp"

#include <functional>

#include "udsr/gradcheck.hpp"
#include "udsr/losses.hpp"
#include "udsr/nn.hpp"

namespace udsr {

namespace {

using ad::Array;
using ad::Shape;
using ad::Tape;
using ad::Var;
using DVar = ad::Var<double>;
using DTape = ad::Tape<double>;
using DArr = ad::Array<double>;

DArr rand_arr(Shape s, Rng& rng, double lo, double hi) {
  DArr a(s);
  for (size_t i = 0; i < a.count(); ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

// Reduces a possibly non-scalar op output to a scalar with fixed random
// weights so every output coordinate influences the check.
using VecFn = std::function<DVar(DTape&, const std::vector<DVar>&)>;

GradSuiteEntry check(const std::string& name, const VecFn& f,
                     std::vector<DArr> inputs, uint64_t seed) {
  DArr weights;
  {
    DTape probe;
    std::vector<DVar> vars;
    for (const auto& a : inputs) vars.push_back(probe.leaf(a, false));
    DVar y = f(probe, vars);
    Rng rng(mix_seed(seed, 0x5ca1a2));
    weights = rand_arr(y.shape(), rng, -1.0, 1.0);
  }
  ad::ScalarFn scalar_fn = [&](DTape& t, const std::vector<DVar>& vars) {
    DVar y = f(t, vars);
    if (y.shape().count() == 1) return y;
    return ad::sum_all(t.leaf(weights) * y);
  };
  ad::GradCheckResult r = ad::gradient_check(scalar_fn, std::move(inputs));
  return {name, r.max_rel_err, r.checked, r.skipped};
}

Shape small() { return Shape{2, 3, 4, 4}; }

void add_op_checks(std::vector<GradSuiteEntry>& out) {
  Rng rng(20240811);
  auto r = [&](Shape s, double lo, double hi) { return rand_arr(s, rng, lo, hi); };

  out.push_back(check("op.add",
                      [](DTape&, const std::vector<DVar>& v) { return v[0] + v[1]; },
                      {r(small(), -1, 1), r(small(), -1, 1)}, 1));
  out.push_back(check("op.sub",
                      [](DTape&, const std::vector<DVar>& v) { return v[0] - v[1]; },
                      {r(small(), -1, 1), r(small(), -1, 1)}, 2));
  out.push_back(check("op.mul",
                      [](DTape&, const std::vector<DVar>& v) { return v[0] * v[1]; },
                      {r(small(), -1, 1), r(small(), -1, 1)}, 3));
  out.push_back(check("op.div",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::div(v[0], v[1]);
                      },
                      {r(small(), -1, 1), r(small(), 0.5, 1.5)}, 4));
  out.push_back(check("op.add_scalar",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::add_scalar(v[0], 0.37);
                      },
                      {r(small(), -1, 1)}, 5));
  out.push_back(check("op.mul_scalar",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::mul_scalar(v[0], -2.3);
                      },
                      {r(small(), -1, 1)}, 6));
  out.push_back(check("op.abs",
                      [](DTape&, const std::vector<DVar>& v) { return ad::abs_v(v[0]); },
                      {r(small(), -1, 1)}, 7));
  out.push_back(check("op.exp",
                      [](DTape&, const std::vector<DVar>& v) { return ad::exp_v(v[0]); },
                      {r(small(), -1, 1)}, 8));
  out.push_back(check("op.log",
                      [](DTape&, const std::vector<DVar>& v) { return ad::log_v(v[0]); },
                      {r(small(), 0.3, 2.0)}, 9));
  out.push_back(check("op.sqrt",
                      [](DTape&, const std::vector<DVar>& v) { return ad::sqrt_v(v[0]); },
                      {r(small(), 0.3, 2.0)}, 10));
  out.push_back(check("op.square",
                      [](DTape&, const std::vector<DVar>& v) { return ad::square(v[0]); },
                      {r(small(), -1, 1)}, 11));
  out.push_back(check("op.relu",
                      [](DTape&, const std::vector<DVar>& v) { return ad::relu(v[0]); },
                      {r(small(), -1, 1)}, 12));
  out.push_back(check("op.leaky_relu",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::leaky_relu(v[0], 0.2);
                      },
                      {r(small(), -1, 1)}, 13));
  out.push_back(check("op.tanh",
                      [](DTape&, const std::vector<DVar>& v) { return ad::tanh_v(v[0]); },
                      {r(small(), -1, 1)}, 14));
  out.push_back(check("op.sigmoid",
                      [](DTape&, const std::vector<DVar>& v) { return ad::sigmoid(v[0]); },
                      {r(small(), -2, 2)}, 15));
  out.push_back(check("op.clamp",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::clamp_v(v[0], -0.5, 0.5);
                      },
                      {r(small(), -1, 1)}, 16));
  out.push_back(check("op.concat_c",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::concat_c<double>({v[0], v[1]});
                      },
                      {r(small(), -1, 1), r(Shape{2, 2, 4, 4}, -1, 1)}, 17));
  out.push_back(check("op.slice_c",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::slice_c(v[0], 1, 2);
                      },
                      {r(small(), -1, 1)}, 18));
  out.push_back(check("op.crop",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::crop(v[0], 1, 1, 3, 2);
                      },
                      {r(small(), -1, 1)}, 19));
  out.push_back(check("op.upsample_nearest2",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::upsample_nearest2(v[0]);
                      },
                      {r(small(), -1, 1)}, 20));
  out.push_back(check("op.downsample_nearest2",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::downsample_nearest2(v[0]);
                      },
                      {r(small(), -1, 1)}, 21));
  out.push_back(check("op.grad_h",
                      [](DTape&, const std::vector<DVar>& v) { return ad::grad_h(v[0]); },
                      {r(small(), -1, 1)}, 22));
  out.push_back(check("op.grad_v",
                      [](DTape&, const std::vector<DVar>& v) { return ad::grad_v(v[0]); },
                      {r(small(), -1, 1)}, 23));
  out.push_back(check("op.sum_all",
                      [](DTape&, const std::vector<DVar>& v) { return ad::sum_all(v[0]); },
                      {r(small(), -1, 1)}, 24));
  out.push_back(check("op.mean_all",
                      [](DTape&, const std::vector<DVar>& v) { return ad::mean_all(v[0]); },
                      {r(small(), -1, 1)}, 25));

  out.push_back(check("op.conv2d_k3s1",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::conv2d(v[0], v[1], v[2], 1, 1);
                      },
                      {r(Shape{2, 3, 5, 5}, -1, 1), r(Shape{4, 3, 3, 3}, -1, 1),
                       r(Shape{1, 4, 1, 1}, -1, 1)},
                      26));
  out.push_back(check("op.conv2d_k4s2",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::conv2d(v[0], v[1], v[2], 2, 1);
                      },
                      {r(Shape{2, 2, 6, 6}, -1, 1), r(Shape{3, 2, 4, 4}, -1, 1),
                       r(Shape{1, 3, 1, 1}, -1, 1)},
                      27));
  out.push_back(check("op.group_norm",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::group_norm(v[0], 2, v[1], v[2]);
                      },
                      {r(Shape{2, 4, 5, 5}, -1, 1), r(Shape{1, 4, 1, 1}, 0.5, 1.5),
                       r(Shape{1, 4, 1, 1}, -0.5, 0.5)},
                      28));
  out.push_back(check("op.instance_norm",
                      [](DTape&, const std::vector<DVar>& v) {
                        return ad::instance_norm(v[0], v[1], v[2]);
                      },
                      {r(Shape{2, 3, 5, 5}, -1, 1), r(Shape{1, 3, 1, 1}, 0.5, 1.5),
                       r(Shape{1, 3, 1, 1}, -0.5, 0.5)},
                      29));

  // Spectral normalization with frozen power-iteration vectors: sigma is
  // then an explicit function of w and the backward formula is exact.
  {
    Rng wrng(77001);
    DArr w = rand_arr(Shape{8, 8, 1, 1}, wrng, -1.0, 1.0);
    std::vector<double> u(8, 0.0), v(8, 0.0);
    Rng urng(77002);
    for (auto& x : u) x = urng.normal();
    double un = 0;
    for (double x : u) un += x * x;
    for (auto& x : u) x /= std::sqrt(un);
    power_iterate(w, u, v, 50);
    out.push_back(check("op.spectral_norm",
                        [u, v](DTape&, const std::vector<DVar>& vars) {
                          return ad::spectral_norm_apply(vars[0], u, v);
                        },
                        {w}, 30));
  }
}

void add_loss_checks(std::vector<GradSuiteEntry>& out) {
  Rng rng(424242);
  auto r = [&](Shape s, double lo, double hi) { return rand_arr(s, rng, lo, hi); };
  Shape ds{2, 1, 6, 8};

  // A plausible input-depth map with a few holes drives the weight maps.
  DArr input_depth = r(ds, 0.1, 0.9);
  {
    Rng hole_rng(5150);
    for (size_t i = 0; i < input_depth.count(); ++i)
      if (hole_rng.bernoulli(0.2)) input_depth[i] = 0.0;
  }
  LossWeights lw = LossWeights::preset("scannet-renderscannet-phase1");

  {
    DArr w1 = weight_map(input_depth, lw.w_depth1_h);
    DArr w2 = weight_map(input_depth, lw.w_depth2_h);
    out.push_back(check("loss.depth",
                        [w1, w2, &lw](DTape&, const std::vector<DVar>& v) {
                          return depth_loss(v[0], v[1], w1, w2, lw.depth1_h,
                                            lw.depth2_h);
                        },
                        {r(ds, 0.1, 0.9), r(ds, 0.1, 0.9)}, 40));
  }
  {
    DArr s1 = normal_grid_weight_map(input_depth, lw.w_surf1_h);
    DArr s2 = normal_grid_weight_map(input_depth, lw.w_surf2_h);
    out.push_back(check("loss.perceptual_surface",
                        [s1, s2, &lw](DTape&, const std::vector<DVar>& v) {
                          return perceptual_surface_loss(v[0], v[1], s1, s2,
                                                         lw.surf1_h, lw.surf2_h);
                        },
                        {r(ds, 0.1, 0.9), r(ds, 0.1, 0.9)}, 41));
  }
  {
    DArr gray = r(Shape{ds.n, 1, ds.h, ds.w}, 0.0, 1.0);
    out.push_back(check("loss.boundary",
                        [gray](DTape&, const std::vector<DVar>& v) {
                          return boundary_loss(v[0], gray);
                        },
                        {r(ds, 0.1, 0.9)}, 42));
  }
  out.push_back(check("loss.smoothness",
                      [](DTape&, const std::vector<DVar>& v) {
                        return smoothness_loss(differentiable_normals(v[0]));
                      },
                      {r(ds, 0.1, 0.9)}, 43));
  {
    // The reconstruction differs from the target by a sloped offset bounded
    // away from zero, keeping every |diff| clear of the L1 kink dead zone.
    DArr d_h = r(ds, 0.2, 0.7);
    DArr d_rec = d_h;
    for (size_t i = 0; i < d_rec.count(); ++i)
      d_rec[i] += 0.05 + 0.1 * double(i % size_t(ds.w)) / ds.w;
    out.push_back(check("loss.cycle",
                        [d_h](DTape&, const std::vector<DVar>& v) {
                          return cycle_loss(v[0], v[1], d_h);
                        },
                        {d_h, d_rec}, 44));
  }
  {
    DArr d_l = r(ds, 0.1, 0.9);
    DArr d_h = r(ds, 0.1, 0.9);
    out.push_back(check("loss.range",
                        [d_l, d_h, &lw](DTape&, const std::vector<DVar>& v) {
                          return range_loss(v[0], v[1], v[2], v[3], d_l, d_h,
                                            lw.range_l, lw.range_h);
                        },
                        {d_l, r(ds, 0.1, 0.9), d_h, r(ds, 0.1, 0.9)}, 45));
  }
  {
    DArr d_h = r(ds, 0.1, 0.9);
    out.push_back(check("loss.identity",
                        [d_h, &lw](DTape&, const std::vector<DVar>& v) {
                          return identity_loss(v[0], v[1], d_h, lw.idt_h);
                        },
                        {r(ds, 0.1, 0.9), d_h}, 46));
  }
  out.push_back(check("loss.lsgan_d",
                      [](DTape&, const std::vector<DVar>& v) {
                        return lsgan_d_loss(v[0], v[1]);
                      },
                      {r(Shape{2, 1, 3, 3}, -1, 2), r(Shape{2, 1, 3, 3}, -1, 2)}, 47));
  out.push_back(check("loss.lsgan_g",
                      [](DTape&, const std::vector<DVar>& v) {
                        return lsgan_g_loss(v[0]);
                      },
                      {r(Shape{2, 1, 3, 3}, -1, 2)}, 48));

  // Non-adversarial part of the full translation objective.
  {
    DArr d_l = r(ds, 0.1, 0.9);
    DArr d_h = r(ds, 0.1, 0.9);
    out.push_back(check(
        "loss.translation_total",
        [d_l, d_h, &lw](DTape& t, const std::vector<DVar>& v) {
          // v: d_l, d_l_enh, d_h, d_h_deg, d_h_rec, g_idt
          TranslationLossParts<double> parts;
          parts.cycle = cycle_loss(v[2], v[4], d_h);
          parts.range = range_loss(v[0], v[1], v[2], v[3], d_l, d_h, lw.range_l,
                                   lw.range_h);
          parts.idt = identity_loss(v[5], v[2], d_h, lw.idt_h);
          return translation_total_loss(parts, lw);
        },
        {d_l, r(ds, 0.1, 0.9), d_h, r(ds, 0.1, 0.9), r(ds, 0.1, 0.9),
         r(ds, 0.1, 0.9)},
        49));
  }
  {
    DArr target = r(ds, 0.1, 0.9);
    out.push_back(check("loss.enhancement_pseudo",
                        [&, target](DTape& t, const std::vector<DVar>& v) {
                          return enhancement_pseudo_loss(v[0], v[1], input_depth,
                                                         target, lw);
                        },
                        {r(ds, 0.1, 0.9), target}, 50));
  }
  {
    DArr target = r(ds, 0.1, 0.9);
    DArr gray = r(Shape{ds.n, 1, ds.h, ds.w}, 0.0, 1.0);
    out.push_back(check("loss.enhancement_self",
                        [&, target, gray](DTape& t, const std::vector<DVar>& v) {
                          return enhancement_self_loss(v[0], v[1], input_depth,
                                                       target, gray, lw);
                        },
                        {r(ds, 0.1, 0.9), target}, 51));
  }
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite() {
  std::vector<GradSuiteEntry> out;
  add_op_checks(out);
  add_loss_checks(out);
  return out;
}

double gradient_suite_max_err(std::ostream* os) {
  double max_err = 0.0;
  for (const auto& e : run_gradient_suite()) {
    max_err = std::max(max_err, e.max_rel_err);
    if (os) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-28s max_rel_err=%.3e checked=%ld skipped=%ld",
                    e.name.c_str(), e.max_rel_err, e.checked, e.skipped);
      *os << buf << "\n";
    }
  }
  return max_err;
}

}  // namespace udsr
