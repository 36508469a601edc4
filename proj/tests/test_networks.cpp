#include <doctest.h>

#include <cmath>

#include "udsr/losses.hpp"
#include "udsr/networks.hpp"

using namespace udsr;
using namespace udsr::nets;
using ad::Array;
using ad::Shape;
using ad::Tape;
using ad::Var;

namespace {

Array<float> random_arr(Shape s, Rng& rng, double lo = 0.05, double hi = 0.95) {
  Array<float> a(s);
  for (size_t i = 0; i < a.count(); ++i) a[i] = float(rng.uniform(lo, hi));
  return a;
}

template <typename Net>
size_t count_params(Net& net) {
  std::vector<ad::Parameter<float>*> ps;
  net.collect(ps);
  return ad::param_count(ps);
}

// Power-iteration oracle on plain arrays, for post-hoc sigma checks.
double top_singular_value(const Array<float>& w) {
  int rows = w.shape.n;
  int cols = int(w.count() / size_t(rows));
  std::vector<double> u(rows, 1.0 / std::sqrt(double(rows))), v(cols, 0.0);
  for (int it = 0; it < 200; ++it) {
    for (int j = 0; j < cols; ++j) {
      double acc = 0;
      for (int i = 0; i < rows; ++i) acc += double(w[size_t(i) * cols + j]) * u[i];
      v[j] = acc;
    }
    double vn = 0;
    for (double x : v) vn += x * x;
    vn = std::sqrt(vn) + 1e-30;
    for (double& x : v) x /= vn;
    for (int i = 0; i < rows; ++i) {
      double acc = 0;
      for (int j = 0; j < cols; ++j) acc += double(w[size_t(i) * cols + j]) * v[j];
      u[i] = acc;
    }
    double un = 0;
    for (double x : u) un += x * x;
    un = std::sqrt(un) + 1e-30;
    for (double& x : u) x /= un;
  }
  double sigma = 0;
  for (int i = 0; i < rows; ++i) {
    double acc = 0;
    for (int j = 0; j < cols; ++j) acc += double(w[size_t(i) * cols + j]) * v[j];
    sigma += u[i] * acc;
  }
  return sigma;
}

}  // namespace

TEST_CASE("micro parameter counts are pinned (regression guard)") {
  NetworkConfig nc;
  GeneratorNet<float> g;
  g.init("g", nc.generator);
  CHECK(count_params(g) == 63409);

  DiscriminatorConfig dd = nc.discriminator;
  dd.in_channels = 1;
  DiscriminatorNet<float> d1;
  d1.init("d1", dd);
  CHECK(count_params(d1) == 42353);
  dd.in_channels = 3;
  DiscriminatorNet<float> d3;
  d3.init("d3", dd);
  CHECK(count_params(d3) == 42865);

  GuidanceNet<float> fr;
  fr.init("fr", nc.guidance);
  CHECK(count_params(fr) == 252337);

  EnhancementNet<float> fe;
  fe.init("fe", nc.enhancement);
  CHECK(count_params(fe) == 122465);
}

TEST_CASE("generator: shape and range contracts") {
  NetworkConfig nc;
  GeneratorNet<float> g;
  g.init("g", nc.generator);
  g.init_params(3);
  Rng rng(1);
  Tape<float> t;
  Var<float> rgb = t.leaf(random_arr(Shape{1, 3, 32, 32}, rng, 0, 1));
  Var<float> depth = t.leaf(random_arr(Shape{1, 1, 32, 32}, rng, 0.1, 0.9));
  FwdCtx ctx;
  Var<float> out = g.forward(t, rgb, depth, ctx);
  CHECK(out.shape() == Shape{1, 1, 32, 32});
  for (float v : out.val()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  Var<float> bad = t.leaf(random_arr(Shape{1, 1, 16, 16}, rng));
  CHECK_THROWS_AS(g.forward(t, rgb, bad, ctx), Error);
}

TEST_CASE("generator: identity init reproduces the (clamped) input depth") {
  NetworkConfig nc;
  GeneratorNet<float> g;
  g.init("g", nc.generator);
  g.init_params(5);  // identity_init zeroes the residual head
  Rng rng(2);
  Tape<float> t;
  Array<float> da = random_arr(Shape{1, 1, 16, 16}, rng, 0.1, 0.9);
  Var<float> out = g.forward(t, t.leaf(random_arr(Shape{1, 3, 16, 16}, rng, 0, 1)),
                             t.leaf(da), FwdCtx{});
  for (size_t i = 0; i < da.count(); ++i)
    CHECK(std::abs(out.val()[i] - da[i]) < 1e-5);
}

TEST_CASE("generator: gradients reach both encoders") {
  NetworkConfig nc;
  nc.generator.identity_init = false;  // a zero head would block the trunk
  GeneratorNet<float> g;
  g.init("g", nc.generator);
  g.init_params(7);
  Rng rng(3);
  Tape<float> t;
  Var<float> rgb = t.leaf(random_arr(Shape{1, 3, 16, 16}, rng, 0, 1));
  Var<float> depth = t.leaf(random_arr(Shape{1, 1, 16, 16}, rng, 0.1, 0.9));
  Var<float> out = g.forward(t, rgb, depth, FwdCtx{});
  Var<float> target = t.leaf(random_arr(Shape{1, 1, 16, 16}, rng, 0.1, 0.9));
  t.backward(ad::mean_all(ad::square(out - target)));
  std::vector<ad::Parameter<float>*> ps;
  g.collect(ps);
  ad::export_grads(t, ps);
  auto grad_norm = [](const ad::Parameter<float>& p) {
    double acc = 0;
    for (float v : p.grad.v) acc += double(v) * v;
    return acc;
  };
  CHECK(grad_norm(g.rgb0.conv.w) > 0.0);
  CHECK(grad_norm(g.dep0.conv.w) > 0.0);
  CHECK(grad_norm(g.head.w) > 0.0);
}

TEST_CASE("discriminator: documented score-map shapes") {
  NetworkConfig nc;
  DiscriminatorConfig dc = nc.discriminator;
  dc.in_channels = 1;
  DiscriminatorNet<float> d;
  d.init("d", dc);
  d.init_params(11);
  Rng rng(4);
  Tape<float> t;
  // 64 -> 32 -> 16 -> 15 -> 14 with the k4 s2/s2/s1/s1 stack
  Var<float> x = t.leaf(random_arr(Shape{1, 1, 64, 64}, rng, 0, 1));
  Var<float> scores = d.forward(t, x, FwdCtx{});
  CHECK(scores.shape() == Shape{1, 1, 14, 14});
  // wrong channel count
  Var<float> x3 = t.leaf(random_arr(Shape{1, 3, 64, 64}, rng, 0, 1));
  CHECK_THROWS_AS(d.forward(t, x3, FwdCtx{}), Error);
}

TEST_CASE("discriminator: spectral norm caps every effective weight") {
  NetworkConfig nc;
  DiscriminatorConfig dc = nc.discriminator;
  dc.in_channels = 1;
  DiscriminatorNet<float> d;
  d.init("d", dc);
  d.init_params(13);
  // scale a weight up so normalization has to act
  for (auto& v : d.c1.w.value.v) v *= 10.0f;
  Rng rng(5);
  FwdCtx train_ctx{true, true};
  for (int i = 0; i < 50; ++i) {
    Tape<float> t;
    Var<float> x = t.leaf(random_arr(Shape{1, 1, 24, 32}, rng, 0, 1));
    d.forward(t, x, train_ctx);
  }
  // Effective (normalized) weights as the forward uses them.
  for (ad::Parameter<float>* p : {&d.c0.w, &d.c1.w, &d.c2.w, &d.c3.w}) {
    Tape<float> t;
    Var<float> wn = ad::spectral_norm(t, *p, 0, false, false);
    Array<float> eff(wn.shape(), wn.val());
    CHECK(top_singular_value(eff) <= 1.0 + 1e-3);
  }
}

TEST_CASE("discriminator: frozen power-iteration vectors make scores pure") {
  NetworkConfig nc;
  DiscriminatorConfig dc = nc.discriminator;
  dc.in_channels = 3;
  DiscriminatorNet<float> d;
  d.init("d", dc);
  d.init_params(17);
  Rng rng(6);
  Array<float> x = random_arr(Shape{1, 3, 24, 32}, rng, 0, 1);
  FwdCtx warm{true, false};
  {
    Tape<float> t;
    d.forward(t, t.leaf(x), warm);
  }
  FwdCtx frozen{false, false};
  Tape<float> t1, t2;
  Var<float> s1 = d.forward(t1, t1.leaf(x), frozen);
  Var<float> s2 = d.forward(t2, t2.leaf(x), frozen);
  CHECK(s1.val() == s2.val());
}

TEST_CASE("guidance: shape/range contracts and per-domain encoders") {
  NetworkConfig nc;
  GuidanceNet<float> f;
  f.init("f", nc.guidance);
  f.init_params(19);
  Rng rng(7);
  Tape<float> t;
  Var<float> rgb = t.leaf(random_arr(Shape{1, 3, 24, 32}, rng, 0, 1));
  Var<float> src = f.forward(t, rgb, Domain::Source, FwdCtx{});
  Var<float> tgt = f.forward(t, rgb, Domain::Target, FwdCtx{});
  CHECK(src.shape() == Shape{1, 1, 24, 32});
  CHECK(tgt.shape() == Shape{1, 1, 24, 32});
  for (float v : src.val()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("guidance: encoders diverge after training on distinct data") {
  NetworkConfig nc;
  GuidanceNet<float> f;
  f.init("f", nc.guidance);
  f.init_params(23);
  Rng rng(8);
  Array<float> rgb = random_arr(Shape{1, 3, 16, 16}, rng, 0, 1);
  Array<float> tgt_a = random_arr(Shape{1, 1, 16, 16}, rng, 0.1, 0.3);
  Array<float> tgt_b = random_arr(Shape{1, 1, 16, 16}, rng, 0.7, 0.9);
  std::vector<ad::Parameter<float>*> ps;
  f.collect(ps);
  // 10 optimizer steps pushing the two domains toward different targets
  for (int i = 0; i < 10; ++i) {
    Tape<float> t;
    FwdCtx ctx;
    Var<float> a = f.forward(t, t.leaf(rgb), Domain::Source, ctx);
    Var<float> b = f.forward(t, t.leaf(rgb), Domain::Target, ctx);
    Var<float> loss = ad::mean_all(ad::square(a - t.leaf(tgt_a))) +
                      ad::mean_all(ad::square(b - t.leaf(tgt_b)));
    t.backward(loss);
    ad::export_grads(t, ps);
    ad::adam_step(ps, {1e-2, 0.9, 0.999, 1e-8, 0.0});
  }
  Tape<float> t;
  Var<float> a = f.forward(t, t.leaf(rgb), Domain::Source, FwdCtx{false, false});
  Var<float> b = f.forward(t, t.leaf(rgb), Domain::Target, FwdCtx{false, false});
  double diff = 0;
  for (size_t i = 0; i < a.val().size(); ++i)
    diff += std::abs(double(a.val()[i]) - b.val()[i]);
  diff /= double(a.val().size());
  CHECK(diff > 0.05);  // outputs differ for the same input
}

TEST_CASE("enhancement: contracts and gradient reachability") {
  NetworkConfig nc;
  EnhancementNet<float> f;
  f.init("f", nc.enhancement);
  f.init_params(29);
  Rng rng(9);
  Tape<float> t;
  Var<float> rgb = t.leaf(random_arr(Shape{1, 3, 24, 32}, rng, 0, 1));
  Var<float> depth = t.leaf(random_arr(Shape{1, 1, 24, 32}, rng, 0.1, 0.9), true);
  Var<float> guide = t.leaf(random_arr(Shape{1, 1, 24, 32}, rng, 0.1, 0.9));
  FwdCtx ctx;
  Var<float> out = f.forward(t, rgb, depth, guide, ctx);
  CHECK(out.shape() == Shape{1, 1, 24, 32});
  for (float v : out.val()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  t.backward(ad::mean_all(ad::square(out)));
  std::vector<ad::Parameter<float>*> ps;
  f.collect(ps);
  ad::export_grads(t, ps);
  auto nonzero = [](const ad::Parameter<float>& p) {
    for (float v : p.grad.v)
      if (v != 0.0f) return true;
    return false;
  };
  CHECK(nonzero(f.rgb_fx0.w));
  CHECK(nonzero(f.dep_fx0.w));
  CHECK(nonzero(f.unet.e0a.conv.w));
  CHECK(nonzero(f.unet.head.w));
  // gradient reaches the depth input as well
  bool depth_grad = false;
  for (float v : t.grad(depth.id))
    if (v != 0.0f) depth_grad = true;
  CHECK(depth_grad);

  Var<float> mismatched = t.leaf(random_arr(Shape{1, 1, 12, 16}, rng));
  CHECK_THROWS_AS(f.forward(t, rgb, mismatched, guide, ctx), Error);
}

TEST_CASE("forwards preserve resolution for divisible extents") {
  NetworkConfig nc;
  GeneratorNet<float> g;
  g.init("g", nc.generator);
  g.init_params(31);
  GuidanceNet<float> fr;
  fr.init("fr", nc.guidance);
  fr.init_params(37);
  EnhancementNet<float> fe;
  fe.init("fe", nc.enhancement);
  fe.init_params(41);
  Rng rng(10);
  for (auto [w, h] : {std::pair{16, 12}, std::pair{32, 24}, std::pair{64, 48}}) {
    Tape<float> t;
    Var<float> rgb = t.leaf(random_arr(Shape{1, 3, h, w}, rng, 0, 1));
    Var<float> dep = t.leaf(random_arr(Shape{1, 1, h, w}, rng, 0.1, 0.9));
    CHECK(g.forward(t, rgb, dep, FwdCtx{}).shape() == Shape{1, 1, h, w});
    CHECK(fr.forward(t, rgb, Domain::Source, FwdCtx{}).shape() == Shape{1, 1, h, w});
    CHECK(fe.forward(t, rgb, dep, dep, FwdCtx{}).shape() == Shape{1, 1, h, w});
  }
  // extents not divisible by 4 are rejected by the U-Net
  Tape<float> t;
  Var<float> rgb = t.leaf(random_arr(Shape{1, 3, 10, 10}, rng, 0, 1));
  CHECK_THROWS_AS(fr.forward(t, rgb, Domain::Source, FwdCtx{}), Error);
}

TEST_CASE("xavier init: same seed gives bit-identical networks") {
  NetworkConfig nc;
  GeneratorNet<float> a, b;
  a.init("g", nc.generator);
  b.init("g", nc.generator);
  a.init_params(1234);
  b.init_params(1234);
  std::vector<ad::Parameter<float>*> pa, pb;
  a.collect(pa);
  b.collect(pb);
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.v == pb[i]->value.v);
  CHECK(ad::params_hash(pa) == ad::params_hash(pb));
}

TEST_CASE("network config JSON round trip and validation") {
  NetworkConfig c;
  c.generator.base_width = 24;
  c.guidance.res_blocks = 3;
  NetworkConfig c2 = NetworkConfig::from_json(c.to_json());
  CHECK(c2.generator.base_width == 24);
  CHECK(c2.guidance.res_blocks == 3);
  CHECK(c2.enhancement.feature_channels == c.enhancement.feature_channels);
  CHECK_THROWS_AS(NetworkConfig::from_json("{nope"), Error);
  CHECK_THROWS_AS(NetworkConfig::from_json("{\"generator\":{\"base_width\":0}}"),
                  Error);
  CHECK_THROWS_AS(NetworkConfig::from_json("{\"schema_version\": 99}"), Error);
}
