#include <doctest.h>

#include "udsr/ad.hpp"
#include "udsr/gradcheck.hpp"
#include "udsr/nn.hpp"
#include "udsr/gradsuite.hpp"

using namespace udsr;
using ad::Array;
using ad::Shape;
using ad::Tape;
using ad::Var;

TEST_CASE("relu values and gradients at -1 and 2") {
  Tape<double> t;
  Var<double> x = t.leaf(Shape{1, 1, 1, 2}, {-1.0, 2.0}, true);
  Var<double> y = ad::relu(x);
  CHECK(y.val()[0] == 0.0);
  CHECK(y.val()[1] == 2.0);
  Var<double> s = ad::sum_all(y);
  t.backward(s);
  CHECK(t.grad(x.id)[0] == 0.0);
  CHECK(t.grad(x.id)[1] == 1.0);
}

TEST_CASE("forward difference of a constant tensor is zero") {
  Tape<double> t;
  Var<double> x = t.constant(Shape{1, 2, 3, 4}, 7.5);
  for (double v : ad::grad_h(x).val()) CHECK(v == 0.0);
  for (double v : ad::grad_v(x).val()) CHECK(v == 0.0);
}

TEST_CASE("shape mismatch is rejected") {
  Tape<double> t;
  Var<double> a = t.constant(Shape{1, 1, 2, 2}, 1.0);
  Var<double> b = t.constant(Shape{1, 1, 2, 3}, 1.0);
  CHECK_THROWS_AS(ad::add(a, b), Error);
  CHECK_THROWS_AS(ad::mul(a, b), Error);
  CHECK_THROWS_AS(ad::concat_c<double>({}), Error);
  CHECK_THROWS_AS(ad::slice_c(a, 1, 4), Error);
  CHECK_THROWS_AS(ad::crop(a, 1, 1, 4, 4), Error);
}

TEST_CASE("backward requires a scalar grad-tracked root") {
  Tape<double> t;
  Var<double> x = t.leaf(Shape{1, 1, 1, 2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(t.backward(x), Error);
  Var<double> c = t.constant(Shape{1, 1, 1, 1}, 1.0);
  CHECK_THROWS_AS(t.backward(c), Error);
}

TEST_CASE("every op and loss passes the finite-difference suite") {
  for (const auto& e : run_gradient_suite()) {
    INFO(e.name);
    CHECK(e.checked > 0);
    CHECK(e.max_rel_err <= 1e-4);
  }
}

TEST_CASE("gradient_check: exact quadratic is tight") {
  Rng rng(3);
  Array<double> x(Shape{1, 1, 3, 3});
  for (size_t i = 0; i < x.count(); ++i) x[i] = rng.uniform(-2.0, 2.0);
  auto f = [](Tape<double>& t, const std::vector<Var<double>>& v) {
    (void)t;
    return ad::sum_all(ad::square(v[0]));
  };
  auto r = ad::gradient_check(f, {x});
  CHECK(r.checked == 9);
  CHECK(r.max_rel_err < 1e-8);
}

TEST_CASE("gradient_check: relu kink coordinates are excluded") {
  // One coordinate sits exactly at the kink; its check must be skipped.
  Array<double> x(Shape{1, 1, 1, 3});
  x[0] = 0.5;
  x[1] = 0.0;
  x[2] = -0.7;
  auto f = [](Tape<double>& t, const std::vector<Var<double>>& v) {
    (void)t;
    return ad::sum_all(ad::relu(v[0]));
  };
  auto r = ad::gradient_check(f, {x});
  CHECK(r.skipped == 3);  // a kink anywhere poisons that evaluation pair
  CHECK(r.max_rel_err <= 1e-4);
}

TEST_CASE("determinism: identical graphs produce bit-identical values and grads") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tape<float> t;
    Array<float> xa(Shape{2, 3, 4, 4});
    for (size_t i = 0; i < xa.count(); ++i) xa[i] = float(rng.uniform(-1, 1));
    Var<float> x = t.leaf(xa, true);
    Var<float> y = ad::mean_all(ad::square(ad::tanh_v(ad::mul_scalar(x, 0.7f))));
    t.backward(y);
    std::pair<std::vector<float>, std::vector<float>> out{t.val(y.id), t.grad(x.id)};
    return out;
  };
  auto a = run(99);
  auto b = run(99);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("parameter leaves are memoized per tape and grads accumulate") {
  ad::Parameter<double> p;
  p.init("w", Shape{1, 1, 1, 1}, ad::ParamRole::ConvWeight);
  p.value[0] = 3.0;
  Tape<double> t;
  Var<double> w1 = ad::use(t, p);
  Var<double> w2 = ad::use(t, p);
  CHECK(w1.id == w2.id);  // same node
  // y = w * w uses the weight twice; dy/dw = 2w = 6.
  Var<double> y = ad::mul(w1, w2);
  t.backward(ad::sum_all(y));
  ad::export_grads(t, {&p});
  CHECK(p.grad[0] == doctest::Approx(6.0));
}

TEST_CASE("structural ops move data where expected") {
  Tape<double> t;
  Var<double> a = t.leaf(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  Var<double> b = t.leaf(Shape{1, 1, 2, 2}, {5, 6, 7, 8});
  Var<double> cc = ad::concat_c<double>({a, b});
  CHECK(cc.shape().c == 2);
  CHECK(cc.val() == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(ad::slice_c(cc, 1, 1).val() == std::vector<double>{5, 6, 7, 8});
  CHECK(ad::crop(cc, 1, 0, 1, 2).val() == std::vector<double>{2, 4, 6, 8});

  Var<double> up = ad::upsample_nearest2(a);
  CHECK(up.shape().h == 4);
  CHECK(up.val()[0] == 1);  // (0,0) <- src (0,0)
  CHECK(up.val()[1] == 1);  // (0,1) <- src (0,0)
  CHECK(up.val()[2] == 2);  // (0,2) <- src (0,1)
  CHECK(up.val()[5] == 1);  // (1,1) <- src (0,0)
  CHECK(ad::downsample_nearest2(up).val() == a.val());
}
