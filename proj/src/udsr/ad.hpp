#pragma once

// Minimal reverse-mode automatic differentiation over 4-D (NCHW) tensors.
// A Tape owns the nodes of one computation; Vars are cheap handles into it.
// Node creation order is a topological order, so backward() is a single
// reverse sweep. Tapes are single-threaded; independent tapes may run in
// parallel. float is used for training, double for gradient checks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "udsr/common.hpp"

namespace udsr::ad {

struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  size_t count() const { return size_t(n) * c * h * w; }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  std::string str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + "]";
  }
};

template <typename T>
struct Array {
  Shape shape;
  std::vector<T> v;

  Array() = default;
  explicit Array(Shape s, T fill = T(0)) : shape(s), v(s.count(), fill) {}
  Array(Shape s, std::vector<T> values) : shape(s), v(std::move(values)) {
    require(v.size() == shape.count(), "array size does not match shape");
  }

  size_t count() const { return v.size(); }
  T& operator[](size_t i) { return v[i]; }
  const T& operator[](size_t i) const { return v[i]; }
};

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  const std::vector<T>& val() const;
  T scalar() const;
};

template <typename T>
class Tape {
public:
  struct Node {
    Shape shape;
    std::vector<T> val;
    std::vector<T> grad;  // allocated only when needs_grad
    std::function<void(Tape&)> back;
    bool needs_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(const Array<T>& a, bool needs_grad = false) {
    return make(a.shape, std::vector<T>(a.v), needs_grad, {});
  }
  Var<T> leaf(Shape s, std::vector<T> values, bool needs_grad = false) {
    require(values.size() == s.count(), "leaf: size does not match shape");
    return make(s, std::move(values), needs_grad, {});
  }
  Var<T> constant(Shape s, T fill) {
    return make(s, std::vector<T>(s.count(), fill), false, {});
  }
  Var<T> scalar(T value) { return constant(Shape{1, 1, 1, 1}, value); }

  // Memoized leaves keyed by an external object (used for parameters so a
  // weight used several times in one graph accumulates into one node).
  Var<T> keyed_leaf(const void* key, const Array<T>& a, bool needs_grad) {
    auto it = keyed_.find(key);
    if (it != keyed_.end()) return Var<T>{this, it->second};
    Var<T> v = leaf(a, needs_grad);
    keyed_[key] = v.id;
    return v;
  }
  int keyed_node(const void* key) const {
    auto it = keyed_.find(key);
    return it == keyed_.end() ? -1 : it->second;
  }

  Var<T> make(Shape s, std::vector<T> values, bool needs_grad,
              std::function<void(Tape&)> back) {
    Node n;
    n.shape = s;
    n.val = std::move(values);
    n.needs_grad = needs_grad;
    if (needs_grad) n.grad.assign(n.val.size(), T(0));
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var<T>{this, int(nodes_.size()) - 1};
  }

  Node& node(int id) { return nodes_[size_t(id)]; }
  const Node& node(int id) const { return nodes_[size_t(id)]; }
  size_t size() const { return nodes_.size(); }

  const std::vector<T>& val(int id) const { return nodes_[size_t(id)].val; }
  std::vector<T>& grad(int id) { return nodes_[size_t(id)].grad; }
  bool needs_grad(int id) const { return nodes_[size_t(id)].needs_grad; }

  // Seeds the (scalar) root with gradient 1 and sweeps the tape backwards.
  void backward(Var<T> root) {
    require(root.valid() && root.tape == this, "backward: foreign var");
    require(node(root.id).shape.count() == 1, "backward: root must be scalar");
    require(node(root.id).needs_grad, "backward: root does not require grad");
    node(root.id).grad[0] = T(1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (n.back && n.needs_grad) n.back(*this);
    }
  }

  // Dead-zone tracking for nondifferentiable points. When kink_tol > 0,
  // kinked ops (relu, leaky-relu, abs, clamp) flag evaluations that come
  // within the tolerance of a kink; gradient checks skip those coordinates.
  double kink_tol = 0.0;
  bool kink_hit = false;

private:
  std::vector<Node> nodes_;
  std::unordered_map<const void*, int> keyed_;
};

template <typename T>
const Shape& Var<T>::shape() const {
  return tape->node(id).shape;
}
template <typename T>
const std::vector<T>& Var<T>::val() const {
  return tape->val(id);
}
template <typename T>
T Var<T>::scalar() const {
  require(shape().count() == 1, "scalar() on non-scalar var");
  return tape->val(id)[0];
}

namespace detail {

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.tape == b.tape, std::string(op) + ": vars from different tapes");
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      a.shape().str() + " vs " + b.shape().str());
}

}  // namespace detail

// ---- elementwise binary ----

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "add");
  Tape<T>& t = *a.tape;
  const auto& av = t.val(a.id);
  const auto& bv = t.val(b.id);
  std::vector<T> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  Var<T> y = t.make(a.shape(), std::move(out), ng, {});
  if (ng) {
    int ai = a.id, bi = b.id, yi = y.id;
    t.node(yi).back = [ai, bi, yi](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      if (tp.needs_grad(ai)) {
        auto& ga = tp.grad(ai);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (tp.needs_grad(bi)) {
        auto& gb = tp.grad(bi);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    };
  }
  return y;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "sub");
  Tape<T>& t = *a.tape;
  const auto& av = t.val(a.id);
  const auto& bv = t.val(b.id);
  std::vector<T> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  Var<T> y = t.make(a.shape(), std::move(out), ng, {});
  if (ng) {
    int ai = a.id, bi = b.id, yi = y.id;
    t.node(yi).back = [ai, bi, yi](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      if (tp.needs_grad(ai)) {
        auto& ga = tp.grad(ai);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (tp.needs_grad(bi)) {
        auto& gb = tp.grad(bi);
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  }
  return y;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "mul");
  Tape<T>& t = *a.tape;
  const auto& av = t.val(a.id);
  const auto& bv = t.val(b.id);
  std::vector<T> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  Var<T> y = t.make(a.shape(), std::move(out), ng, {});
  if (ng) {
    int ai = a.id, bi = b.id, yi = y.id;
    t.node(yi).back = [ai, bi, yi](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      const auto& av2 = tp.val(ai);
      const auto& bv2 = tp.val(bi);
      if (tp.needs_grad(ai)) {
        auto& ga = tp.grad(ai);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (tp.needs_grad(bi)) {
        auto& gb = tp.grad(bi);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
      }
    };
  }
  return y;
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "div");
  Tape<T>& t = *a.tape;
  const auto& av = t.val(a.id);
  const auto& bv = t.val(b.id);
  std::vector<T> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[i];
  bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
  Var<T> y = t.make(a.shape(), std::move(out), ng, {});
  if (ng) {
    int ai = a.id, bi = b.id, yi = y.id;
    t.node(yi).back = [ai, bi, yi](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      const auto& bv2 = tp.val(bi);
      const auto& yv = tp.val(yi);
      if (tp.needs_grad(ai)) {
        auto& ga = tp.grad(ai);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv2[i];
      }
      if (tp.needs_grad(bi)) {
        auto& gb = tp.grad(bi);
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * yv[i] / bv2[i];
      }
    };
  }
  return y;
}

// ---- generic unary with local derivative from (x, y) ----

template <typename T, typename FwdFn, typename DFn>
Var<T> unary_op(Var<T> a, FwdFn fwd, DFn dfdx) {
  Tape<T>& t = *a.tape;
  const auto& av = t.val(a.id);
  std::vector<T> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  bool ng = t.needs_grad(a.id);
  Var<T> y = t.make(a.shape(), std::move(out), ng, {});
  if (ng) {
    int ai = a.id, yi = y.id;
    t.node(yi).back = [ai, yi, dfdx](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      const auto& xv = tp.val(ai);
      const auto& yv = tp.val(yi);
      auto& ga = tp.grad(ai);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
    };
  }
  return y;
}

template <typename T>
Var<T> neg(Var<T> a) {
  return unary_op(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
  return unary_op(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> mul_scalar(Var<T> a, T s) {
  return unary_op(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> abs_v(Var<T> a) {
  Tape<T>& t = *a.tape;
  if (t.kink_tol > 0)
    for (T x : t.val(a.id))
      if (std::abs(double(x)) < t.kink_tol) t.kink_hit = true;
  return unary_op(a, [](T x) { return std::abs(x); },
                  [](T x, T) { return x > 0 ? T(1) : (x < 0 ? T(-1) : T(0)); });
}

template <typename T>
Var<T> exp_v(Var<T> a) {
  return unary_op(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log_v(Var<T> a) {
  return unary_op(a, [](T x) { return std::log(x); },
                  [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> sqrt_v(Var<T> a) {
  return unary_op(a, [](T x) { return std::sqrt(x); },
                  [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Var<T> square(Var<T> a) {
  return unary_op(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tape<T>& t = *a.tape;
  if (t.kink_tol > 0)
    for (T x : t.val(a.id))
      if (std::abs(double(x)) < t.kink_tol) t.kink_hit = true;
  return unary_op(a, [](T x) { return x > 0 ? x : T(0); },
                  [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(Var<T> a, T slope = T(0.2)) {
  Tape<T>& t = *a.tape;
  if (t.kink_tol > 0)
    for (T x : t.val(a.id))
      if (std::abs(double(x)) < t.kink_tol) t.kink_hit = true;
  return unary_op(a, [slope](T x) { return x > 0 ? x : slope * x; },
                  [slope](T x, T) { return x > 0 ? T(1) : slope; });
}

template <typename T>
Var<T> tanh_v(Var<T> a) {
  return unary_op(a, [](T x) { return std::tanh(x); },
                  [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary_op(a,
                  [](T x) {
                    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
                    T e = std::exp(x);
                    return e / (T(1) + e);
                  },
                  [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> clamp_v(Var<T> a, T lo, T hi) {
  Tape<T>& t = *a.tape;
  if (t.kink_tol > 0)
    for (T x : t.val(a.id))
      if (std::abs(double(x - lo)) < t.kink_tol ||
          std::abs(double(x - hi)) < t.kink_tol)
        t.kink_hit = true;
  return unary_op(a, [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
                  [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

// ---- reductions ----

template <typename T>
Var<T> sum_all(Var<T> a) {
  Tape<T>& t = *a.tape;
  const auto& av = t.val(a.id);
  T acc = T(0);
  for (T x : av) acc += x;
  bool ng = t.needs_grad(a.id);
  Var<T> y = t.make(Shape{1, 1, 1, 1}, {acc}, ng, {});
  if (ng) {
    int ai = a.id, yi = y.id;
    t.node(yi).back = [ai, yi](Tape<T>& tp) {
      T g = tp.grad(yi)[0];
      auto& ga = tp.grad(ai);
      for (T& v : ga) v += g;
    };
  }
  return y;
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  size_t n = a.shape().count();
  return mul_scalar(sum_all(a), T(1) / T(n));
}

// ---- structural ----

template <typename T>
Var<T> concat_c(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_c: no inputs");
  Tape<T>& t = *parts[0].tape;
  Shape s0 = parts[0].shape();
  int total_c = 0;
  bool ng = false;
  for (const auto& p : parts) {
    Shape s = p.shape();
    require(s.n == s0.n && s.h == s0.h && s.w == s0.w,
            "concat_c: spatial/batch mismatch");
    total_c += s.c;
    ng = ng || t.needs_grad(p.id);
  }
  Shape so{s0.n, total_c, s0.h, s0.w};
  std::vector<T> out(so.count());
  size_t plane = size_t(s0.h) * s0.w;
  for (int b = 0; b < s0.n; ++b) {
    size_t off = size_t(b) * total_c * plane;
    for (const auto& p : parts) {
      const auto& pv = t.val(p.id);
      int pc = p.shape().c;
      for (int c = 0; c < pc; ++c)
        for (size_t i = 0; i < plane; ++i)
          out[off + size_t(c) * plane + i] = pv[(size_t(b) * pc + c) * plane + i];
      off += size_t(pc) * plane;
    }
  }
  Var<T> y = t.make(so, std::move(out), ng, {});
  if (ng) {
    std::vector<int> ids;
    std::vector<int> chans;
    for (const auto& p : parts) {
      ids.push_back(p.id);
      chans.push_back(p.shape().c);
    }
    int yi = y.id;
    int n = s0.n;
    t.node(yi).back = [ids, chans, yi, n, plane, total_c](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      for (int b = 0; b < n; ++b) {
        size_t off = size_t(b) * total_c * plane;
        for (size_t k = 0; k < ids.size(); ++k) {
          int pc = chans[k];
          if (tp.needs_grad(ids[k])) {
            auto& gp = tp.grad(ids[k]);
            for (int c = 0; c < pc; ++c)
              for (size_t i = 0; i < plane; ++i)
                gp[(size_t(b) * pc + c) * plane + i] +=
                    g[off + size_t(c) * plane + i];
          }
          off += size_t(pc) * plane;
        }
      }
    };
  }
  return y;
}

template <typename T>
Var<T> slice_c(Var<T> a, int c0, int len) {
  Shape s = a.shape();
  require(c0 >= 0 && len >= 1 && c0 + len <= s.c, "slice_c: out of range");
  Tape<T>& t = *a.tape;
  Shape so{s.n, len, s.h, s.w};
  std::vector<T> out(so.count());
  size_t plane = size_t(s.h) * s.w;
  const auto& av = t.val(a.id);
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < len; ++c)
      for (size_t i = 0; i < plane; ++i)
        out[(size_t(b) * len + c) * plane + i] =
            av[(size_t(b) * s.c + c0 + c) * plane + i];
  bool ng = t.needs_grad(a.id);
  Var<T> y = t.make(so, std::move(out), ng, {});
  if (ng) {
    int ai = a.id, yi = y.id;
    t.node(yi).back = [ai, yi, c0, len, s, plane](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      auto& ga = tp.grad(ai);
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < len; ++c)
          for (size_t i = 0; i < plane; ++i)
            ga[(size_t(b) * s.c + c0 + c) * plane + i] +=
                g[(size_t(b) * len + c) * plane + i];
    };
  }
  return y;
}

template <typename T>
Var<T> crop(Var<T> a, int x0, int y0, int cw, int ch) {
  Shape s = a.shape();
  require(x0 >= 0 && y0 >= 0 && cw >= 1 && ch >= 1 && x0 + cw <= s.w &&
              y0 + ch <= s.h,
          "crop: region out of range");
  Tape<T>& t = *a.tape;
  Shape so{s.n, s.c, ch, cw};
  std::vector<T> out(so.count());
  const auto& av = t.val(a.id);
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
          out[((size_t(b) * s.c + c) * ch + y) * cw + x] =
              av[((size_t(b) * s.c + c) * s.h + (y0 + y)) * s.w + (x0 + x)];
  bool ng = t.needs_grad(a.id);
  Var<T> yv = t.make(so, std::move(out), ng, {});
  if (ng) {
    int ai = a.id, yi = yv.id;
    t.node(yi).back = [ai, yi, x0, y0, cw, ch, s](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      auto& ga = tp.grad(ai);
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < ch; ++y)
            for (int x = 0; x < cw; ++x)
              ga[((size_t(b) * s.c + c) * s.h + (y0 + y)) * s.w + (x0 + x)] +=
                  g[((size_t(b) * s.c + c) * ch + y) * cw + x];
    };
  }
  return yv;
}

template <typename T>
Var<T> upsample_nearest2(Var<T> a) {
  Shape s = a.shape();
  Tape<T>& t = *a.tape;
  Shape so{s.n, s.c, s.h * 2, s.w * 2};
  std::vector<T> out(so.count());
  const auto& av = t.val(a.id);
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < so.h; ++y)
        for (int x = 0; x < so.w; ++x)
          out[((size_t(b) * s.c + c) * so.h + y) * so.w + x] =
              av[((size_t(b) * s.c + c) * s.h + y / 2) * s.w + x / 2];
  bool ng = t.needs_grad(a.id);
  Var<T> yv = t.make(so, std::move(out), ng, {});
  if (ng) {
    int ai = a.id, yi = yv.id;
    t.node(yi).back = [ai, yi, s, so](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      auto& ga = tp.grad(ai);
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < so.h; ++y)
            for (int x = 0; x < so.w; ++x)
              ga[((size_t(b) * s.c + c) * s.h + y / 2) * s.w + x / 2] +=
                  g[((size_t(b) * s.c + c) * so.h + y) * so.w + x];
    };
  }
  return yv;
}

template <typename T>
Var<T> downsample_nearest2(Var<T> a) {
  Shape s = a.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0, "downsample_nearest2: odd extent");
  Tape<T>& t = *a.tape;
  Shape so{s.n, s.c, s.h / 2, s.w / 2};
  std::vector<T> out(so.count());
  const auto& av = t.val(a.id);
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < so.h; ++y)
        for (int x = 0; x < so.w; ++x)
          out[((size_t(b) * s.c + c) * so.h + y) * so.w + x] =
              av[((size_t(b) * s.c + c) * s.h + 2 * y) * s.w + 2 * x];
  bool ng = t.needs_grad(a.id);
  Var<T> yv = t.make(so, std::move(out), ng, {});
  if (ng) {
    int ai = a.id, yi = yv.id;
    t.node(yi).back = [ai, yi, s, so](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      auto& ga = tp.grad(ai);
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < so.h; ++y)
            for (int x = 0; x < so.w; ++x)
              ga[((size_t(b) * s.c + c) * s.h + 2 * y) * s.w + 2 * x] +=
                  g[((size_t(b) * s.c + c) * so.h + y) * so.w + x];
    };
  }
  return yv;
}

// Forward differences. grad_h reduces width by one, grad_v height by one.
template <typename T>
Var<T> grad_h(Var<T> a) {
  Shape s = a.shape();
  require(s.w >= 2, "grad_h: width must be >= 2");
  Tape<T>& t = *a.tape;
  Shape so{s.n, s.c, s.h, s.w - 1};
  std::vector<T> out(so.count());
  const auto& av = t.val(a.id);
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x + 1 < s.w; ++x)
          out[((size_t(b) * s.c + c) * s.h + y) * so.w + x] =
              av[((size_t(b) * s.c + c) * s.h + y) * s.w + x + 1] -
              av[((size_t(b) * s.c + c) * s.h + y) * s.w + x];
  bool ng = t.needs_grad(a.id);
  Var<T> yv = t.make(so, std::move(out), ng, {});
  if (ng) {
    int ai = a.id, yi = yv.id;
    t.node(yi).back = [ai, yi, s, so](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      auto& ga = tp.grad(ai);
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < s.h; ++y)
            for (int x = 0; x + 1 < s.w; ++x) {
              T gv = g[((size_t(b) * s.c + c) * s.h + y) * so.w + x];
              ga[((size_t(b) * s.c + c) * s.h + y) * s.w + x + 1] += gv;
              ga[((size_t(b) * s.c + c) * s.h + y) * s.w + x] -= gv;
            }
    };
  }
  return yv;
}

template <typename T>
Var<T> grad_v(Var<T> a) {
  Shape s = a.shape();
  require(s.h >= 2, "grad_v: height must be >= 2");
  Tape<T>& t = *a.tape;
  Shape so{s.n, s.c, s.h - 1, s.w};
  std::vector<T> out(so.count());
  const auto& av = t.val(a.id);
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y + 1 < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
          out[((size_t(b) * s.c + c) * so.h + y) * s.w + x] =
              av[((size_t(b) * s.c + c) * s.h + y + 1) * s.w + x] -
              av[((size_t(b) * s.c + c) * s.h + y) * s.w + x];
  bool ng = t.needs_grad(a.id);
  Var<T> yv = t.make(so, std::move(out), ng, {});
  if (ng) {
    int ai = a.id, yi = yv.id;
    t.node(yi).back = [ai, yi, s, so](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      auto& ga = tp.grad(ai);
      for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y + 1 < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
              T gv = g[((size_t(b) * s.c + c) * so.h + y) * s.w + x];
              ga[((size_t(b) * s.c + c) * s.h + y + 1) * s.w + x] += gv;
              ga[((size_t(b) * s.c + c) * s.h + y) * s.w + x] -= gv;
            }
    };
  }
  return yv;
}

// operator sugar
template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) {
  return add(a, b);
}
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) {
  return sub(a, b);
}
template <typename T>
Var<T> operator*(Var<T> a, Var<T> b) {
  return mul(a, b);
}

}  // namespace udsr::ad
