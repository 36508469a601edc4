#pragma once

// Trainable parameters and the network-level ops: conv2d, group/instance
// normalization, spectral normalization and the Adam update.

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "udsr/ad.hpp"

namespace udsr::ad {

enum class ParamRole { ConvWeight, Bias, Gain, Shift };

template <typename T>
struct Parameter {
  std::string name;
  ParamRole role = ParamRole::ConvWeight;
  Array<T> value;
  Array<T> grad;
  Array<T> m, v;  // Adam moments
  int64_t steps = 0;

  // Spectral normalization state (persistent power-iteration vectors).
  bool spectral = false;
  std::vector<T> sn_u, sn_v;

  void init(std::string nm, Shape s, ParamRole r) {
    name = std::move(nm);
    role = r;
    value = Array<T>(s);
    grad = Array<T>(s);
    m = Array<T>(s);
    v = Array<T>(s);
    steps = 0;
  }
  size_t count() const { return value.count(); }
};

// Puts a parameter on the tape (memoized per tape, so several uses of one
// weight share a node and their gradients accumulate).
template <typename T>
Var<T> use(Tape<T>& tape, Parameter<T>& p, bool needs_grad = true) {
  return tape.keyed_leaf(&p, p.value, needs_grad);
}

// Copies accumulated tape gradients back into the parameters after backward().
template <typename T>
void export_grads(Tape<T>& tape, const std::vector<Parameter<T>*>& params) {
  for (Parameter<T>* p : params) {
    int id = tape.keyed_node(p);
    if (id < 0 || !tape.needs_grad(id)) {
      std::fill(p->grad.v.begin(), p->grad.v.end(), T(0));
      continue;
    }
    const auto& g = tape.grad(id);
    std::copy(g.begin(), g.end(), p->grad.v.begin());
  }
}

// ---- conv2d ----
// Cross-correlation with zero padding. x: [n, ci, h, w], w: [co, ci, k, k],
// b: [co]. stride 1 or 2.

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  Tape<T>& t = *x.tape;
  Shape xs = x.shape(), ws = w.shape(), bs = b.shape();
  require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  require(ws.h == ws.w, "conv2d: kernel must be square");
  require(xs.c == ws.c, "conv2d: input channels (" + std::to_string(xs.c) +
                            ") do not match kernel (" + std::to_string(ws.c) + ")");
  require(bs.count() == size_t(ws.n), "conv2d: bias size mismatch");
  const int k = ws.h;
  const int oh = (xs.h + 2 * pad - k) / stride + 1;
  const int ow = (xs.w + 2 * pad - k) / stride + 1;
  require(oh >= 1 && ow >= 1, "conv2d: output would be empty");

  Shape os{xs.n, ws.n, oh, ow};
  std::vector<T> out(os.count());
  {
    const T* xv = t.val(x.id).data();
    const T* wv = t.val(w.id).data();
    const T* bv = t.val(b.id).data();
    // Shift-and-accumulate: for each kernel tap, add a scaled row of the
    // input to a contiguous span of the output row. Keeps the inner loop
    // branch-free and vectorizable.
    const bool par = os.count() * size_t(xs.c) * k * k > size_t(1) << 14;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int n = 0; n < xs.n; ++n)
      for (int oc = 0; oc < ws.n; ++oc) {
        T* op = out.data() + (size_t(n) * ws.n + oc) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) op[i] = bv[oc];
        for (int ic = 0; ic < xs.c; ++ic) {
          const T* xp = xv + (size_t(n) * xs.c + ic) * xs.h * xs.w;
          const T* wp = wv + ((size_t(oc) * xs.c + ic) * k) * k;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              T wgt = wp[size_t(ky) * k + kx];
              if (wgt == T(0)) continue;
              for (int oy = 0; oy < oh; ++oy) {
                int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= xs.h) continue;
                // valid ox range: 0 <= ox*stride - pad + kx < xs.w
                int lo = std::max(0, (pad - kx + stride - 1) / stride);
                int hi = std::min(ow - 1, (xs.w - 1 + pad - kx) / stride);
                T* orow = op + size_t(oy) * ow;
                const T* xrow = xp + size_t(iy) * xs.w;
                const int off = kx - pad;
                if (stride == 1)
                  for (int ox = lo; ox <= hi; ++ox) orow[ox] += wgt * xrow[ox + off];
                else
                  for (int ox = lo; ox <= hi; ++ox)
                    orow[ox] += wgt * xrow[2 * ox + off];
              }
            }
        }
      }
  }

  bool ng = t.needs_grad(x.id) || t.needs_grad(w.id) || t.needs_grad(b.id);
  Var<T> y = t.make(os, std::move(out), ng, {});
  if (!ng) return y;

  int xi = x.id, wi = w.id, bi = b.id, yi = y.id;
  t.node(yi).back = [xi, wi, bi, yi, xs, ws, os, stride, pad, k](Tape<T>& tp) {
    const T* g = tp.grad(yi).data();
    const T* xv = tp.val(xi).data();
    const T* wv = tp.val(wi).data();
    const int oh = os.h, ow = os.w;

    if (tp.needs_grad(xi)) {
      T* gx = tp.grad(xi).data();
      const bool par = size_t(xs.n) * xs.c > 1;
#pragma omp parallel for collapse(2) schedule(static) if (par)
      for (int n = 0; n < xs.n; ++n)
        for (int ic = 0; ic < xs.c; ++ic) {
          T* gxp = gx + (size_t(n) * xs.c + ic) * xs.h * xs.w;
          for (int oc = 0; oc < ws.n; ++oc) {
            const T* gp = g + (size_t(n) * ws.n + oc) * oh * ow;
            const T* wp = wv + ((size_t(oc) * xs.c + ic) * k) * k;
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                T wgt = wp[size_t(ky) * k + kx];
                if (wgt == T(0)) continue;
                for (int oy = 0; oy < oh; ++oy) {
                  int iy = oy * stride - pad + ky;
                  if (iy < 0 || iy >= xs.h) continue;
                  int lo = std::max(0, (pad - kx + stride - 1) / stride);
                  int hi = std::min(ow - 1, (xs.w - 1 + pad - kx) / stride);
                  const T* grow = gp + size_t(oy) * ow;
                  T* xrow = gxp + size_t(iy) * xs.w;
                  const int off = kx - pad;
                  if (stride == 1)
                    for (int ox = lo; ox <= hi; ++ox) xrow[ox + off] += wgt * grow[ox];
                  else
                    for (int ox = lo; ox <= hi; ++ox)
                      xrow[2 * ox + off] += wgt * grow[ox];
                }
              }
          }
        }
    }

    if (tp.needs_grad(wi)) {
      T* gw = tp.grad(wi).data();
      const bool par = size_t(ws.n) * xs.c > 1;
#pragma omp parallel for collapse(2) schedule(static) if (par)
      for (int oc = 0; oc < ws.n; ++oc)
        for (int ic = 0; ic < xs.c; ++ic) {
          T* gwp = gw + ((size_t(oc) * xs.c + ic) * k) * k;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              T acc = T(0);
              for (int n = 0; n < xs.n; ++n) {
                const T* gp = g + (size_t(n) * ws.n + oc) * oh * ow;
                const T* xp = xv + (size_t(n) * xs.c + ic) * xs.h * xs.w;
                for (int oy = 0; oy < oh; ++oy) {
                  int iy = oy * stride - pad + ky;
                  if (iy < 0 || iy >= xs.h) continue;
                  int lo = std::max(0, (pad - kx + stride - 1) / stride);
                  int hi = std::min(ow - 1, (xs.w - 1 + pad - kx) / stride);
                  const T* grow = gp + size_t(oy) * ow;
                  const T* xrow = xp + size_t(iy) * xs.w;
                  const int off = kx - pad;
                  if (stride == 1)
                    for (int ox = lo; ox <= hi; ++ox) acc += grow[ox] * xrow[ox + off];
                  else
                    for (int ox = lo; ox <= hi; ++ox)
                      acc += grow[ox] * xrow[2 * ox + off];
                }
              }
              gwp[size_t(ky) * k + kx] += acc;
            }
        }
    }

    if (tp.needs_grad(bi)) {
      T* gb = tp.grad(bi).data();
      for (int oc = 0; oc < ws.n; ++oc) {
        T acc = T(0);
        for (int n = 0; n < xs.n; ++n) {
          const T* gp = g + (size_t(n) * ws.n + oc) * oh * ow;
          for (int i = 0; i < oh * ow; ++i) acc += gp[i];
        }
        gb[oc] += acc;
      }
    }
  };
  return y;
}

// ---- group normalization ----
// Per-sample, per-group standardization (biased variance, eps = 1e-5)
// followed by a per-channel affine transform.

template <typename T>
Var<T> group_norm(Var<T> x, int groups, Var<T> gain, Var<T> shift,
                  T eps = T(1e-5)) {
  Tape<T>& t = *x.tape;
  Shape xs = x.shape();
  require(groups >= 1 && xs.c % groups == 0,
          "group_norm: channels (" + std::to_string(xs.c) +
              ") not divisible by groups (" + std::to_string(groups) + ")");
  require(gain.shape().count() == size_t(xs.c) &&
              shift.shape().count() == size_t(xs.c),
          "group_norm: affine parameter size mismatch");

  const int cpg = xs.c / groups;
  const size_t plane = size_t(xs.h) * xs.w;
  const size_t gsize = cpg * plane;

  const auto& xv = t.val(x.id);
  const auto& gv = t.val(gain.id);
  const auto& sv = t.val(shift.id);
  std::vector<T> out(xv.size());
  std::vector<T> mu(size_t(xs.n) * groups), inv_sd(size_t(xs.n) * groups);

  for (int n = 0; n < xs.n; ++n)
    for (int g = 0; g < groups; ++g) {
      const T* xp = xv.data() + (size_t(n) * xs.c + size_t(g) * cpg) * plane;
      T sum = T(0), sum2 = T(0);
      for (size_t i = 0; i < gsize; ++i) {
        sum += xp[i];
        sum2 += xp[i] * xp[i];
      }
      T mean = sum / T(gsize);
      T var = sum2 / T(gsize) - mean * mean;
      if (var < T(0)) var = T(0);
      T isd = T(1) / std::sqrt(var + eps);
      mu[size_t(n) * groups + g] = mean;
      inv_sd[size_t(n) * groups + g] = isd;
      T* op = out.data() + (size_t(n) * xs.c + size_t(g) * cpg) * plane;
      for (int c = 0; c < cpg; ++c) {
        T ga = gv[size_t(g) * cpg + c];
        T sh = sv[size_t(g) * cpg + c];
        for (size_t i = 0; i < plane; ++i) {
          T xhat = (xp[c * plane + i] - mean) * isd;
          op[c * plane + i] = ga * xhat + sh;
        }
      }
    }

  bool ng = t.needs_grad(x.id) || t.needs_grad(gain.id) || t.needs_grad(shift.id);
  Var<T> y = t.make(xs, std::move(out), ng, {});
  if (!ng) return y;

  int xi = x.id, gi = gain.id, si = shift.id, yi = y.id;
  t.node(yi).back = [xi, gi, si, yi, xs, groups, cpg, plane, gsize, mu,
                     inv_sd](Tape<T>& tp) {
    const auto& g = tp.grad(yi);
    const auto& xv2 = tp.val(xi);
    const auto& gv2 = tp.val(gi);
    const bool need_x = tp.needs_grad(xi);
    const bool need_gain = tp.needs_grad(gi);
    const bool need_shift = tp.needs_grad(si);

    for (int n = 0; n < xs.n; ++n)
      for (int grp = 0; grp < groups; ++grp) {
        size_t base = (size_t(n) * xs.c + size_t(grp) * cpg) * plane;
        T mean = mu[size_t(n) * groups + grp];
        T isd = inv_sd[size_t(n) * groups + grp];

        if (need_gain || need_shift) {
          for (int c = 0; c < cpg; ++c) {
            T dg = T(0), ds = T(0);
            for (size_t i = 0; i < plane; ++i) {
              T go = g[base + c * plane + i];
              T xhat = (xv2[base + c * plane + i] - mean) * isd;
              dg += go * xhat;
              ds += go;
            }
            if (need_gain) tp.grad(gi)[size_t(grp) * cpg + c] += dg;
            if (need_shift) tp.grad(si)[size_t(grp) * cpg + c] += ds;
          }
        }

        if (need_x) {
          // dL/dxhat = dy * gain; dL/dx from the standardization jacobian.
          T sum_d = T(0), sum_dx = T(0);
          for (int c = 0; c < cpg; ++c) {
            T ga = gv2[size_t(grp) * cpg + c];
            for (size_t i = 0; i < plane; ++i) {
              T d = g[base + c * plane + i] * ga;
              T xhat = (xv2[base + c * plane + i] - mean) * isd;
              sum_d += d;
              sum_dx += d * xhat;
            }
          }
          T inv_m = T(1) / T(gsize);
          auto& gx = tp.grad(xi);
          for (int c = 0; c < cpg; ++c) {
            T ga = gv2[size_t(grp) * cpg + c];
            for (size_t i = 0; i < plane; ++i) {
              T d = g[base + c * plane + i] * ga;
              T xhat = (xv2[base + c * plane + i] - mean) * isd;
              gx[base + c * plane + i] +=
                  isd * (d - inv_m * sum_d - xhat * inv_m * sum_dx);
            }
          }
        }
      }
  };
  return y;
}

template <typename T>
Var<T> instance_norm(Var<T> x, Var<T> gain, Var<T> shift, T eps = T(1e-5)) {
  return group_norm(x, x.shape().c, gain, shift, eps);
}

// ---- spectral normalization ----
// Returns w / sigma with sigma = u^T W v, W the weight reshaped to
// [out_channels, rest] and u, v the persistent power-iteration vectors.
// Backward treats u and v as constants:
// dW = (g - <g, w_sn> u v^T) / sigma.

// Plain power iteration on the reshaped weight; advances u and v in place.
template <typename T>
void power_iterate(const Array<T>& w, std::vector<T>& u, std::vector<T>& v,
                   int iterations) {
  const int rows = w.shape.n;
  const int cols = int(w.count() / size_t(rows));
  require(u.size() == size_t(rows) && v.size() == size_t(cols),
          "power_iterate: vector size mismatch");
  const T* wv = w.v.data();
  for (int it = 0; it < iterations; ++it) {
    for (int j = 0; j < cols; ++j) {
      T acc = T(0);
      for (int i = 0; i < rows; ++i) acc += wv[size_t(i) * cols + j] * u[i];
      v[j] = acc;
    }
    T vn = T(0);
    for (int j = 0; j < cols; ++j) vn += v[j] * v[j];
    vn = std::sqrt(vn) + T(1e-12);
    for (int j = 0; j < cols; ++j) v[j] /= vn;
    for (int i = 0; i < rows; ++i) {
      T acc = T(0);
      for (int j = 0; j < cols; ++j) acc += wv[size_t(i) * cols + j] * v[j];
      u[i] = acc;
    }
    T un = T(0);
    for (int i = 0; i < rows; ++i) un += u[i] * u[i];
    un = std::sqrt(un) + T(1e-12);
    for (int i = 0; i < rows; ++i) u[i] /= un;
  }
}

template <typename T>
T sigma_estimate(const Array<T>& w, const std::vector<T>& u,
                 const std::vector<T>& v) {
  const int rows = w.shape.n;
  const int cols = int(w.count() / size_t(rows));
  T sigma = T(0);
  for (int i = 0; i < rows; ++i) {
    T acc = T(0);
    for (int j = 0; j < cols; ++j) acc += w.v[size_t(i) * cols + j] * v[j];
    sigma += u[i] * acc;
  }
  return sigma;
}

// Tape op dividing an already-leafed weight by sigma computed from fixed
// u, v. sigma is clamped to 1e-12 for a zero matrix.
template <typename T>
Var<T> spectral_norm_apply(Var<T> w, const std::vector<T>& u,
                           const std::vector<T>& v) {
  Tape<T>& t = *w.tape;
  Shape ws = w.shape();
  const int rows = ws.n;
  const int cols = int(ws.count() / size_t(rows));
  require(u.size() == size_t(rows) && v.size() == size_t(cols),
          "spectral_norm_apply: vector size mismatch");
  Array<T> warr(ws, std::vector<T>(t.val(w.id)));
  T sigma = sigma_estimate(warr, u, v);
  if (std::abs(double(sigma)) < 1e-12) sigma = T(1e-12);

  std::vector<T> out(t.val(w.id));
  T inv_sigma = T(1) / sigma;
  for (T& x : out) x *= inv_sigma;
  bool ng = t.needs_grad(w.id);
  Var<T> y = t.make(ws, std::move(out), ng, {});
  if (ng) {
    int wi = w.id, yi = y.id;
    std::vector<T> uc = u, vc = v;
    t.node(yi).back = [wi, yi, uc, vc, inv_sigma, rows, cols](Tape<T>& tp) {
      const auto& g = tp.grad(yi);
      const auto& yv = tp.val(yi);
      T dot = T(0);
      for (size_t i = 0; i < g.size(); ++i) dot += g[i] * yv[i];
      auto& gw = tp.grad(wi);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          size_t idx = size_t(i) * cols + j;
          gw[idx] += (g[idx] - dot * uc[i] * vc[j]) * inv_sigma;
        }
    };
  }
  return y;
}

// Persistent-state form used by the discriminators (default one power
// iteration per forward when training).
template <typename T>
Var<T> spectral_norm(Tape<T>& tape, Parameter<T>& p, int iterations, bool update,
                     bool needs_grad = true) {
  Shape ws = p.value.shape;
  const int rows = ws.n;
  const int cols = int(ws.count() / size_t(rows));
  require(rows >= 1 && cols >= 1, "spectral_norm: empty weight");
  require(iterations >= 0, "spectral_norm: negative iteration count");

  bool fresh = p.sn_u.size() != size_t(rows) || p.sn_v.size() != size_t(cols);
  if (fresh) {
    p.sn_u.assign(rows, T(0));
    p.sn_v.assign(cols, T(0));
    Rng r(mix_seed(0x5eedu, hash_str(p.name)));
    T nrm = T(0);
    for (int i = 0; i < rows; ++i) {
      p.sn_u[i] = T(r.normal());
      nrm += p.sn_u[i] * p.sn_u[i];
    }
    nrm = std::sqrt(nrm) + T(1e-12);
    for (int i = 0; i < rows; ++i) p.sn_u[i] /= nrm;
  }
  if (update || fresh)
    power_iterate(p.value, p.sn_u, p.sn_v, std::max(iterations, fresh ? 1 : 0));

  Var<T> w = use(tape, p, needs_grad);
  return spectral_norm_apply(w, p.sn_u, p.sn_v);
}

// ---- optimizer ----

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Bias-corrected Adam; weight decay is added to the gradient before the
// moment updates (classic Adam-with-decay).
template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, const AdamConfig& cfg) {
  for (Parameter<T>* p : params) {
    p->steps += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, double(p->steps));
    double bc2 = 1.0 - std::pow(cfg.beta2, double(p->steps));
    for (size_t i = 0; i < p->count(); ++i) {
      double g = double(p->grad[i]);
      if (!std::isfinite(g))
        throw Error("non-finite gradient in parameter '" + p->name + "'");
      g += cfg.weight_decay * double(p->value[i]);
      double m = cfg.beta1 * double(p->m[i]) + (1.0 - cfg.beta1) * g;
      double v = cfg.beta2 * double(p->v[i]) + (1.0 - cfg.beta2) * g * g;
      p->m[i] = T(m);
      p->v[i] = T(v);
      double mhat = m / bc1;
      double vhat = v / bc2;
      p->value[i] = T(double(p->value[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

// ---- initialization ----

// Xavier-uniform weights, zero biases, unit gains, zero shifts. Parameters
// are visited in registration order, so a seed fixes every bit.
template <typename T>
void xavier_init(const std::vector<Parameter<T>*>& params, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x1a11ce));
  for (Parameter<T>* p : params) {
    switch (p->role) {
      case ParamRole::ConvWeight: {
        Shape s = p->value.shape;
        double fan_in = double(s.c) * s.h * s.w;
        double fan_out = double(s.n) * s.h * s.w;
        double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (size_t i = 0; i < p->count(); ++i)
          p->value[i] = T(rng.uniform(-limit, limit));
        break;
      }
      case ParamRole::Bias:
      case ParamRole::Shift:
        std::fill(p->value.v.begin(), p->value.v.end(), T(0));
        break;
      case ParamRole::Gain:
        std::fill(p->value.v.begin(), p->value.v.end(), T(1));
        break;
    }
    std::fill(p->m.v.begin(), p->m.v.end(), T(0));
    std::fill(p->v.v.begin(), p->v.v.end(), T(0));
    p->steps = 0;
  }
}

template <typename T>
size_t param_count(const std::vector<Parameter<T>*>& params) {
  size_t n = 0;
  for (const Parameter<T>* p : params) n += p->count();
  return n;
}

// FNV-1a over the raw value bytes; used by freeze-discipline checks.
template <typename T>
uint64_t params_hash(const std::vector<Parameter<T>*>& params) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter<T>* p : params) {
    const unsigned char* bytes =
        reinterpret_cast<const unsigned char*>(p->value.v.data());
    for (size_t i = 0; i < p->count() * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace udsr::ad
