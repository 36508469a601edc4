#pragma once

// Central-difference verification of tape gradients. Always runs in 64-bit.
// Coordinates whose perturbed evaluations come within the dead-zone
// tolerance of a kink (relu, leaky-relu, abs, clamp) are skipped.

#include <functional>
#include <vector>

#include "udsr/ad.hpp"

namespace udsr::ad {

struct GradCheckResult {
  double max_rel_err = 0.0;
  long checked = 0;
  long skipped = 0;
};

// f builds a scalar loss from leafed inputs on the given tape.
using ScalarFn =
    std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

inline GradCheckResult gradient_check(const ScalarFn& f,
                                      std::vector<Array<double>> inputs,
                                      double h = 1e-5) {
  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (const auto& a : inputs) vars.push_back(tape.leaf(a, true));
    Var<double> y = f(tape, vars);
    require(y.shape().count() == 1, "gradient_check: f must return a scalar");
    tape.backward(y);
    for (const auto& v : vars) analytic.push_back(tape.grad(v.id));
  }

  auto eval = [&](bool& kink) -> double {
    Tape<double> tape;
    tape.kink_tol = 10.0 * h;
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (const auto& a : inputs) vars.push_back(tape.leaf(a, false));
    Var<double> y = f(tape, vars);
    kink = tape.kink_hit;
    return tape.val(y.id)[0];
  };

  GradCheckResult res;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (size_t i = 0; i < inputs[k].count(); ++i) {
      double x0 = inputs[k][i];
      bool kink_p = false, kink_m = false;
      inputs[k][i] = x0 + h;
      double fp = eval(kink_p);
      inputs[k][i] = x0 - h;
      double fm = eval(kink_m);
      inputs[k][i] = x0;
      if (kink_p || kink_m) {
        ++res.skipped;
        continue;
      }
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic[k][i];
      double rel = std::abs(a - numeric) /
                   std::max({1.0, std::abs(a), std::abs(numeric)});
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace udsr::ad
