#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wic/autograd.hpp"

namespace wic::numgrad {

struct GradCheckOptions {
  double eps = 1e-5;
  // Denominator floor for the relative error, so coordinates whose true
  // gradient is ~0 are judged on absolute error instead. Central differences
  // with eps = 1e-5 carry roundoff near 1e-10, which this floor keeps well
  // below the usual 1e-4 tolerance.
  double floor = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random sample per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t sample_seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

using ScalarFn = std::function<Var(Tape&)>;

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares the reverse-mode gradient of `f` w.r.t. `params` against central
/// differences (f(x+eps) - f(x-eps)) / (2 eps), coordinate by coordinate.
/// Parameter values are restored; gradients are left holding the analytic
/// result.
inline GradCheckReport grad_check(const ScalarFn& f,
                                  std::span<Parameter* const> params,
                                  const GradCheckOptions& opt = {}) {
  zero_grads(params);
  {
    Tape tape;
    tape.backward(f(tape));
  }
  auto evaluate = [&f] {
    Tape tape;
    return f(tape).value()[0];
  };

  GradCheckReport report;
  std::mt19937_64 rng(opt.sample_seed);
  for (Parameter* p : params) {
    const std::size_t n = p->value.size();
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (opt.max_coords_per_param > 0 && n > opt.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_param);
    }
    for (std::size_t i : coords) {
      const double original = p->value[i];
      p->value[i] = original + opt.eps;
      const double up = evaluate();
      p->value[i] = original - opt.eps;
      const double down = evaluate();
      p->value[i] = original;
      const double numeric = (up - down) / (2.0 * opt.eps);
      const double analytic = p->grad[i];
      const double err = relative_error(analytic, numeric, opt.floor);
      ++report.coords_checked;
      if (report.coords_checked == 1 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p->name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace wic::numgrad
