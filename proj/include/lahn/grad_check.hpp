#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "lahn/tensor.hpp"

namespace lahn::ad {

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  // Denominator floor for the relative error, so coordinates whose true
  // gradient is ~0 are judged on absolute error instead.
  double floor = 1e-6;
  // 0 checks every coordinate; otherwise an evenly strided subset per input.
  std::size_t max_coords_per_input = 0;
};

struct GradCheckReport {
  bool passed = false;
  bool finite = true;
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
  std::string message;
};

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences. `f` must build its graph on the given tape and be
/// deterministic (reseed any rng inside it on every call).
inline GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f,
                                  std::vector<Tensor> inputs,
                                  const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = f(tape);
    if (!std::isfinite(loss.item())) {
      report.finite = false;
      report.message = "non-finite loss value";
      return report;
    }
    tape.backward(loss);
  }

  auto evaluate = [&f]() {
    Tape tape;
    return f(tape).item();
  };

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& in = inputs[k];
    std::vector<double> analytic = in.has_grad()
                                       ? std::vector<double>(in.grad().begin(), in.grad().end())
                                       : std::vector<double>(in.size(), 0.0);
    const std::size_t n = in.size();
    const std::size_t stride =
        opt.max_coords_per_input == 0 ? 1 : std::max<std::size_t>(1, n / opt.max_coords_per_input);
    auto vals = in.mutable_values();
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = vals[i];
      vals[i] = orig + opt.h;
      const double up = evaluate();
      vals[i] = orig - opt.h;
      const double down = evaluate();
      vals[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.h);
      ++report.coords_checked;
      if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
        report.finite = false;
        report.worst_input = k;
        report.worst_coord = i;
        report.message = "non-finite gradient at input " + std::to_string(k) + " coord " +
                         std::to_string(i);
        return report;
      }
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opt.floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = k;
        report.worst_coord = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < opt.tol;
  report.message = "max relative error " + std::to_string(report.max_rel_error) + " at input " +
                   std::to_string(report.worst_input) + " coord " +
                   std::to_string(report.worst_coord);
  return report;
}

}  // namespace lahn::ad
