#pragma once

#include "mmroute/ad/tape.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mmroute::ad {

struct GradCheckFailure {
  std::string tensor;
  Index row = 0;
  Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::vector<GradCheckFailure> failures;

  bool passed() const { return failures.empty(); }
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
  // round-off on near-zero gradients from reading as a large relative error.
  double floor = 1e-6;
};

using LossExpr = std::function<Var(Tape&)>;

// Compares backward() against central differences for every coordinate of
// every listed tensor. The expression is re-recorded on a fresh tape for each
// perturbation, so it must read the tensors' current values.
GradCheckReport grad_check(const LossExpr& expr, const std::vector<Tensor*>& params,
                           const GradCheckOptions& options = {});

}  // namespace mmroute::ad
