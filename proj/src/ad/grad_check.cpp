#include "mmroute/ad/grad_check.hpp"

#include "mmroute/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mmroute::ad {

namespace {

double evaluate(const LossExpr& expr) {
  Tape tape;
  return expr(tape).item();
}

}  // namespace

GradCheckReport grad_check(const LossExpr& expr, const std::vector<Tensor*>& params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ContractError("grad_check step must be positive");

  std::vector<Matrix> analytic;
  {
    Tape tape;
    Var loss = expr(tape);
    GradientMap grads = backward(tape, loss);
    for (Tensor* p : params)
      analytic.push_back(grads.contains(*p) ? grads.at(*p)
                                            : Matrix::Zero(p->values().rows(),
                                                           p->values().cols()));
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& w = params[k]->values();
    for (Index c = 0; c < w.cols(); ++c) {
      for (Index r = 0; r < w.rows(); ++r) {
        const double saved = w(r, c);
        w(r, c) = saved + options.step;
        const double up = evaluate(expr);
        w(r, c) = saved - options.step;
        const double down = evaluate(expr);
        w(r, c) = saved;

        const double numeric = (up - down) / (2.0 * options.step);
        const double a = analytic[k](r, c);
        const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
        const double rel = std::abs(a - numeric) / denom;
        report.max_relative_error = std::max(report.max_relative_error, rel);
        ++report.coordinates;
        if (!(rel < options.tolerance))
          report.failures.push_back({params[k]->name(), r, c, a, numeric, rel});
      }
    }
  }
  return report;
}

}  // namespace mmroute::ad
