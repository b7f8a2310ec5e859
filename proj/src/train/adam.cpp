#include "mmroute/train/adam.hpp"

#include "mmroute/errors.hpp"

#include <cmath>

namespace mmroute::train {

double clip_global_norm(ad::GradientMap& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) grads *= max_norm / norm;
  return norm;
}

Adam::Adam(std::vector<ad::Tensor*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const ad::Tensor* p : params_) {
    m_.push_back(ad::Matrix::Zero(p->values().rows(), p->values().cols()));
    v_.push_back(ad::Matrix::Zero(p->values().rows(), p->values().cols()));
  }
}

void Adam::step(const ad::GradientMap& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ad::Tensor& p = *params_[k];
    if (!grads.contains(p)) continue;
    const ad::Matrix& g = grads.at(p);
    if (g.rows() != p.values().rows() || g.cols() != p.values().cols())
      throw ShapeError("gradient shape does not match " + p.name());
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g;
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    if (config_.weight_decay > 0.0) p.values() *= 1.0 - config_.lr * config_.weight_decay;
    p.values().array() -=
        config_.lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + config_.eps);
  }
}

}  // namespace mmroute::train
