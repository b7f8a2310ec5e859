#pragma once

#include "mmroute/errors.hpp"
#include "mmroute/rng.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <string>

namespace mmroute::synth {

using Eigen::Index;

// Random Fourier feature map x ↦ √(2/D)·cos(W x + b), frozen once sampled.
struct RffMap {
  Eigen::MatrixXd weight;  // D × d, entries ~ N(0, 1)
  Eigen::VectorXd bias;    // D, entries ~ U[0, 2π]

  Index output_dim() const { return weight.rows(); }
  Index input_dim() const { return weight.cols(); }
  double amplitude() const { return std::sqrt(2.0 / static_cast<double>(output_dim())); }

  static RffMap sample(Index output_dim, Index input_dim, Rng& rng) {
    RffMap m{Eigen::MatrixXd(output_dim, input_dim), Eigen::VectorXd(output_dim)};
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (Index r = 0; r < output_dim; ++r)
      for (Index c = 0; c < input_dim; ++c) m.weight(r, c) = normal(rng);
    for (Index r = 0; r < output_dim; ++r) m.bias(r) = phase(rng);
    return m;
  }
};

template <typename Derived>
Eigen::VectorXd rff_features(const RffMap& map, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != map.input_dim())
    throw ShapeError("RFF map expects input dim " + std::to_string(map.input_dim()) + ", got " +
                     std::to_string(x.size()));
  return map.amplitude() * (map.weight * x + map.bias).array().cos().matrix();
}

// Row-wise: X is n × d, result n × D.
template <typename Derived>
Eigen::MatrixXd rff_features_rows(const RffMap& map, const Eigen::MatrixBase<Derived>& x) {
  if (x.cols() != map.input_dim())
    throw ShapeError("RFF map expects input dim " + std::to_string(map.input_dim()) + ", got " +
                     std::to_string(x.cols()));
  Eigen::MatrixXd z = x * map.weight.transpose();
  z.rowwise() += map.bias.transpose();
  return map.amplitude() * z.array().cos().matrix();
}

}  // namespace mmroute::synth
