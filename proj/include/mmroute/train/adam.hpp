#pragma once

#include "mmroute/ad/tape.hpp"
#include "mmroute/train/config.hpp"

#include <vector>

namespace mmroute::train {

// Global-norm clipping; returns the norm before clipping.
double clip_global_norm(ad::GradientMap& grads, double max_norm);

class Adam {
public:
  Adam(std::vector<ad::Tensor*> params, AdamConfig config);

  // Parameters missing from `grads` are left untouched, moments included.
  void step(const ad::GradientMap& grads);
  long steps() const { return t_; }

private:
  std::vector<ad::Tensor*> params_;
  std::vector<ad::Matrix> m_;
  std::vector<ad::Matrix> v_;
  AdamConfig config_;
  long t_ = 0;
};

}  // namespace mmroute::train
