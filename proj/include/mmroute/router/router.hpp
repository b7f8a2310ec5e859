#pragma once

#include "mmroute/experts/experts.hpp"

#include <Eigen/Core>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmroute::router {

using experts::kNumPaths;
using experts::kNumSlots;
using ad::Index;
using ad::Matrix;
using ad::Tape;
using ad::Var;

enum class RoutingMode { soft, hard };
RoutingMode parse_mode(const std::string& s);
std::string to_string(RoutingMode m);

struct RouterConfig {
  std::vector<Index> hidden_dims{32};
  RoutingMode mode = RoutingMode::soft;
  double tau_start = 1.0;
  double tau_end = 0.1;
  double entropy_coef = 0.01;  // λ₀, annealed linearly to 0 over the first half
  bool straight_through = true;

  void validate() const;
};

// Availability bit per modality: 1 unless the whole vector is exactly zero.
Eigen::Vector2d availability(const Eigen::VectorXd& x_num, const Eigen::VectorXd& x_text);
// [x_num, x_text, avail_num, avail_text] per row.
Matrix router_input(const Matrix& x_num, const Matrix& x_text);

class Router {
public:
  Router() = default;
  // Output layers start at zero so an untrained router is uniform.
  static Router make(const experts::ModalityTransforms& transforms, const RouterConfig& config,
                     std::uint64_t seed, ad::FinalInit final_init = ad::FinalInit::zero);

  Var modality_logits(Tape& tape, Var router_in) const;    // B × 4
  Var task_logits(Tape& tape, int path, Var x_path) const;  // B × 2

  std::vector<ad::Tensor*> parameters();
  ad::Mlp& modality() { return modality_; }
  ad::Mlp& task(int path) { return task_[static_cast<std::size_t>(path)]; }
  const ad::Mlp& modality() const { return modality_; }
  const ad::Mlp& task(int path) const { return task_[static_cast<std::size_t>(path)]; }

private:
  ad::Mlp modality_;
  std::array<ad::Mlp, kNumPaths> task_;
};

// Batched routing quantities recorded on a tape.
struct RoutingVars {
  Var pi_mod;      // B × 4
  Var log_pi_mod;  // B × 4
  std::array<Var, kNumPaths> pi_task;      // B × 2 each
  std::array<Var, kNumPaths> log_pi_task;  // B × 2 each
  Var joint;       // B × 8, column 2i + j = π_mod(i)·π_task(i, j)
  Var log_joint;   // B × 8
};

RoutingVars route(Tape& tape, const Router& router, Var router_in,
                  const std::array<Var, kNumPaths>& x_paths);

// Joint weights forced to a constant one-hot on `slot` (router bypassed).
RoutingVars fixed_route(Tape& tape, Index batch, int slot);

struct RoutingState {
  Eigen::Vector4d pi_mod = Eigen::Vector4d::Constant(0.25);
  Eigen::Matrix<double, 4, 2> pi_task = Eigen::Matrix<double, 4, 2>::Constant(0.5);
  Eigen::Matrix<double, 8, 1> joint = Eigen::Matrix<double, 8, 1>::Constant(0.125);
  RoutingMode mode = RoutingMode::soft;
  std::optional<int> selected;

  // Joint from the two stages, in slot order.
  static RoutingState from_stages(const Eigen::Vector4d& pi_mod,
                                  const Eigen::Matrix<double, 4, 2>& pi_task,
                                  RoutingMode mode = RoutingMode::soft);
};

RoutingState route(const Router& router, const experts::ModalityTransforms& transforms,
                   const Eigen::VectorXd& x_num, const Eigen::VectorXd& x_text);
// Row b of a batched routing as a state.
RoutingState state_at(const RoutingVars& vars, Index row);

// Lowest index wins ties.
template <typename Derived>
int argmax_slot(const Eigen::MatrixBase<Derived>& v) {
  int best = 0;
  for (Index k = 1; k < v.size(); ++k)
    if (v(k) > v(best)) best = static_cast<int>(k);
  return best;
}

using SlotOutputs = std::array<experts::ExpertOutput, kNumSlots>;

// Σ joint(s)·ŷ(s) per task.
Eigen::Vector2d soft_predict(const RoutingState& state, const SlotOutputs& outputs);
// Σ joint(s)·paradigm_loss(s).
double expected_loss(const RoutingState& state, const SlotOutputs& outputs, double y1, double y2);

// Tape versions. outputs[s] is B × 4; result B × 2 and B × 1.
Var soft_predict(Var weights, const std::array<Var, kNumSlots>& outputs);
Var expected_loss(Var weights, const std::array<Var, kNumSlots>& outputs, Var y);

inline constexpr double kLogFloor = -1e9;

struct GumbelSample {
  Eigen::Matrix<double, 8, 1> weights;          // softmax((log π + g)/τ)
  Eigen::Matrix<double, 8, 1> forward_weights;  // one-hot when straight-through
  int selected = 0;
};

// log_pi entries below -1e9 (including -inf) are floored to -1e9.
GumbelSample gumbel_select(const Eigen::Matrix<double, 8, 1>& log_pi, double tau,
                           std::uint64_t seed, bool straight_through);

// Standard Gumbel noise, row r drawn from substream (seed, sample_ids[r]).
Matrix gumbel_noise(std::span<const Index> sample_ids, std::uint64_t seed);
// softmax((log_joint + noise)/τ) on the tape; straight-through forwards the
// one-hot argmax and backpropagates the relaxed weights.
Var gumbel_weights(Var log_joint, const Matrix& noise, double tau, bool straight_through);

// Shannon entropy in nats; 0·log 0 = 0.
template <typename Derived>
double entropy(const Eigen::MatrixBase<Derived>& p) {
  double h = 0.0;
  for (Index k = 0; k < p.size(); ++k)
    if (p(k) > 0.0) h -= p(k) * std::log(p(k));
  return h;
}

// −λ·[H(π_mod) + mean over paths of H(π_task row)].
double entropy_penalty(const RoutingState& state, double lambda);
// Batch mean of the above on the tape.
Var entropy_penalty(const RoutingVars& vars, double lambda);

double entropy_coef_at(double lambda0, int epoch, int epochs);
double tau_at(double tau_start, double tau_end, int epoch, int epochs);

struct JointPmf {
  Eigen::Matrix<double, 8, 1> mean;
  Matrix per_sample;  // n × 8
};

JointPmf joint_pmf(std::span<const RoutingState> states);

}  // namespace mmroute::router
