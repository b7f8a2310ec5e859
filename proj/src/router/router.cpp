#include "mmroute/router/router.hpp"

#include <cmath>

namespace mmroute::router {

RoutingMode parse_mode(const std::string& s) {
  if (s == "soft") return RoutingMode::soft;
  if (s == "hard") return RoutingMode::hard;
  throw ConfigError("router.mode must be soft or hard, got '" + s + "'");
}

std::string to_string(RoutingMode m) { return m == RoutingMode::soft ? "soft" : "hard"; }

void RouterConfig::validate() const {
  for (Index h : hidden_dims)
    if (h <= 0) throw ConfigError("router.hidden_dims entries must be positive");
  if (!(tau_start > 0.0) || !(tau_end > 0.0)) throw ConfigError("router temperatures must be > 0");
  if (!(entropy_coef >= 0.0)) throw ConfigError("router.entropy_coef must be >= 0");
}

Eigen::Vector2d availability(const Eigen::VectorXd& x_num, const Eigen::VectorXd& x_text) {
  return {(x_num.array() != 0.0).any() ? 1.0 : 0.0, (x_text.array() != 0.0).any() ? 1.0 : 0.0};
}

Matrix router_input(const Matrix& x_num, const Matrix& x_text) {
  if (x_num.rows() != x_text.rows()) throw ShapeError("modality batches differ in length");
  Matrix out(x_num.rows(), x_num.cols() + x_text.cols() + 2);
  out << x_num, x_text, Matrix::Zero(x_num.rows(), 2);
  for (Index r = 0; r < out.rows(); ++r) {
    out(r, out.cols() - 2) = (x_num.row(r).array() != 0.0).any() ? 1.0 : 0.0;
    out(r, out.cols() - 1) = (x_text.row(r).array() != 0.0).any() ? 1.0 : 0.0;
  }
  return out;
}

Router Router::make(const experts::ModalityTransforms& transforms, const RouterConfig& config,
                    std::uint64_t seed, ad::FinalInit final_init) {
  config.validate();
  Router r;
  {
    Rng rng(derive_seed(seed, "router/modality"));
    r.modality_ = ad::Mlp::make(transforms.d_num() + transforms.d_text() + 2, config.hidden_dims,
                                kNumPaths, ad::Activation::tanh, rng, final_init,
                                "router/modality");
  }
  for (int i = 0; i < kNumPaths; ++i) {
    const auto path = static_cast<experts::ModalityPath>(i);
    Rng rng(derive_seed(seed, hash_tag("router/task"), static_cast<std::uint64_t>(i)));
    r.task_[static_cast<std::size_t>(i)] =
        ad::Mlp::make(transforms.input_dim(path), config.hidden_dims, 2, ad::Activation::tanh, rng,
                      final_init, "router/task/" + experts::to_string(path));
  }
  return r;
}

Var Router::modality_logits(Tape& tape, Var router_in) const {
  return modality_.forward(tape, router_in);
}

Var Router::task_logits(Tape& tape, int path, Var x_path) const {
  return task_[static_cast<std::size_t>(path)].forward(tape, x_path);
}

std::vector<ad::Tensor*> Router::parameters() {
  std::vector<ad::Tensor*> out = modality_.parameters();
  for (auto& t : task_) {
    auto p = t.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

RoutingVars route(Tape& tape, const Router& router, Var router_in,
                  const std::array<Var, kNumPaths>& x_paths) {
  RoutingVars v;
  Var logits = router.modality_logits(tape, router_in);
  v.pi_mod = ad::softmax(logits);
  v.log_pi_mod = ad::log_softmax(logits);
  std::vector<Var> joint_cols;
  std::vector<Var> log_cols;
  for (int i = 0; i < kNumPaths; ++i) {
    Var t = router.task_logits(tape, i, x_paths[static_cast<std::size_t>(i)]);
    auto& pt = v.pi_task[static_cast<std::size_t>(i)];
    auto& lpt = v.log_pi_task[static_cast<std::size_t>(i)];
    pt = ad::softmax(t);
    lpt = ad::log_softmax(t);
    for (int j = 0; j < 2; ++j) {
      joint_cols.push_back(ad::col(v.pi_mod, i) * ad::col(pt, j));
      log_cols.push_back(ad::col(v.log_pi_mod, i) + ad::col(lpt, j));
    }
  }
  v.joint = ad::concat(joint_cols);
  v.log_joint = ad::concat(log_cols);
  return v;
}

RoutingVars fixed_route(Tape& tape, Index batch, int slot) {
  if (slot < 0 || slot >= kNumSlots) throw ContractError("fixed slot out of range");
  const int path = slot / 2;
  const int paradigm = slot % 2;
  RoutingVars v;
  Matrix mod = Matrix::Zero(batch, kNumPaths);
  mod.col(path).setOnes();
  v.pi_mod = tape.constant(mod);
  v.log_pi_mod = tape.constant(
      (mod.array() > 0.0).select(Matrix::Zero(batch, kNumPaths), kLogFloor));
  for (int i = 0; i < kNumPaths; ++i) {
    Matrix t = Matrix::Zero(batch, 2);
    t.col(i == path ? paradigm : 0).setOnes();
    v.pi_task[static_cast<std::size_t>(i)] = tape.constant(t);
    v.log_pi_task[static_cast<std::size_t>(i)] =
        tape.constant((t.array() > 0.0).select(Matrix::Zero(batch, 2), kLogFloor));
  }
  Matrix joint = Matrix::Zero(batch, kNumSlots);
  joint.col(slot).setOnes();
  v.joint = tape.constant(joint);
  v.log_joint = tape.constant(
      (joint.array() > 0.0).select(Matrix::Zero(batch, kNumSlots), kLogFloor));
  return v;
}

RoutingState RoutingState::from_stages(const Eigen::Vector4d& pi_mod,
                                       const Eigen::Matrix<double, 4, 2>& pi_task,
                                       RoutingMode mode) {
  RoutingState s;
  s.pi_mod = pi_mod;
  s.pi_task = pi_task;
  s.mode = mode;
  for (int i = 0; i < kNumPaths; ++i)
    for (int j = 0; j < 2; ++j) s.joint(2 * i + j) = pi_mod(i) * pi_task(i, j);
  if (mode == RoutingMode::hard) s.selected = argmax_slot(s.joint);
  return s;
}

RoutingState state_at(const RoutingVars& vars, Index row) {
  RoutingState s;
  s.pi_mod = vars.pi_mod.value().row(row).transpose();
  for (int i = 0; i < kNumPaths; ++i)
    s.pi_task.row(i) = vars.pi_task[static_cast<std::size_t>(i)].value().row(row);
  s.joint = vars.joint.value().row(row).transpose();
  return s;
}

RoutingState route(const Router& router, const experts::ModalityTransforms& transforms,
                   const Eigen::VectorXd& x_num, const Eigen::VectorXd& x_text) {
  Tape tape;
  const Matrix xn = x_num.transpose();
  const Matrix xt = x_text.transpose();
  std::array<Var, kNumPaths> paths;
  for (int i = 0; i < kNumPaths; ++i)
    paths[static_cast<std::size_t>(i)] =
        tape.constant(transforms.apply(static_cast<experts::ModalityPath>(i), xn, xt));
  const RoutingVars v = route(tape, router, tape.constant(router_input(xn, xt)), paths);
  if (!v.joint.value().allFinite()) throw NumericError("routing produced non-finite weights");
  return state_at(v, 0);
}

Eigen::Vector2d soft_predict(const RoutingState& state, const SlotOutputs& outputs) {
  Eigen::Vector2d y = Eigen::Vector2d::Zero();
  for (int s = 0; s < kNumSlots; ++s) {
    const auto& o = outputs[static_cast<std::size_t>(s)];
    y(0) += state.joint(s) * o.mean1;
    y(1) += state.joint(s) * o.mean2;
  }
  return y;
}

double expected_loss(const RoutingState& state, const SlotOutputs& outputs, double y1, double y2) {
  double total = 0.0;
  for (int s = 0; s < kNumSlots; ++s)
    total += state.joint(s) * experts::paradigm_loss(outputs[static_cast<std::size_t>(s)], y1, y2);
  return total;
}

Var soft_predict(Var weights, const std::array<Var, kNumSlots>& outputs) {
  Var acc;
  for (int s = 0; s < kNumSlots; ++s) {
    const Var& out = outputs[static_cast<std::size_t>(s)];
    if (!out.valid()) continue;
    Var means = ad::concat(ad::col(out, 0), ad::col(out, 2));
    Var term = means * ad::col(weights, s);
    acc = acc.valid() ? acc + term : term;
  }
  if (!acc.valid()) throw ContractError("soft_predict with no expert outputs");
  return acc;
}

Var expected_loss(Var weights, const std::array<Var, kNumSlots>& outputs, Var y) {
  Var acc;
  for (int s = 0; s < kNumSlots; ++s) {
    const Var& out = outputs[static_cast<std::size_t>(s)];
    if (!out.valid()) continue;
    Var term = ad::col(weights, s) * experts::paradigm_loss(out, y);
    acc = acc.valid() ? acc + term : term;
  }
  if (!acc.valid()) throw ContractError("expected_loss with no expert outputs");
  return acc;
}

namespace {

double standard_gumbel(std::uint64_t key) { return -std::log(-std::log(counter_uniform(key))); }

}  // namespace

GumbelSample gumbel_select(const Eigen::Matrix<double, 8, 1>& log_pi, double tau,
                           std::uint64_t seed, bool straight_through) {
  if (!(tau > 0.0)) throw ContractError("Gumbel temperature must be positive");
  Eigen::Matrix<double, 8, 1> z;
  for (int s = 0; s < kNumSlots; ++s) {
    const double lp = std::isnan(log_pi(s)) ? kLogFloor : std::max(log_pi(s), kLogFloor);
    z(s) = (lp + standard_gumbel(derive_seed(seed, static_cast<std::uint64_t>(s)))) / tau;
  }
  GumbelSample out;
  out.weights = (z.array() - z.maxCoeff()).exp().matrix();
  out.weights /= out.weights.sum();
  out.selected = argmax_slot(z);
  if (straight_through) {
    out.forward_weights.setZero();
    out.forward_weights(out.selected) = 1.0;
  } else {
    out.forward_weights = out.weights;
  }
  return out;
}

Matrix gumbel_noise(std::span<const Index> sample_ids, std::uint64_t seed) {
  Matrix g(static_cast<Index>(sample_ids.size()), kNumSlots);
  for (Index r = 0; r < g.rows(); ++r) {
    const std::uint64_t sub = derive_seed(seed, static_cast<std::uint64_t>(sample_ids[static_cast<std::size_t>(r)]));
    for (int s = 0; s < kNumSlots; ++s)
      g(r, s) = standard_gumbel(derive_seed(sub, static_cast<std::uint64_t>(s)));
  }
  return g;
}

Var gumbel_weights(Var log_joint, const Matrix& noise, double tau, bool straight_through) {
  if (!(tau > 0.0)) throw ContractError("Gumbel temperature must be positive");
  Tape& tape = *log_joint.tape();
  Var soft = ad::softmax((log_joint + tape.constant(noise)) * (1.0 / tau));
  return straight_through ? ad::straight_through(soft) : soft;
}

double entropy_penalty(const RoutingState& state, double lambda) {
  double task = 0.0;
  for (int i = 0; i < kNumPaths; ++i) task += entropy(state.pi_task.row(i).transpose());
  return -lambda * (entropy(state.pi_mod) + task / kNumPaths);
}

Var entropy_penalty(const RoutingVars& vars, double lambda) {
  Var h = -ad::sum(vars.pi_mod * vars.log_pi_mod, 1);
  Var task_h;
  for (int i = 0; i < kNumPaths; ++i) {
    Var hi = -ad::sum(vars.pi_task[static_cast<std::size_t>(i)] *
                          vars.log_pi_task[static_cast<std::size_t>(i)],
                      1);
    task_h = task_h.valid() ? task_h + hi : hi;
  }
  return ad::mean(h + task_h * (1.0 / kNumPaths)) * (-lambda);
}

double entropy_coef_at(double lambda0, int epoch, int epochs) {
  const double half = 0.5 * static_cast<double>(epochs);
  if (half <= 0.0 || epoch >= half) return 0.0;
  return lambda0 * (1.0 - static_cast<double>(epoch) / half);
}

double tau_at(double tau_start, double tau_end, int epoch, int epochs) {
  if (epochs <= 1) return tau_start;
  const double f = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return tau_start * std::pow(tau_end / tau_start, f);
}

JointPmf joint_pmf(std::span<const RoutingState> states) {
  if (states.empty()) throw ContractError("joint_pmf of an empty batch");
  JointPmf out;
  out.per_sample.resize(static_cast<Index>(states.size()), kNumSlots);
  for (std::size_t k = 0; k < states.size(); ++k)
    out.per_sample.row(static_cast<Index>(k)) = states[k].joint.transpose();
  out.mean = out.per_sample.colwise().mean().transpose();
  return out;
}

}  // namespace mmroute::router
