#include "mmroute/experts/experts.hpp"

#include <algorithm>

namespace mmroute::experts {

std::string to_string(ModalityPath p) {
  switch (p) {
    case ModalityPath::t1: return "T1";
    case ModalityPath::t2: return "T2";
    case ModalityPath::n1: return "N1";
    case ModalityPath::n2: return "N2";
  }
  return "T1";
}

std::string to_string(Paradigm p) { return p == Paradigm::stl ? "STL" : "MTL"; }

ModalityPath parse_path(const std::string& s) {
  if (s == "t1" || s == "T1") return ModalityPath::t1;
  if (s == "t2" || s == "T2") return ModalityPath::t2;
  if (s == "n1" || s == "N1") return ModalityPath::n1;
  if (s == "n2" || s == "N2") return ModalityPath::n2;
  throw ConfigError("unknown modality path '" + s + "'");
}

Paradigm parse_paradigm(const std::string& s) {
  if (s == "stl" || s == "STL") return Paradigm::stl;
  if (s == "mtl" || s == "MTL") return Paradigm::mtl;
  throw ConfigError("unknown task paradigm '" + s + "'");
}

Slot Slot::from_index(int s) {
  if (s < 0 || s >= kNumSlots) throw ContractError("slot index out of range");
  return {static_cast<ModalityPath>(s / 2), static_cast<Paradigm>(s % 2)};
}

Index input_dim(ModalityPath path, Index d_num, Index d_text) {
  switch (path) {
    case ModalityPath::t1: return d_text;
    case ModalityPath::n1: return d_num;
    case ModalityPath::t2: return 2 * d_text;
    case ModalityPath::n2: return 2 * d_num;
  }
  return 0;
}

ModalityTransforms ModalityTransforms::sample(Index d_num, Index d_text, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ModalityTransforms t{Matrix(d_text, d_num), Matrix(d_num, d_text)};
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d_num));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(d_text));
  for (Index r = 0; r < d_text; ++r)
    for (Index c = 0; c < d_num; ++c) t.num_to_text(r, c) = s1 * normal(rng);
  for (Index r = 0; r < d_num; ++r)
    for (Index c = 0; c < d_text; ++c) t.text_to_num(r, c) = s2 * normal(rng);
  return t;
}

Matrix ModalityTransforms::apply(ModalityPath path, const Matrix& x_num,
                                 const Matrix& x_text) const {
  if (x_num.cols() != d_num() || x_text.cols() != d_text())
    throw ShapeError("modality transform expects " + std::to_string(d_num()) + "/" +
                     std::to_string(d_text()) + " columns, got " + std::to_string(x_num.cols()) +
                     "/" + std::to_string(x_text.cols()));
  if (x_num.rows() != x_text.rows()) throw ShapeError("modality batches differ in length");
  switch (path) {
    case ModalityPath::t1: return x_text;
    case ModalityPath::n1: return x_num;
    case ModalityPath::t2: {
      Matrix out(x_num.rows(), 2 * d_text());
      out << x_num * num_to_text.transpose(), x_text;
      return out;
    }
    case ModalityPath::n2: {
      Matrix out(x_num.rows(), 2 * d_num());
      out << x_text * text_to_num.transpose(), x_num;
      return out;
    }
  }
  throw ContractError("bad modality path");
}

void ModelConfig::validate() const {
  if (hidden_dims.empty()) throw ConfigError("model.hidden_dims must not be empty");
  for (Index h : hidden_dims)
    if (h <= 0) throw ConfigError("model.hidden_dims entries must be positive");
  for (Index h : head_dims)
    if (h <= 0) throw ConfigError("model.head_dims entries must be positive");
  if (!(logvar_clamp > 0.0)) throw ConfigError("model.logvar_clamp must be positive");
}

Expert Expert::make(Paradigm paradigm, Index in_dim, const ModelConfig& config, Rng& rng,
                    ad::FinalInit final_init, const std::string& name) {
  config.validate();
  Expert e;
  e.paradigm_ = paradigm;
  e.clamp_ = config.logvar_clamp;
  e.heteroscedastic_ = config.heteroscedastic;
  const auto act = config.activation;
  if (paradigm == Paradigm::stl) {
    std::vector<Index> dims = config.hidden_dims;
    dims.insert(dims.end(), config.head_dims.begin(), config.head_dims.end());
    e.task1_ = ad::Mlp::make(in_dim, dims, 2, act, rng, final_init, name + ".task1");
    e.task2_ = ad::Mlp::make(in_dim, dims, 2, act, rng, final_init, name + ".task2");
  } else {
    std::vector<Index> enc(config.hidden_dims.begin(), config.hidden_dims.end() - 1);
    const Index latent = config.hidden_dims.back();
    e.shared_ = ad::Mlp::make(in_dim, enc, latent, act, rng, ad::FinalInit::xavier,
                              name + ".shared", act);
    e.head1_ = ad::Mlp::make(latent, config.head_dims, 2, act, rng, final_init, name + ".head1");
    e.head2_ = ad::Mlp::make(latent, config.head_dims, 2, act, rng, final_init, name + ".head2");
  }
  return e;
}

Index Expert::in_dim() const {
  return paradigm_ == Paradigm::stl ? task1_.in_dim() : shared_.in_dim();
}

Var Expert::task_output(Tape& tape, Var raw) const {
  Var mean = ad::col(raw, 0);
  Var logvar = heteroscedastic_ ? ad::tanh(ad::col(raw, 1) * (1.0 / clamp_)) * clamp_
                                : tape.constant(Matrix::Zero(raw.rows(), 1));
  return ad::concat(mean, logvar);
}

Var Expert::forward(Tape& tape, Var x) const {
  if (x.cols() != in_dim())
    throw ShapeError("expert expects input dim " + std::to_string(in_dim()) + ", got " +
                     std::to_string(x.cols()));
  if (paradigm_ == Paradigm::stl) {
    return ad::concat(task_output(tape, task1_.forward(tape, x)),
                      task_output(tape, task2_.forward(tape, x)));
  }
  Var z = shared_.forward(tape, x);
  return ad::concat(task_output(tape, head1_.forward(tape, z)),
                    task_output(tape, head2_.forward(tape, z)));
}

std::vector<ad::Tensor*> Expert::parameters() {
  std::vector<ad::Tensor*> out;
  auto add = [&](ad::Mlp& m) {
    auto p = m.parameters();
    out.insert(out.end(), p.begin(), p.end());
  };
  if (paradigm_ == Paradigm::stl) {
    add(task1_);
    add(task2_);
  } else {
    add(shared_);
    add(head1_);
    add(head2_);
  }
  return out;
}

std::vector<const ad::Tensor*> Expert::parameters() const {
  auto mut = const_cast<Expert*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<ad::Tensor*> Expert::task_parameters(int task) {
  if (paradigm_ != Paradigm::stl) throw ContractError("task_parameters is STL-only");
  return task == 0 ? task1_.parameters() : task2_.parameters();
}

Expert ExpertBank::make_slot(Slot slot, const ModalityTransforms& transforms,
                             const ModelConfig& config, std::uint64_t seed,
                             ad::FinalInit final_init) {
  Rng rng(derive_seed(seed, hash_tag("expert"), static_cast<std::uint64_t>(slot.index())));
  return Expert::make(slot.paradigm, transforms.input_dim(slot.path), config, rng, final_init,
                      "expert/" + slot.name());
}

ExpertBank ExpertBank::make(const ModalityTransforms& transforms, const ModelConfig& config,
                            std::uint64_t seed, ad::FinalInit final_init) {
  ExpertBank bank;
  for (int s = 0; s < kNumSlots; ++s)
    bank[s] = make_slot(Slot::from_index(s), transforms, config, seed, final_init);
  return bank;
}

ExpertOutput to_output(const Matrix& row) {
  if (row.rows() != 1 || row.cols() != 4) throw ShapeError("expert output row must be 1x4");
  return {row(0, 0), row(0, 1), row(0, 2), row(0, 3)};
}

ExpertOutput expert_forward(const ExpertBank& bank, Slot slot, const Eigen::VectorXd& x) {
  Tape tape;
  Var out = bank.at(slot).forward(tape, tape.constant(x.transpose()));
  return to_output(out.value());
}

Var heteroscedastic_loss(Var y, Var y_hat, Var logvar) {
  Var r = y - y_hat;
  return (r * r) * ad::exp(-logvar) * 0.5 + logvar * 0.5;
}

Var paradigm_loss(Var out, Var y) {
  if (out.cols() != 4 || y.cols() != 2 || out.rows() != y.rows())
    throw ShapeError("paradigm_loss expects B×4 outputs and B×2 targets");
  return heteroscedastic_loss(ad::col(y, 0), ad::col(out, 0), ad::col(out, 1)) +
         heteroscedastic_loss(ad::col(y, 1), ad::col(out, 2), ad::col(out, 3));
}

}  // namespace mmroute::experts
