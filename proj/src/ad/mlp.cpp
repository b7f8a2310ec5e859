#include "mmroute/ad/mlp.hpp"

#include "mmroute/errors.hpp"

#include <cmath>

namespace mmroute::ad {

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "identity";
}

void xavier_uniform(Tensor& weight, Rng& rng) {
  auto& w = weight.values();
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Index c = 0; c < w.cols(); ++c)
    for (Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
}

Mlp Mlp::make(Index in_dim, const std::vector<Index>& hidden, Index out_dim,
              Activation hidden_act, Rng& rng, FinalInit final_init, const std::string& name,
              Activation output_act) {
  if (in_dim <= 0 || out_dim <= 0) throw ConfigError(name + ": layer dims must be positive");
  std::vector<Layer> layers;
  Index prev = in_dim;
  auto add = [&](Index out, Activation act, bool zero) {
    if (out <= 0) throw ConfigError(name + ": hidden layer with 0 units");
    const std::string prefix = name + ".layer" + std::to_string(layers.size());
    Layer l{Tensor::zeros(out, prev, prefix + ".weight"), Tensor::zeros(1, out, prefix + ".bias"),
            act};
    if (!zero) xavier_uniform(l.weight, rng);
    layers.push_back(std::move(l));
    prev = out;
  };
  for (Index h : hidden) add(h, hidden_act, false);
  add(out_dim, output_act, final_init == FinalInit::zero);
  return Mlp(std::move(layers));
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("MLP needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.shape() != Shape{1, l.out_dim()})
      throw ShapeError("layer " + std::to_string(i) + " bias shape " + to_string(l.bias.shape()));
    if (i > 0 && layers_[i - 1].out_dim() != l.in_dim())
      throw ShapeError("layer " + std::to_string(i) + " input dim " +
                       std::to_string(l.in_dim()) + " does not chain with previous output " +
                       std::to_string(layers_[i - 1].out_dim()));
  }
}

Var Mlp::forward(Tape& tape, Var x) const {
  if (x.cols() != in_dim())
    throw ShapeError("MLP expects " + std::to_string(in_dim()) + " input columns, got " +
                     std::to_string(x.cols()));
  Var h = x;
  for (const auto& l : layers_) {
    h = affine(h, tape.parameter(l.weight), tape.parameter(l.bias));
    switch (l.activation) {
      case Activation::tanh: h = tanh(h); break;
      case Activation::relu: h = relu(h); break;
      case Activation::identity: break;
    }
  }
  return h;
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

}  // namespace mmroute::ad
