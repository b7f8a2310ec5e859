#pragma once

#include "mmroute/ad/tape.hpp"
#include "mmroute/rng.hpp"

#include <string>
#include <vector>

namespace mmroute::ad {

enum class Activation { tanh, relu, identity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct Layer {
  Tensor weight;  // out × in
  Tensor bias;    // 1 × out
  Activation activation = Activation::identity;

  Index in_dim() const { return weight.values().cols(); }
  Index out_dim() const { return weight.values().rows(); }
};

enum class FinalInit { xavier, zero };

class Mlp {
public:
  Mlp() = default;

  // in → hidden[0] → ... → hidden[k-1] → out. Hidden layers use `hidden_act`,
  // the output layer `output_act`. Weights are Xavier-uniform, biases zero.
  static Mlp make(Index in_dim, const std::vector<Index>& hidden, Index out_dim,
                  Activation hidden_act, Rng& rng, FinalInit final_init = FinalInit::xavier,
                  const std::string& name = "mlp", Activation output_act = Activation::identity);

  explicit Mlp(std::vector<Layer> layers);

  Var forward(Tape& tape, Var x) const;

  Index in_dim() const { return layers_.front().in_dim(); }
  Index out_dim() const { return layers_.back().out_dim(); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

private:
  std::vector<Layer> layers_;
};

void xavier_uniform(Tensor& weight, Rng& rng);

}  // namespace mmroute::ad
