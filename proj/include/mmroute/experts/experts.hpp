#pragma once

#include "mmroute/ad/mlp.hpp"
#include "mmroute/errors.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace mmroute::experts {

using ad::Index;
using ad::Matrix;
using ad::Tape;
using ad::Var;

// Stable encoding 0..3 in routing order.
enum class ModalityPath { t1 = 0, t2 = 1, n1 = 2, n2 = 3 };
enum class Paradigm { stl = 0, mtl = 1 };

inline constexpr int kNumPaths = 4;
inline constexpr int kNumParadigms = 2;
inline constexpr int kNumSlots = kNumPaths * kNumParadigms;
inline constexpr std::array<ModalityPath, kNumPaths> kPaths{ModalityPath::t1, ModalityPath::t2,
                                                            ModalityPath::n1, ModalityPath::n2};

std::string to_string(ModalityPath p);  // "T1"
std::string to_string(Paradigm p);      // "STL"
ModalityPath parse_path(const std::string& s);    // accepts t1 / T1
Paradigm parse_paradigm(const std::string& s);    // accepts stl / STL

// One (path, paradigm) pair; slots are ordered (T1,T2,N1,N2) × (STL,MTL).
struct Slot {
  ModalityPath path = ModalityPath::t1;
  Paradigm paradigm = Paradigm::stl;

  int index() const { return 2 * static_cast<int>(path) + static_cast<int>(paradigm); }
  static Slot from_index(int s);
  std::string name() const { return to_string(path) + "/" + to_string(paradigm); }
  friend bool operator==(const Slot&, const Slot&) = default;
};

// Expert input width for a path.
Index input_dim(ModalityPath path, Index d_num, Index d_text);

// Frozen stand-ins for the numeric→text and text→numeric conversions.
struct ModalityTransforms {
  Matrix num_to_text;  // d_text × d_num
  Matrix text_to_num;  // d_num × d_text

  Index d_num() const { return num_to_text.cols(); }
  Index d_text() const { return num_to_text.rows(); }
  Index input_dim(ModalityPath path) const { return experts::input_dim(path, d_num(), d_text()); }

  // Gaussian entries scaled by 1/√(input dim).
  static ModalityTransforms sample(Index d_num, Index d_text, Rng& rng);

  // Row-wise over a batch: x_num is B × d_num, x_text is B × d_text.
  //   T1 → x_text, N1 → x_num,
  //   T2 → [x_num·num_to_textᵀ, x_text], N2 → [x_text·text_to_numᵀ, x_num].
  Matrix apply(ModalityPath path, const Matrix& x_num, const Matrix& x_text) const;
};

struct ExpertOutput {
  double mean1 = 0.0;
  double logvar1 = 0.0;
  double mean2 = 0.0;
  double logvar2 = 0.0;
};

struct ModelConfig {
  std::vector<Index> hidden_dims{64, 64};  // encoder
  std::vector<Index> head_dims{32};        // per-task head
  ad::Activation activation = ad::Activation::tanh;
  double logvar_clamp = 6.0;
  // false: logvar is pinned to 0 and the loss reduces to ½·residual².
  bool heteroscedastic = true;

  void validate() const;  // throws ConfigError
};

// STL: two disjoint task networks. MTL: shared encoder z = f(x) + two heads.
// Every task network emits (mean, raw logvar); logvar = c·tanh(raw / c).
class Expert {
public:
  Expert() = default;
  static Expert make(Paradigm paradigm, Index in_dim, const ModelConfig& config, Rng& rng,
                     ad::FinalInit final_init, const std::string& name);

  // x: B × in_dim → B × 4 columns (mean1, logvar1, mean2, logvar2).
  Var forward(Tape& tape, Var x) const;

  Paradigm paradigm() const { return paradigm_; }
  Index in_dim() const;

  std::vector<ad::Tensor*> parameters();
  std::vector<const ad::Tensor*> parameters() const;
  // STL only: the tensors of one task network (task 0 or 1).
  std::vector<ad::Tensor*> task_parameters(int task);
  ad::Mlp& shared_encoder() { return shared_; }

private:
  Var task_output(Tape& tape, Var raw) const;

  Paradigm paradigm_ = Paradigm::stl;
  double clamp_ = 6.0;
  bool heteroscedastic_ = true;
  ad::Mlp task1_;
  ad::Mlp task2_;
  ad::Mlp shared_;
  ad::Mlp head1_;
  ad::Mlp head2_;
};

class ExpertBank {
public:
  ExpertBank() = default;
  // Slot s is initialized from its own substream of `seed`, so a bank and a
  // lone slot built from the same seed share weights.
  static ExpertBank make(const ModalityTransforms& transforms, const ModelConfig& config,
                         std::uint64_t seed, ad::FinalInit final_init = ad::FinalInit::zero);
  static Expert make_slot(Slot slot, const ModalityTransforms& transforms,
                          const ModelConfig& config, std::uint64_t seed,
                          ad::FinalInit final_init = ad::FinalInit::zero);

  Expert& operator[](int slot) { return experts_[static_cast<std::size_t>(slot)]; }
  const Expert& operator[](int slot) const { return experts_[static_cast<std::size_t>(slot)]; }
  Expert& at(Slot s) { return (*this)[s.index()]; }
  const Expert& at(Slot s) const { return (*this)[s.index()]; }

private:
  std::array<Expert, kNumSlots> experts_;
};

// Single-sample convenience over an already transformed input X⁽ⁱ⁾.
ExpertOutput expert_forward(const ExpertBank& bank, Slot slot, const Eigen::VectorXd& x);
ExpertOutput to_output(const Matrix& row);  // 1 × 4

// ½·(y − ŷ)²·exp(−logvar) + ½·logvar; callers keep logvar inside the clamp.
template <typename Scalar>
Scalar heteroscedastic_loss(Scalar y, Scalar y_hat, Scalar logvar) {
  using std::exp;
  const Scalar r = y - y_hat;
  return Scalar(0.5) * r * r * exp(-logvar) + Scalar(0.5) * logvar;
}

inline double paradigm_loss(const ExpertOutput& out, double y1, double y2) {
  return heteroscedastic_loss(y1, out.mean1, out.logvar1) +
         heteroscedastic_loss(y2, out.mean2, out.logvar2);
}

// Tape versions; all B × 1.
Var heteroscedastic_loss(Var y, Var y_hat, Var logvar);
// out: B × 4 expert output, y: B × 2 targets → per-sample task-summed loss.
Var paradigm_loss(Var out, Var y);

}  // namespace mmroute::experts
