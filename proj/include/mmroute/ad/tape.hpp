#pragma once

#include "mmroute/ad/tensor.hpp"

#include <cstdint>
#include <vector>

namespace mmroute::ad {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
  Var() = default;

  const Matrix& value() const;
  Shape shape() const { return shape_of(value()); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double item() const;  // value of a 1x1 node

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op : std::uint8_t {
  constant,
  parameter,
  affine,
  tanh,
  relu,
  sin,
  cos,
  exp,
  log,
  softmax,
  log_softmax,
  concat,
  add,
  sub,
  mul,
  div,
  scale,
  shift,
  sum,
  mean,
  sum_axis,
  slice_cols,
  detach,
  straight_through,
};

// Records primitive applications in evaluation order. Nodes only ever refer
// to earlier nodes, so a reverse sweep is a valid topological replay.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Matrix value);
  // Leaf that receives a gradient; several leaves may alias one tensor.
  Var parameter(const Tensor& tensor);

  const Matrix& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  const std::vector<const Tensor*>& parameters() const { return params_; }

  struct Node {
    Op op = Op::constant;
    int a = -1;
    int b = -1;
    int c = -1;
    Matrix value;
    double scalar = 0.0;
    Index axis = 0;
    Index offset = 0;
    const Tensor* param = nullptr;
    std::vector<int> inputs;  // concat only
  };

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Var record(Node node);
  void check_owned(Var v) const;

private:
  std::vector<Node> nodes_;
  std::vector<const Tensor*> params_;
};

// Gradients for every parameter leaf on a tape; unreachable parameters map to
// zeros of the right shape.
class GradientMap {
public:
  const Matrix& at(const Tensor& t) const;
  bool contains(const Tensor& t) const;
  std::size_t size() const { return entries_.size(); }

  const std::vector<std::pair<const Tensor*, Matrix>>& entries() const { return entries_; }
  Matrix& slot(const Tensor& t);

  GradientMap& operator+=(const GradientMap& other);
  GradientMap& operator*=(double s);
  double squared_norm() const;

private:
  std::vector<std::pair<const Tensor*, Matrix>> entries_;
};

GradientMap backward(const Tape& tape, Var loss);

// Primitives. Binary elementwise ops broadcast an operand whose extent along
// an axis is 1.
Var affine(Var x, Var weight, Var bias);  // x(B×in)·weightᵀ(in×out) + bias(1×out)
Var tanh(Var x);
Var relu(Var x);  // d/dx at 0 is 0
Var sin(Var x);
Var cos(Var x);
Var exp(Var x);
Var log(Var x);                       // requires x >= 1e-12
Var softmax(Var x, int axis = 1);     // axis 1: each row normalized across columns
Var log_softmax(Var x, int axis = 1);
Var concat(Var a, Var b, int axis = 1);
Var concat(const std::vector<Var>& parts, int axis = 1);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);  // requires |b| >= 1e-12
Var operator*(Var a, double s);
Var operator*(double s, Var a);
Var operator+(Var a, double s);
Var operator-(Var a, double s);
Var operator-(Var a);
Var sum(Var x);
Var mean(Var x);
Var sum(Var x, int axis);  // axis 1: row sums (B×1); axis 0: column sums (1×k)
Var slice_cols(Var x, Index start, Index count);
Var col(Var x, Index j);
Var detach(Var x);
// Forward: row-wise one-hot of the argmax (lowest index wins ties).
// Backward: identity.
Var straight_through(Var x);

inline constexpr double kGuardEpsilon = 1e-12;

}  // namespace mmroute::ad
