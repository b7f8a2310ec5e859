#include "mmroute/ad/tape.hpp"

#include "mmroute/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mmroute::ad {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")";
}

const Matrix& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(*this);
}

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar node " + to_string(shape()));
  return v(0, 0);
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size())
    throw ContractError("Var does not belong to this tape");
}

const Matrix& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[static_cast<std::size_t>(v.id())].value;
}

Var Tape::record(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  if (!all_finite(value)) throw NumericError("non-finite constant fed to tape");
  Node n;
  n.op = Op::constant;
  n.value = std::move(value);
  return record(std::move(n));
}

Var Tape::parameter(const Tensor& tensor) {
  if (!all_finite(tensor.values()))
    throw NumericError("non-finite parameter '" + tensor.name() + "'");
  if (std::find(params_.begin(), params_.end(), &tensor) == params_.end())
    params_.push_back(&tensor);
  Node n;
  n.op = Op::parameter;
  n.value = tensor.values();
  n.param = &tensor;
  return record(std::move(n));
}

// ---------------------------------------------------------------------------

const Matrix& GradientMap::at(const Tensor& t) const {
  for (const auto& [p, g] : entries_)
    if (p == &t) return g;
  throw ContractError("no gradient recorded for tensor '" + t.name() + "'");
}

bool GradientMap::contains(const Tensor& t) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == &t; });
}

Matrix& GradientMap::slot(const Tensor& t) {
  for (auto& [p, g] : entries_)
    if (p == &t) return g;
  entries_.emplace_back(&t, Matrix::Zero(t.values().rows(), t.values().cols()));
  return entries_.back().second;
}

GradientMap& GradientMap::operator+=(const GradientMap& other) {
  for (const auto& [p, g] : other.entries_) slot(*p) += g;
  return *this;
}

GradientMap& GradientMap::operator*=(double s) {
  for (auto& e : entries_) e.second *= s;
  return *this;
}

double GradientMap::squared_norm() const {
  double s = 0.0;
  for (const auto& e : entries_) s += e.second.squaredNorm();
  return s;
}

namespace {

Matrix broadcast_to(const Matrix& m, Shape s) {
  if (shape_of(m) == s) return m;
  Matrix out(s.rows, s.cols);
  for (Index c = 0; c < s.cols; ++c)
    for (Index r = 0; r < s.rows; ++r)
      out(r, c) = m(m.rows() == 1 ? 0 : r, m.cols() == 1 ? 0 : c);
  return out;
}

Matrix reduce_to(const Matrix& g, Shape s) {
  if (shape_of(g) == s) return g;
  if (s.rows == 1 && s.cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (s.rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

void accumulate(Matrix& adj, const Matrix& g) {
  if (adj.size() == 0)
    adj = g;
  else
    adj += g;
}

Matrix rowwise_softmax(const Matrix& x) {
  Matrix y = x.colwise() - x.rowwise().maxCoeff();
  y = y.array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  return y;
}

Matrix rowwise_log_softmax(const Matrix& x) {
  Matrix shifted = x.colwise() - x.rowwise().maxCoeff();
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
  return shifted.colwise() - lse;
}

}  // namespace

GradientMap backward(const Tape& tape, Var loss) {
  tape.check_owned(loss);
  if (loss.value().size() != 1)
    throw ContractError("backward requires a scalar loss, got " + to_string(loss.shape()));

  const std::size_t n = static_cast<std::size_t>(loss.id()) + 1;
  std::vector<Matrix> adj(n);
  adj[n - 1] = Matrix::Ones(1, 1);

  GradientMap grads;
  for (const Tensor* p : tape.parameters()) grads.slot(*p);

  for (std::size_t k = n; k-- > 0;) {
    if (adj[k].size() == 0) continue;
    const auto& node = tape.node(static_cast<int>(k));
    const Matrix& g = adj[k];
    auto in = [&](int id) -> const Matrix& { return tape.node(id).value; };
    auto push = [&](int id, const Matrix& d) { accumulate(adj[static_cast<std::size_t>(id)], d); };

    switch (node.op) {
      case Op::constant:
      case Op::detach:
        break;
      case Op::parameter:
        grads.slot(*node.param) += g;
        break;
      case Op::affine:
        push(node.a, g * in(node.b));
        push(node.b, g.transpose() * in(node.a));
        push(node.c, g.colwise().sum());
        break;
      case Op::tanh:
        push(node.a, (g.array() * (1.0 - node.value.array().square())).matrix());
        break;
      case Op::relu:
        push(node.a, (g.array() * (in(node.a).array() > 0.0).cast<double>()).matrix());
        break;
      case Op::sin:
        push(node.a, (g.array() * in(node.a).array().cos()).matrix());
        break;
      case Op::cos:
        push(node.a, (-g.array() * in(node.a).array().sin()).matrix());
        break;
      case Op::exp:
        push(node.a, (g.array() * node.value.array()).matrix());
        break;
      case Op::log:
        push(node.a, (g.array() / in(node.a).array()).matrix());
        break;
      case Op::softmax: {
        const Matrix& y = node.value;
        if (node.axis == 1) {
          Eigen::VectorXd dot = (g.array() * y.array()).rowwise().sum().matrix();
          push(node.a, (y.array() * (g.colwise() - dot).array()).matrix());
        } else {
          Eigen::RowVectorXd dot = (g.array() * y.array()).colwise().sum().matrix();
          push(node.a, (y.array() * (g.rowwise() - dot).array()).matrix());
        }
        break;
      }
      case Op::log_softmax: {
        Matrix p = node.value.array().exp().matrix();
        if (node.axis == 1) {
          Eigen::VectorXd gs = g.rowwise().sum();
          push(node.a, g - (p.array().colwise() * gs.array()).matrix());
        } else {
          Eigen::RowVectorXd gs = g.colwise().sum();
          push(node.a, g - (p.array().rowwise() * gs.array()).matrix());
        }
        break;
      }
      case Op::concat: {
        Index offset = 0;
        for (int id : node.inputs) {
          const Matrix& x = in(id);
          if (node.axis == 1) {
            push(id, g.middleCols(offset, x.cols()));
            offset += x.cols();
          } else {
            push(id, g.middleRows(offset, x.rows()));
            offset += x.rows();
          }
        }
        break;
      }
      case Op::add:
        push(node.a, reduce_to(g, shape_of(in(node.a))));
        push(node.b, reduce_to(g, shape_of(in(node.b))));
        break;
      case Op::sub:
        push(node.a, reduce_to(g, shape_of(in(node.a))));
        push(node.b, reduce_to(-g, shape_of(in(node.b))));
        break;
      case Op::mul: {
        const Shape s = shape_of(g);
        const Matrix a = broadcast_to(in(node.a), s);
        const Matrix b = broadcast_to(in(node.b), s);
        push(node.a, reduce_to((g.array() * b.array()).matrix(), shape_of(in(node.a))));
        push(node.b, reduce_to((g.array() * a.array()).matrix(), shape_of(in(node.b))));
        break;
      }
      case Op::div: {
        const Shape s = shape_of(g);
        const Matrix a = broadcast_to(in(node.a), s);
        const Matrix b = broadcast_to(in(node.b), s);
        push(node.a, reduce_to((g.array() / b.array()).matrix(), shape_of(in(node.a))));
        push(node.b, reduce_to((-g.array() * a.array() / b.array().square()).matrix(),
                               shape_of(in(node.b))));
        break;
      }
      case Op::scale:
        push(node.a, g * node.scalar);
        break;
      case Op::shift:
      case Op::straight_through:
        push(node.a, g);
        break;
      case Op::sum: {
        const Matrix& x = in(node.a);
        push(node.a, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
        break;
      }
      case Op::mean: {
        const Matrix& x = in(node.a);
        push(node.a, Matrix::Constant(x.rows(), x.cols(),
                                      g(0, 0) / static_cast<double>(x.size())));
        break;
      }
      case Op::sum_axis:
        push(node.a, broadcast_to(g, shape_of(in(node.a))));
        break;
      case Op::slice_cols: {
        const Matrix& x = in(node.a);
        Matrix d = Matrix::Zero(x.rows(), x.cols());
        d.middleCols(node.offset, g.cols()) = g;
        push(node.a, d);
        break;
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------

namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) throw ContractError("operands live on different tapes");
  return *a.tape();
}

Tape::Node unary_node(Op op, Var x, Matrix value) {
  Tape::Node n;
  n.op = op;
  n.a = x.id();
  n.value = std::move(value);
  return n;
}

Shape broadcast_shape(Shape a, Shape b, const char* what) {
  auto dim = [&](Index x, Index y) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw ShapeError(std::string(what) + ": incompatible shapes " + to_string(a) + " and " +
                     to_string(b));
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

Var binary(Op op, Var a, Var b, const char* what) {
  Tape& t = same_tape(a, b);
  const Shape s = broadcast_shape(a.shape(), b.shape(), what);
  const Matrix av = broadcast_to(a.value(), s);
  const Matrix bv = broadcast_to(b.value(), s);
  Matrix out;
  switch (op) {
    case Op::add: out = av + bv; break;
    case Op::sub: out = av - bv; break;
    case Op::mul: out = (av.array() * bv.array()).matrix(); break;
    case Op::div:
      if ((bv.array().abs() < kGuardEpsilon).any())
        throw NumericError("division by a value below 1e-12 in magnitude");
      out = (av.array() / bv.array()).matrix();
      break;
    default: throw ContractError("not a binary op");
  }
  Tape::Node n;
  n.op = op;
  n.a = a.id();
  n.b = b.id();
  n.value = std::move(out);
  return t.record(std::move(n));
}

void check_axis(int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("axis must be 0 or 1");
}

}  // namespace

Var affine(Var x, Var weight, Var bias) {
  Tape& t = same_tape(x, weight);
  same_tape(x, bias);
  if (weight.cols() != x.cols())
    throw ShapeError("affine: input " + to_string(x.shape()) + " vs weight " +
                     to_string(weight.shape()));
  if (bias.rows() != 1 || bias.cols() != weight.rows())
    throw ShapeError("affine: bias " + to_string(bias.shape()) + " vs weight " +
                     to_string(weight.shape()));
  Tape::Node n;
  n.op = Op::affine;
  n.a = x.id();
  n.b = weight.id();
  n.c = bias.id();
  Matrix out = x.value() * weight.value().transpose();
  out.rowwise() += bias.value().row(0);
  n.value = std::move(out);
  return t.record(std::move(n));
}

Var tanh(Var x) {
  return x.tape()->record(unary_node(Op::tanh, x, x.value().array().tanh().matrix()));
}

Var relu(Var x) {
  return x.tape()->record(unary_node(Op::relu, x, x.value().cwiseMax(0.0)));
}

Var sin(Var x) {
  return x.tape()->record(unary_node(Op::sin, x, x.value().array().sin().matrix()));
}

Var cos(Var x) {
  return x.tape()->record(unary_node(Op::cos, x, x.value().array().cos().matrix()));
}

Var exp(Var x) {
  Matrix y = x.value().array().exp().matrix();
  if (!all_finite(y)) throw NumericError("exp overflowed");
  return x.tape()->record(unary_node(Op::exp, x, std::move(y)));
}

Var log(Var x) {
  if ((x.value().array() < kGuardEpsilon).any())
    throw NumericError("log of a value below 1e-12");
  return x.tape()->record(unary_node(Op::log, x, x.value().array().log().matrix()));
}

Var softmax(Var x, int axis) {
  check_axis(axis);
  Matrix y = axis == 1 ? rowwise_softmax(x.value())
                       : Matrix(rowwise_softmax(x.value().transpose()).transpose());
  auto n = unary_node(Op::softmax, x, std::move(y));
  n.axis = axis;
  return x.tape()->record(std::move(n));
}

Var log_softmax(Var x, int axis) {
  check_axis(axis);
  Matrix y = axis == 1 ? rowwise_log_softmax(x.value())
                       : Matrix(rowwise_log_softmax(x.value().transpose()).transpose());
  auto n = unary_node(Op::log_softmax, x, std::move(y));
  n.axis = axis;
  return x.tape()->record(std::move(n));
}

Var concat(Var a, Var b, int axis) { return concat(std::vector<Var>{a, b}, axis); }

Var concat(const std::vector<Var>& parts, int axis) {
  check_axis(axis);
  if (parts.empty()) throw ShapeError("concat of zero operands");
  Tape& t = *parts.front().tape();
  Index rows = 0;
  Index cols = 0;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    if (axis == 1) {
      if (p.rows() != parts.front().rows()) throw ShapeError("concat: row count mismatch");
      cols += p.cols();
    } else {
      if (p.cols() != parts.front().cols()) throw ShapeError("concat: column count mismatch");
      rows += p.rows();
    }
  }
  if (axis == 1)
    rows = parts.front().rows();
  else
    cols = parts.front().cols();
  Matrix out(rows, cols);
  Index offset = 0;
  Tape::Node n;
  n.op = Op::concat;
  n.axis = axis;
  for (const Var& p : parts) {
    if (axis == 1) {
      out.middleCols(offset, p.cols()) = p.value();
      offset += p.cols();
    } else {
      out.middleRows(offset, p.rows()) = p.value();
      offset += p.rows();
    }
    n.inputs.push_back(p.id());
  }
  n.value = std::move(out);
  return t.record(std::move(n));
}

Var operator+(Var a, Var b) { return binary(Op::add, a, b, "add"); }
Var operator-(Var a, Var b) { return binary(Op::sub, a, b, "sub"); }
Var operator*(Var a, Var b) { return binary(Op::mul, a, b, "mul"); }
Var operator/(Var a, Var b) { return binary(Op::div, a, b, "div"); }

Var operator*(Var a, double s) {
  auto n = unary_node(Op::scale, a, a.value() * s);
  n.scalar = s;
  return a.tape()->record(std::move(n));
}

Var operator*(double s, Var a) { return a * s; }

Var operator+(Var a, double s) {
  auto n = unary_node(Op::shift, a, (a.value().array() + s).matrix());
  n.scalar = s;
  return a.tape()->record(std::move(n));
}

Var operator-(Var a, double s) { return a + (-s); }
Var operator-(Var a) { return a * -1.0; }

Var sum(Var x) {
  return x.tape()->record(unary_node(Op::sum, x, Matrix::Constant(1, 1, x.value().sum())));
}

Var mean(Var x) {
  if (x.value().size() == 0) throw ShapeError("mean of an empty tensor");
  return x.tape()->record(unary_node(Op::mean, x, Matrix::Constant(1, 1, x.value().mean())));
}

Var sum(Var x, int axis) {
  check_axis(axis);
  Matrix y = axis == 1 ? Matrix(x.value().rowwise().sum()) : Matrix(x.value().colwise().sum());
  auto n = unary_node(Op::sum_axis, x, std::move(y));
  n.axis = axis;
  return x.tape()->record(std::move(n));
}

Var slice_cols(Var x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols())
    throw ShapeError("slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") out of range for " + to_string(x.shape()));
  auto n = unary_node(Op::slice_cols, x, x.value().middleCols(start, count));
  n.offset = start;
  return x.tape()->record(std::move(n));
}

Var col(Var x, Index j) { return slice_cols(x, j, 1); }

Var detach(Var x) { return x.tape()->record(unary_node(Op::detach, x, x.value())); }

Var straight_through(Var x) {
  const Matrix& v = x.value();
  Matrix hard = Matrix::Zero(v.rows(), v.cols());
  for (Index r = 0; r < v.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < v.cols(); ++c)
      if (v(r, c) > v(r, best)) best = c;
    hard(r, best) = 1.0;
  }
  return x.tape()->record(unary_node(Op::straight_through, x, std::move(hard)));
}

}  // namespace mmroute::ad
