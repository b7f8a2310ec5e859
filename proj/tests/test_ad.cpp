#include "mmroute/ad/checkpoint.hpp"
#include "mmroute/ad/grad_check.hpp"
#include "mmroute/ad/mlp.hpp"
#include "mmroute/errors.hpp"
#include "mmroute/io/csv.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace mmroute;
using namespace mmroute::ad;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) m(0, k++) = x;
  return m;
}

Matrix random_matrix(Index r, Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  Tape tape;
  const Matrix p = softmax(tape.constant(Matrix::Zero(1, 4))).value();
  for (Index k = 0; k < 4; ++k) CHECK(p(0, k) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("softmax matches brute-force normalization") {
  Tape tape;
  const Matrix logits = row({std::log(2.0), 0.0, 0.0, 0.0});
  const Matrix p = softmax(tape.constant(logits)).value();
  double z = 0.0;
  for (Index k = 0; k < 4; ++k) z += std::exp(logits(0, k));
  for (Index k = 0; k < 4; ++k) CHECK(std::abs(p(0, k) - std::exp(logits(0, k)) / z) < 1e-15);
  CHECK(std::abs(p(0, 0) - 0.4) < 1e-15);
  CHECK(std::abs(p(0, 1) - 0.2) < 1e-15);
}

TEST_CASE("softmax rows are simplices even for large logits") {
  Rng rng(3);
  Tape tape;
  const Matrix p = softmax(tape.constant(50.0 * random_matrix(100, 8, rng))).value();
  CHECK((p.array() >= 0.0).all());
  for (Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("concat joins along columns") {
  Tape tape;
  const Matrix c = concat(tape.constant(row({1, 2})), tape.constant(row({3}))).value();
  CHECK(c == row({1, 2, 3}));
}

TEST_CASE("shape and finiteness errors") {
  Tape tape;
  CHECK_THROWS_AS(tape.constant(row({1, 2})) + tape.constant(Matrix::Ones(3, 3)), ShapeError);
  CHECK_THROWS_AS(tape.constant(row({std::numeric_limits<double>::quiet_NaN()})), NumericError);
  CHECK_THROWS_AS(log(tape.constant(row({0.0}))), NumericError);
  CHECK_THROWS_AS(tape.constant(row({1.0})) / tape.constant(row({0.0})), NumericError);
}

TEST_CASE("backward of sum of squares") {
  Tensor w(row({3.0}), "w");
  Tape tape;
  Var v = tape.parameter(w);
  const GradientMap g = backward(tape, sum(v * v));
  CHECK(g.at(w)(0, 0) == 6.0);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tensor w(row({1.0, 2.0}), "w");
  Tape tape;
  Var v = tape.parameter(w);
  CHECK_THROWS_AS(backward(tape, v * v), ContractError);
}

TEST_CASE("detached and unreachable parameters get zero gradient") {
  Tensor a(row({0.3, -0.2, 0.5}), "a");
  Tensor b(row({1.0, 2.0, 3.0}), "b");
  Tensor unused(row({4.0}), "unused");
  Tape tape;
  Var va = tape.parameter(a);
  Var vb = tape.parameter(b);
  tape.parameter(unused);
  Var loss = sum(softmax(va) * log(softmax(detach(vb))));
  const GradientMap g = backward(tape, loss);
  CHECK(g.at(b).isZero(0.0));
  CHECK(g.at(unused).isZero(0.0));
  CHECK_FALSE(g.at(a).isZero(0.0));
}

TEST_CASE("relu gradient at zero is zero") {
  Tensor x(row({0.0, 1.0, -1.0}), "x");
  Tape tape;
  const GradientMap g = backward(tape, sum(relu(tape.parameter(x))));
  CHECK(g.at(x) == row({0.0, 1.0, 0.0}));
}

TEST_CASE("random three-layer MLP matches finite differences") {
  Rng rng(11);
  Mlp mlp = Mlp::make(5, {7, 6}, 3, Activation::tanh, rng, FinalInit::xavier);
  const Matrix x = random_matrix(4, 5, rng);
  auto report = grad_check(
      [&](Tape& t) { return mean(sin(mlp.forward(t, t.constant(x)))); }, mlp.parameters(),
      {1e-5, 1e-5, 1e-6});
  CHECK(report.coordinates > 0);
  CHECK(report.max_relative_error < 1e-5);
  CHECK(report.passed());
}

TEST_CASE("affine plus tanh passes grad_check") {
  Rng rng(5);
  Tensor w(random_matrix(3, 4, rng), "w");
  Tensor b(random_matrix(1, 3, rng), "b");
  const Matrix x = random_matrix(6, 4, rng);
  auto report = grad_check(
      [&](Tape& t) { return sum(tanh(affine(t.constant(x), t.parameter(w), t.parameter(b)))); },
      {&w, &b});
  CHECK(report.max_relative_error < 1e-5);
}

TEST_CASE("primitive zoo passes grad_check") {
  Rng rng(8);
  Tensor a(random_matrix(3, 4, rng), "a");
  Tensor b(random_matrix(3, 4, rng).array().abs() + 0.5, "b");
  auto report = grad_check(
      [&](Tape& t) {
        Var va = t.parameter(a);
        Var vb = t.parameter(b);
        Var e = exp(va * 0.3) + cos(va) - sin(vb) / vb;
        Var l = log(vb) * log_softmax(va, 0) + relu(va + 0.1);
        Var s = sum(concat(e, l, 0), 1);
        return mean(s * s) + sum(slice_cols(softmax(va), 1, 2));
      },
      {&a, &b});
  CHECK(report.max_relative_error < 1e-5);
}

TEST_CASE("constant expression has exactly zero gradient") {
  Tensor w(row({0.7, -1.3}), "w");
  auto report = grad_check(
      [&](Tape& t) {
        t.parameter(w);
        return sum(t.constant(row({2.0, 5.0})));
      },
      {&w});
  CHECK(report.max_relative_error == 0.0);
  Tape tape;
  tape.parameter(w);
  const GradientMap g = backward(tape, sum(tape.constant(row({2.0}))));
  CHECK(g.at(w).isZero(0.0));
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(21);
  Mlp mlp = Mlp::make(3, {4}, 2, Activation::tanh, rng, FinalInit::xavier);
  const Matrix x = random_matrix(5, 3, rng);
  auto grads = [&](double a, double b) {
    Tape t;
    Var y = mlp.forward(t, t.constant(x));
    Var l1 = mean(y * y);
    Var l2 = sum(sin(y));
    return backward(t, a * l1 + b * l2);
  };
  const GradientMap g1 = grads(1.0, 0.0);
  const GradientMap g2 = grads(0.0, 1.0);
  const GradientMap g = grads(2.5, -0.75);
  for (const Tensor* p : mlp.parameters()) {
    const Matrix expect = 2.5 * g1.at(*p) - 0.75 * g2.at(*p);
    CHECK((g.at(*p) - expect).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("forward is bit-identical for identical seeds") {
  Rng r1(99);
  Rng r2(99);
  Mlp a = Mlp::make(4, {8, 8}, 2, Activation::relu, r1, FinalInit::xavier);
  Mlp b = Mlp::make(4, {8, 8}, 2, Activation::relu, r2, FinalInit::xavier);
  Rng rx(1);
  const Matrix x = random_matrix(10, 4, rx);
  Tape ta;
  Tape tb;
  CHECK(a.forward(ta, ta.constant(x)).value() == b.forward(tb, tb.constant(x)).value());
}

TEST_CASE("straight-through forwards a one-hot and passes gradients unchanged") {
  Tensor x(row({0.1, 0.7, 0.7, -2.0}), "x");
  Tape tape;
  Var st = straight_through(tape.parameter(x));
  CHECK(st.value() == row({0, 1, 0, 0}));
  const GradientMap g = backward(tape, sum(st * tape.constant(row({1, 2, 3, 4}))));
  CHECK(g.at(x) == row({1, 2, 3, 4}));
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir("ckpt");
  Rng rng(4);
  const Mlp mlp = Mlp::make(3, {5}, 2, Activation::tanh, rng, FinalInit::xavier);
  const auto file = dir / "c.json";
  save_checkpoint(file, {{"net", mlp.parameters()}});
  Rng other(5);
  Mlp copy = Mlp::make(3, {5}, 2, Activation::tanh, other, FinalInit::xavier);
  load_checkpoint(file, {{"net", copy.parameters()}});
  for (std::size_t k = 0; k < copy.parameters().size(); ++k)
    CHECK(copy.parameters()[k]->values() == mlp.parameters()[k]->values());
  CHECK(nlohmann::json::parse(io::read_text(file)).at("version") == kCheckpointVersion);

  Mlp wrong = Mlp::make(3, {4}, 2, Activation::tanh, other, FinalInit::xavier);
  CHECK_THROWS_AS(load_checkpoint(file, {{"net", wrong.parameters()}}), Error);
}
