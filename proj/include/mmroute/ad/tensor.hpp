#pragma once

#include <Eigen/Core>

#include <string>

namespace mmroute::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Shape {
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

template <typename Derived>
Shape shape_of(const Eigen::DenseBase<Derived>& m) {
  return {m.rows(), m.cols()};
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

// A named, dense, trainable array. Gradients are not stored on the tensor;
// backward() returns them keyed by tensor address.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Matrix values, std::string name = {})
      : values_(std::move(values)), name_(std::move(name)) {}

  static Tensor zeros(Index rows, Index cols, std::string name = {}) {
    return Tensor(Matrix::Zero(rows, cols), std::move(name));
  }

  const Matrix& values() const { return values_; }
  Matrix& values() { return values_; }
  Shape shape() const { return shape_of(values_); }
  Index size() const { return values_.size(); }

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

private:
  Matrix values_;
  std::string name_;
};

}  // namespace mmroute::ad
