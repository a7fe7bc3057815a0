#pragma once

#include "milcnn/errors.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

namespace milcnn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline std::string to_string(const Shape& shape);

inline Index element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         [](Index a, Index b) { return a * b; });
}

/// Dense row-major N-dimensional array backed by an Eigen column vector.
///
/// Image tensors are laid out (C, H, W); batches prepend N. The flat buffer
/// is exposed as an Eigen vector so elementwise work stays in Eigen
/// expressions, and `matrix()` gives a row-major 2-D view for GEMM-shaped
/// kernels.
template <typename Scalar_>
class BasicTensor {
 public:
  using Scalar = Scalar_;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(Vector::Constant(checked_count(shape_), fill)) {}

  BasicTensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_count(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), Vector(Eigen::Map<const Vector>(
                                          values.begin(), static_cast<Index>(values.size())))) {}

  static BasicTensor zeros_like(const BasicTensor& other) { return BasicTensor(other.shape()); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }
  Scalar* ptr() { return data_.data(); }
  const Scalar* ptr() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& at(std::initializer_list<Index> idx) { return data_[offset(idx)]; }
  Scalar at(std::initializer_list<Index> idx) const { return data_[offset(idx)]; }

  /// Row-major (rows x cols) view of the whole buffer.
  MatrixMap matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }

  BasicTensor reshaped(Shape shape) const {
    if (checked_count(shape) != size()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  void fill(Scalar value) { data_.setConstant(value); }
  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static Index checked_count(const Shape& shape) {
    for (Index d : shape) {
      if (d <= 0) throw ShapeError("non-positive dimension in shape " + to_string(shape));
    }
    return element_count(shape);
  }

  Index offset(std::initializer_list<Index> idx) const {
    if (static_cast<Index>(idx.size()) != rank()) {
      throw ShapeError("index rank does not match tensor rank " + std::to_string(rank()));
    }
    Index off = 0;
    std::size_t axis = 0;
    for (Index i : idx) {
      if (i < 0 || i >= shape_[axis]) throw std::out_of_range("tensor index out of range");
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  void check_view(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw ShapeError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " does not cover tensor " + to_string(shape_));
    }
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<double>;

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

}  // namespace milcnn
