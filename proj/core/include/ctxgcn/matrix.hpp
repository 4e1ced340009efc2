// Dense row-major matrices with deterministic accumulation order.
//
// Every reduction in this module runs in a fixed serial order (ascending
// index), so repeated runs on identical inputs produce bitwise identical
// results. Keep it that way: reproducibility of training runs depends on it.

#ifndef CTXGCN_MATRIX_HPP
#define CTXGCN_MATRIX_HPP

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctxgcn {

// Error taxonomy. Messages carry enough context (shapes, indices, names)
// to diagnose a failure from the message alone.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConstraintError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_str() const;

  Matrix transposed() const;
  bool is_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scalar);

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double scalar);

// C = A * B with the inner sum accumulated in ascending index order.
Matrix matmul(const Matrix& a, const Matrix& b);

// Entrywise product; shapes must match.
Matrix hadamard(const Matrix& a, const Matrix& b);

// <A, B>_F = sum_ij A_ij * B_ij, accumulated row-major.
double frobenius_inner(const Matrix& a, const Matrix& b);

// Largest |A_ij|.
double max_abs(const Matrix& a);

}  // namespace ctxgcn

#endif  // CTXGCN_MATRIX_HPP
