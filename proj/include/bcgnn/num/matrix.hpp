#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace bcgnn::num {

/// Dense row-major matrix of doubles. A value type: copies are deep.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  /// Nested-list literal, e.g. Matrix{{1, 2}, {3, 4}}.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);
  static Matrix column_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);
  bool all_finite() const;
  std::string shape_string() const;

  Matrix transpose() const;
  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

/// Throws ShapeError naming both shapes unless a and b have identical shape.
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

enum class ActivationKind { identity, relu, leaky_relu };

struct Activation {
  ActivationKind kind = ActivationKind::identity;
  double slope = 0.01;  // leaky_relu only

  static Activation identity() { return {ActivationKind::identity, 0.0}; }
  static Activation relu() { return {ActivationKind::relu, 0.0}; }
  static Activation leaky_relu(double slope = 0.01) { return {ActivationKind::leaky_relu, slope}; }

  double apply(double x) const {
    switch (kind) {
      case ActivationKind::relu:
        return x > 0.0 ? x : 0.0;
      case ActivationKind::leaky_relu:
        return x > 0.0 ? x : slope * x;
      case ActivationKind::identity:
        break;
    }
    return x;
  }
  double derivative(double x) const {
    switch (kind) {
      case ActivationKind::relu:
        return x > 0.0 ? 1.0 : 0.0;
      case ActivationKind::leaky_relu:
        return x > 0.0 ? 1.0 : slope;
      case ActivationKind::identity:
        break;
    }
    return 1.0;
  }
};

/// a * b. Throws ShapeError when a.cols() != b.rows().
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T. Throws ShapeError when a.cols() != b.cols().
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b. Throws ShapeError when a.rows() != b.rows().
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix activation(const Matrix& x, Activation kind);

/// Numerically stable softmax (max-subtracted).
std::vector<double> softmax(std::span<const double> v);

/// Elementwise product.
Matrix hadamard(const Matrix& a, const Matrix& b);

}  // namespace bcgnn::num
