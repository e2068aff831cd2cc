#include "bcgnn/num/matrix.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "bcgnn/error.hpp"

namespace bcgnn::num {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
  return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}
MutMap view(Matrix& m) {
  return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

[[noreturn]] void shape_error(const char* what, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(what) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::column_vector(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(what, a, b);
}

namespace {

using Packet = Eigen::Matrix<double, 1, 8>;

// Rows [row, row + R) of out = a * b, with b row-major inner x cols. Each
// entry sums its products in index order whatever R is, so a row's result
// does not depend on its position in a.
template <std::size_t R>
void product_rows(const double* __restrict a, const double* __restrict b,
                  double* __restrict out, std::size_t row, std::size_t inner, std::size_t cols) {
  std::size_t j = 0;
  for (; j + 8 <= cols; j += 8) {
    Packet acc[R];
    for (std::size_t r = 0; r < R; ++r) acc[r].setZero();
    for (std::size_t k = 0; k < inner; ++k) {
      const auto bv = Eigen::Map<const Packet>(b + k * cols + j);
      for (std::size_t r = 0; r < R; ++r) acc[r] += a[(row + r) * inner + k] * bv;
    }
    for (std::size_t r = 0; r < R; ++r) Eigen::Map<Packet>(out + (row + r) * cols + j) = acc[r];
  }
  for (; j < cols; ++j)
    for (std::size_t r = 0; r < R; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += a[(row + r) * inner + k] * b[k * cols + j];
      out[(row + r) * cols + j] = acc;
    }
}

void row_stable_product(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t n = a.rows(), inner = a.cols(), cols = b.cols();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) product_rows<4>(a.data(), b.data(), out.data(), i, inner, cols);
  for (; i < n; ++i) product_rows<1>(a.data(), b.data(), out.data(), i, inner, cols);
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  if (a.cols() == 0) return out;
  row_stable_product(a, b, out);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  if (a.cols() == 0) return out;
  row_stable_product(a, b.transpose(), out);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  if (a.rows() == 0) return out;
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Matrix activation(const Matrix& x, Activation kind) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = kind.apply(x[i]);
  return out;
}

std::vector<double> softmax(std::span<const double> v) {
  std::vector<double> out(v.size());
  if (v.empty()) return out;
  const double top = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - top);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace bcgnn::num
