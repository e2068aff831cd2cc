#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "bcgnn/num/matrix.hpp"
#include "bcgnn/num/tape.hpp"
#include "bcgnn/rng.hpp"

namespace testutil {

using bcgnn::num::Matrix;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, bcgnn::Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.values()) x = rng.uniform(lo, hi);
  return m;
}

/// ||a - b|| / max(||a||, ||b||); 0 when both are (numerically) zero.
inline double relative_error(const Matrix& a, const Matrix& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale < 1e-12) return 0.0;
  return std::sqrt(diff) / scale;
}

/// Central differences of f with respect to every entry of x.
inline Matrix numeric_gradient(Matrix& x, const std::function<double()>& f, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Builds `loss` over variables holding `inputs` and compares the tape
/// gradient of each input with central differences.
using LossBuilder = std::function<bcgnn::num::Var(bcgnn::num::Tape&, std::vector<bcgnn::num::Var>&)>;

inline std::vector<double> gradient_errors(std::vector<Matrix> inputs, const LossBuilder& loss) {
  using namespace bcgnn::num;
  auto evaluate = [&] {
    Tape t;
    std::vector<Var> vars;
    for (const Matrix& m : inputs) vars.push_back(t.variable(m));
    return loss(t, vars).value()(0, 0);
  };
  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& m : inputs) vars.push_back(tape.variable(m));
  tape.backward(loss(tape, vars));
  std::vector<double> errors;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = tape.grad(vars[k]);
    const Matrix numeric = numeric_gradient(inputs[k], evaluate);
    errors.push_back(relative_error(analytic, numeric));
  }
  return errors;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("bcgnn_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static std::uint64_t& counter() {
    static std::uint64_t c = static_cast<std::uint64_t>(::getpid()) * 1000;
    return c;
  }
  std::filesystem::path path_;
};

}  // namespace testutil
