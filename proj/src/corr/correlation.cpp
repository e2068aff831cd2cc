#include "bcgnn/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "bcgnn/error.hpp"

namespace bcgnn::corr {

Estimator parse_estimator(const std::string& name) {
  if (name == "spearman") return Estimator::spearman;
  if (name == "pearson") return Estimator::pearson;
  if (name == "kendall") return Estimator::kendall;
  throw ConfigError("unknown correlation estimator '" + name + "'");
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::spearman:
      return "spearman";
    case Estimator::pearson:
      return "pearson";
    case Estimator::kendall:
      return "kendall";
  }
  return "?";
}

std::size_t SignMatrix::nonzero_count() const {
  return static_cast<std::size_t>(std::count_if(signs_.begin(), signs_.end(), [](int s) { return s != 0; }));
}

SignMatrix SignMatrix::from_values(std::size_t m, std::vector<int> values) {
  if (values.size() != m * m) throw ShapeError("SignMatrix: expected m*m values");
  for (int s : values)
    if (s < -1 || s > 1) throw DataError("SignMatrix: sign outside {-1, 0, 1}");
  SignMatrix out(m);
  out.signs_ = std::move(values);
  return out;
}

std::vector<double> average_ranks(std::span<const double> x) {
  if (x.empty()) throw DataError("average_ranks: empty input");
  for (double v : x)
    if (!std::isfinite(v)) throw DataError("average_ranks: non-finite input");
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    // Positions i..j (0-based) share ranks i+1..j+1.
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size()) throw ShapeError("pearson: length mismatch");
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("spearman: length mismatch");
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size()) throw ShapeError("kendall_tau_b: length mismatch");
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  long long concordant = 0, discordant = 0, tie_x = 0, tie_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;  // tied in both: excluded everywhere
      if (dx == 0.0) {
        ++tie_x;
      } else if (dy == 0.0) {
        ++tie_y;
      } else if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double n1 = static_cast<double>(concordant + discordant + tie_x);
  const double n2 = static_cast<double>(concordant + discordant + tie_y);
  if (n1 <= 0.0 || n2 <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(concordant - discordant) / std::sqrt(n1 * n2);
}

int sign_indicator(double s) {
  if (!std::isfinite(s) || std::abs(s) < kSignThreshold) return 0;
  return s > 0.0 ? 1 : -1;
}

CorrMatrix pairwise_corr(const num::Matrix& data, const data::Mask& mask, Estimator estimator) {
  const std::size_t n = data.rows(), m = data.cols();
  if (mask.rows() != n || mask.cols() != m) throw ShapeError("pairwise_corr: mask shape mismatch");
  CorrMatrix out;
  out.estimator = estimator;
  out.m = m;
  out.coef = num::Matrix(m, m);
  out.defined_flags.assign(m * m, 0);
  out.pair_counts.assign(m * m, 0);
  out.signs = SignMatrix(m);
  std::size_t degenerate = 0;
  std::vector<double> xs, ys;
  for (std::size_t w = 0; w < m; ++w) {
    for (std::size_t v = w; v < m; ++v) {
      xs.clear();
      ys.clear();
      for (std::size_t k = 0; k < n; ++k) {
        if (mask.observed(k, w) && mask.observed(k, v)) {
          xs.push_back(data(k, w));
          ys.push_back(data(k, v));
        }
      }
      double s = std::numeric_limits<double>::quiet_NaN();
      switch (estimator) {
        case Estimator::spearman:
          s = spearman(xs, ys);
          break;
        case Estimator::pearson:
          s = pearson(xs, ys);
          break;
        case Estimator::kendall:
          s = kendall_tau_b(xs, ys);
          break;
      }
      const bool ok = std::isfinite(s);
      if (ok && w == v) s = 1.0;
      for (auto [a, b] : {std::pair{w, v}, std::pair{v, w}}) {
        out.pair_counts[a * m + b] = xs.size();
        out.defined_flags[a * m + b] = ok ? 1 : 0;
        out.coef(a, b) = ok ? s : 0.0;
        // Self pairs are not feature-to-feature edges.
        out.signs.set(a, b, (ok && a != b) ? sign_indicator(s) : 0);
      }
      if (!ok && w != v) ++degenerate;
    }
  }
  if (degenerate > 0) {
    spdlog::info("pairwise_corr: {} feature pairs were degenerate (sign set to 0)", degenerate);
  }
  return out;
}

void CorrMatrix::write_csv(const std::filesystem::path& path,
                           const std::vector<std::string>& names) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "feature_a,feature_b,pairs,coefficient,sign\n";
  for (std::size_t w = 0; w < m; ++w) {
    for (std::size_t v = w + 1; v < m; ++v) {
      out << names.at(w) << ',' << names.at(v) << ',' << pair_count(w, v) << ',';
      if (defined(w, v)) out << coef(w, v);
      out << ',' << signs(w, v) << '\n';
    }
  }
}

}  // namespace bcgnn::corr
