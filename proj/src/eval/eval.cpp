#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "bcgnn/error.hpp"
#include "bcgnn/eval.hpp"

namespace bcgnn::eval {

using num::Matrix;

namespace {

std::size_t decode(double scaled, std::size_t k) {
  const double idx = std::round(scaled * static_cast<double>(k - 1));
  return static_cast<std::size_t>(std::clamp(idx, 0.0, static_cast<double>(k - 1)));
}

std::size_t category_of(const std::vector<std::size_t>& categories, std::size_t j) {
  return j < categories.size() ? categories[j] : 0;
}

std::vector<std::size_t> kinds(const data::Dataset& ds) {
  std::vector<std::size_t> out;
  for (const auto& c : ds.features)
    out.push_back(c.kind == data::ColumnKind::categorical ? c.category_count() : 0);
  return out;
}

// Lowest index wins ties.
double mode(const std::vector<std::size_t>& counts) {
  return static_cast<double>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::vector<double> column_fill(const data::Dataset& ds, const std::vector<std::size_t>& cats) {
  std::vector<double> fill(ds.cols());
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    double sum = 0.0;
    std::size_t count = 0;
    std::vector<std::size_t> counts(cats[j]);
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      if (!ds.mask.observed(i, j)) continue;
      ++count;
      if (cats[j] > 0) ++counts.at(static_cast<std::size_t>(std::llround(ds.raw(i, j))));
      else sum += ds.raw(i, j);
    }
    if (count == 0) throw DataError("feature '" + ds.features[j].name + "' has no observed entries");
    fill[j] = cats[j] > 0 ? mode(counts) : sum / static_cast<double>(count);
  }
  return fill;
}

}  // namespace

MaeBreakdown mae_breakdown(const Matrix& predicted, const Matrix& truth, const data::Mask& mask,
                           const std::vector<std::size_t>& categories) {
  num::require_same_shape(predicted, truth, "mae_missing");
  if (mask.rows() != truth.rows() || mask.cols() != truth.cols())
    throw ShapeError("mae_missing: mask " + std::to_string(mask.rows()) + "x" +
                     std::to_string(mask.cols()) + " vs data " + truth.shape_string());
  MaeBreakdown out;
  const std::size_t m = truth.cols();
  std::vector<double> sums(m, 0.0);
  std::vector<std::size_t> counts(m, 0);
  double total = 0.0;
  for (std::size_t i = 0; i < truth.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (mask.observed(i, j)) continue;
      const std::size_t k = category_of(categories, j);
      const double err = k > 0 ? (decode(predicted(i, j), k) == decode(truth(i, j), k) ? 0.0 : 1.0)
                               : std::abs(predicted(i, j) - truth(i, j));
      sums[j] += err;
      ++counts[j];
      total += err;
      ++out.cells;
    }
  if (out.cells == 0) throw DataError("mae_missing: no missing entries to evaluate");
  out.overall = total / static_cast<double>(out.cells);
  for (std::size_t j = 0; j < m; ++j)
    out.per_feature.push_back(counts[j] ? sums[j] / static_cast<double>(counts[j])
                                        : std::numeric_limits<double>::quiet_NaN());
  return out;
}

double mae_missing(const Matrix& predicted, const Matrix& truth, const data::Mask& mask,
                   const std::vector<std::size_t>& categories) {
  return mae_breakdown(predicted, truth, mask, categories).overall;
}

double normalized_mae(double method_mae, double baseline_mae) {
  if (!(baseline_mae > 0.0)) throw NumericError("normalized MAE needs a positive baseline MAE");
  return method_mae / baseline_mae;
}

double embedding_space_size(const Matrix& v, double eps) {
  if (!(eps > 0.0)) throw ConfigError("embedding_space_size: eps must be positive");
  const std::size_t k = v.rows();
  const std::size_t d = v.cols();
  if (k == 0 || d == 0) return 0.0;
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> vm(v.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  const double coeff = static_cast<double>(k) / (eps * eps * static_cast<double>(d));
  Eigen::MatrixXd gram = coeff * (vm * vm.transpose());
  gram.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericError("embedding_space_size: factorization failed");
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double r = 0.5 * logdet / std::log(2.0);
  if (!std::isfinite(r)) throw NumericError("embedding_space_size: non-finite result");
  return std::max(r, 0.0);
}

Matrix mean_impute(const data::Dataset& ds) {
  const auto cats = kinds(ds);
  const auto fill = column_fill(ds, cats);
  Matrix out = ds.raw;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t j = 0; j < ds.cols(); ++j)
      if (!ds.mask.observed(i, j)) out(i, j) = fill[j];
  return out;
}

Matrix knn_impute(const data::Dataset& ds, std::size_t k) {
  if (k == 0) throw ConfigError("knn_impute: k must be at least 1");
  const std::size_t n = ds.rows();
  const std::size_t m = ds.cols();
  const auto cats = kinds(ds);
  const auto fill = column_fill(ds, cats);
  Matrix scaled = ds.scaled;
  if (scaled.rows() != n || scaled.cols() != m) scaled = scale_matrix(data::fit_minmax(ds), ds.raw);

  Matrix out = ds.raw;
  std::vector<double> dist(n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool any_missing = false;
    for (std::size_t j = 0; j < m; ++j) any_missing |= !ds.mask.observed(i, j);
    if (!any_missing) continue;

    for (std::size_t r = 0; r < n; ++r) {
      double sum = 0.0;
      std::size_t shared = 0;
      for (std::size_t j = 0; j < m; ++j) {
        if (!ds.mask.observed(i, j) || !ds.mask.observed(r, j)) continue;
        const double diff = cats[j] > 0 ? (ds.raw(i, j) == ds.raw(r, j) ? 0.0 : 1.0)
                                        : scaled(i, j) - scaled(r, j);
        sum += diff * diff;
        ++shared;
      }
      dist[r] = shared ? sum / static_cast<double>(shared) : std::numeric_limits<double>::infinity();
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });

    for (std::size_t j = 0; j < m; ++j) {
      if (ds.mask.observed(i, j)) continue;
      double sum = 0.0;
      std::size_t used = 0;
      std::vector<std::size_t> counts(cats[j]);
      for (std::size_t r : order) {
        if (used == k) break;
        if (r == i || !ds.mask.observed(r, j)) continue;
        if (cats[j] > 0) ++counts.at(static_cast<std::size_t>(std::llround(ds.raw(r, j))));
        else sum += ds.raw(r, j);
        ++used;
      }
      if (used == 0) out(i, j) = fill[j];
      else out(i, j) = cats[j] > 0 ? mode(counts) : sum / static_cast<double>(used);
    }
  }
  return out;
}

Matrix scale_matrix(const data::ScalerStats& stats, const Matrix& values) {
  if (stats.columns.size() != values.cols())
    throw ShapeError("scale_matrix: scaler covers " + std::to_string(stats.columns.size()) +
                     " columns, values have " + std::to_string(values.cols()));
  Matrix out(values.rows(), values.cols());
  for (std::size_t i = 0; i < values.rows(); ++i)
    for (std::size_t j = 0; j < values.cols(); ++j) {
      const double v = values(i, j);
      out(i, j) = std::isfinite(v) ? stats.transform(j, v) : v;
    }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  auto number = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); };
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t j = 0; j < mae.per_feature.size(); ++j) {
    const std::string name = j < feature_names.size() ? feature_names[j] : std::to_string(j);
    per[name] = number(mae.per_feature[j]);
  }
  nlohmann::json j = {{"mae", mae.overall},
                      {"mae_original_units", mae_original},
                      {"missing_cells", mae.cells},
                      {"per_feature_mae", per},
                      {"epsilon", epsilon}};
  if (mean_baseline_mae) j["mean_baseline_mae"] = *mean_baseline_mae;
  if (normalized) j["normalized_mae"] = *normalized;
  if (label_mae) j["label_mae"] = *label_mae;
  if (label_accuracy) j["label_accuracy"] = *label_accuracy;
  if (r_features) j["r_features"] = *r_features;
  if (r_observations) j["r_observations"] = *r_observations;
  if (!config.is_null()) j["config"] = config;
  return j;
}

}  // namespace bcgnn::eval
