#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcgnn/data.hpp"
#include "bcgnn/num/matrix.hpp"

namespace bcgnn::eval {

struct MaeBreakdown {
  double overall = 0.0;
  std::vector<double> per_feature;  // NaN for a feature with no missing cells
  std::size_t cells = 0;
};

/// Mean |predicted - truth| over cells with mask == 0, in scaled units.
/// Categorical columns (categories[j] = K > 0) score the 0/1 mismatch of the
/// decoded category. Throws DataError when no cell is missing.
MaeBreakdown mae_breakdown(const num::Matrix& predicted, const num::Matrix& truth,
                           const data::Mask& mask, const std::vector<std::size_t>& categories = {});
double mae_missing(const num::Matrix& predicted, const num::Matrix& truth, const data::Mask& mask,
                   const std::vector<std::size_t>& categories = {});

/// method / baseline; throws NumericError for a non-positive baseline.
double normalized_mae(double method_mae, double baseline_mae);

/// 0.5 * log2 det(I + k V V^T / (eps^2 d)) for a k x d embedding set V,
/// through a Cholesky factor of the k x k Gram form.
double embedding_space_size(const num::Matrix& v, double eps = 1.0);

/// Column mean (continuous) or lowest-index mode (categorical) of the
/// observed cells, written into every missing cell. Original units.
num::Matrix mean_impute(const data::Dataset& ds);

/// Fills each missing cell from the k nearest rows that observe it: mean for
/// continuous, lowest-index mode for categorical. Distance is the mean over
/// co-observed features of the squared scaled difference (0/1 for
/// categorical); rows sharing no observed feature are infinitely far. Ties
/// go to the lower row index. Falls back to the column mean (mode) when no
/// neighbour observes the cell. Original units.
num::Matrix knn_impute(const data::Dataset& ds, std::size_t k);

/// Scaled copy of `values` (original units) under `stats`.
num::Matrix scale_matrix(const data::ScalerStats& stats, const num::Matrix& values);

struct EvalReport {
  std::vector<std::string> feature_names;
  MaeBreakdown mae;                  // scaled units
  double mae_original = 0.0;         // continuous cells only, original units
  std::optional<double> mean_baseline_mae;
  std::optional<double> normalized;
  std::optional<double> label_mae;
  std::optional<double> label_accuracy;
  std::optional<double> r_features;
  std::optional<double> r_observations;
  double epsilon = 1.0;
  nlohmann::json config;

  nlohmann::json to_json() const;
};

}  // namespace bcgnn::eval
