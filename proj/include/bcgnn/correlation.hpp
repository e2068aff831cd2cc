#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bcgnn/data.hpp"
#include "bcgnn/num/matrix.hpp"

namespace bcgnn::corr {

enum class Estimator { spearman, pearson, kendall };

Estimator parse_estimator(const std::string& name);
std::string to_string(Estimator e);

/// |S| below this threshold counts as no dependency.
inline constexpr double kSignThreshold = 0.1;

/// Square m x m matrix of sign indicators in {-1, 0, +1}.
class SignMatrix {
 public:
  SignMatrix() = default;
  explicit SignMatrix(std::size_t m) : m_(m), signs_(m * m, 0) {}

  std::size_t size() const { return m_; }
  int operator()(std::size_t w, std::size_t v) const { return signs_[w * m_ + v]; }
  void set(std::size_t w, std::size_t v, int s) { signs_[w * m_ + v] = s; }
  /// Every entry zero: the interdependence ablation.
  static SignMatrix zeros(std::size_t m) { return SignMatrix(m); }
  std::size_t nonzero_count() const;

  const std::vector<int>& values() const { return signs_; }
  static SignMatrix from_values(std::size_t m, std::vector<int> values);

  bool operator==(const SignMatrix&) const = default;

 private:
  std::size_t m_ = 0;
  std::vector<int> signs_;
};

/// Pairwise-complete correlation estimates. coef(w, v) is meaningful only
/// where defined(w, v); undefined pairs always carry sign 0.
struct CorrMatrix {
  Estimator estimator = Estimator::spearman;
  std::size_t m = 0;
  num::Matrix coef;
  std::vector<std::uint8_t> defined_flags;
  std::vector<std::size_t> pair_counts;
  SignMatrix signs;

  bool defined(std::size_t w, std::size_t v) const { return defined_flags[w * m + v] != 0; }
  std::size_t pair_count(std::size_t w, std::size_t v) const { return pair_counts[w * m + v]; }

  /// CSV with one row per unordered pair:
  /// feature_a,feature_b,pairs,coefficient,sign (coefficient empty if undefined).
  void write_csv(const std::filesystem::path& path, const std::vector<std::string>& names) const;
};

/// 1-based ranks; tied values share the mean of their rank range.
/// Throws DataError on empty or non-finite input.
std::vector<double> average_ranks(std::span<const double> x);

/// Product-moment correlation; NaN when either side has zero variance or
/// fewer than two points.
double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);
/// Tie-corrected Kendall tau-b (O(n^2)).
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

/// Sign rule: 0 when |S| < 0.1, otherwise the sign of S.
int sign_indicator(double s);

/// Correlations over rows where both features are observed.
CorrMatrix pairwise_corr(const num::Matrix& data, const data::Mask& mask, Estimator estimator);

}  // namespace bcgnn::corr
