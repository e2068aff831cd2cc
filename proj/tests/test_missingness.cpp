#include <cmath>

#include <gtest/gtest.h>

#include "bcgnn/correlation.hpp"
#include "bcgnn/error.hpp"
#include "bcgnn/missingness.hpp"
#include "helpers.hpp"

using namespace bcgnn;
using namespace bcgnn::miss;
using num::Matrix;

namespace {

double column_missing_rate(const data::Mask& m, std::size_t col) {
  std::size_t missing = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) missing += m.observed(i, col) ? 0 : 1;
  return static_cast<double>(missing) / static_cast<double>(m.rows());
}

}  // namespace

TEST(Mcar, RateAndDeterminism) {
  const auto m = gen_mcar(5000, 1, 0.3, 8);
  EXPECT_NEAR(column_missing_rate(m, 0), 0.3, 0.02);
  EXPECT_EQ(gen_mcar(5000, 1, 0.3, 8), m);
  EXPECT_NE(gen_mcar(5000, 1, 0.3, 9), m);
}

TEST(Mcar, TinyRateKeepsNearlyEverything) {
  const auto m = gen_mcar(5000, 1, 0.001, 3);
  EXPECT_GE(m.count_observed(), 4950u);
}

TEST(Mcar, RejectsRatesOutsideOpenInterval) {
  EXPECT_THROW(gen_mcar(10, 2, 0.0, 1), ConfigError);
  EXPECT_THROW(gen_mcar(10, 2, 1.0, 1), ConfigError);
  EXPECT_THROW(uniform_rates(3, -0.1), ConfigError);
}

TEST(Mar, AllIndependentReducesToMcarExactly) {
  Rng rng(1);
  const Matrix d = testutil::random_matrix(50, 4, rng, 0, 1);
  MarParams p = draw_mar_params(4, 5);
  p.depends.assign(4, 0);
  const auto rates = std::vector<double>{0.2, 0.3, 0.4, 0.5};
  const Matrix pi = mar_probabilities(d, rates, p);
  for (std::size_t k = 0; k < 50; ++k)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(pi(k, i), rates[i]);
}

TEST(Mar, MatchesDirectFormula) {
  Rng rng(2);
  const std::size_t n = 30, m = 4;
  const Matrix d = testutil::random_matrix(n, m, rng, 0, 1);
  const MarParams p = draw_mar_params(m, 6);
  const auto rates = uniform_rates(m, 0.2);
  const Matrix pi = mar_probabilities(d, rates, p);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> s(n, 0.0);
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < i; ++j) s[k] += p.depends[j] ? p.weight[j] * d(k, j) : p.offset[j];
      z += std::exp(s[k]);
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double expect = std::min(1.0, rates[i] * n * std::exp(s[k]) / z);
      EXPECT_NEAR(pi(k, i), expect, 1e-12);
    }
  }
}

TEST(Mar, EqualPredecessorsGiveEqualProbabilities) {
  Matrix d(3, 3);
  d(0, 0) = 0.2, d(0, 1) = 0.9, d(0, 2) = 0.1;
  d(1, 0) = 0.2, d(1, 1) = 0.9, d(1, 2) = 0.8;
  d(2, 0) = 0.7, d(2, 1) = 0.1, d(2, 2) = 0.5;
  MarParams p = draw_mar_params(3, 2);
  p.depends.assign(3, 1);
  const Matrix pi = mar_probabilities(d, uniform_rates(3, 0.3), p);
  EXPECT_EQ(pi(0, 2), pi(1, 2));
  EXPECT_NE(pi(0, 2), pi(2, 2));
}

TEST(Mar, FirstColumnIsMcar) {
  Rng rng(3);
  const Matrix d = testutil::random_matrix(20, 3, rng, 0, 1);
  const Matrix pi = mar_probabilities(d, uniform_rates(3, 0.4), draw_mar_params(3, 1));
  for (std::size_t k = 0; k < 20; ++k) EXPECT_DOUBLE_EQ(pi(k, 0), 0.4);
}

TEST(Mar, RejectsIncompleteData) {
  Matrix d(3, 2, 0.5);
  d(1, 1) = std::nan("");
  EXPECT_THROW(gen_mar(d, uniform_rates(2, 0.3), draw_mar_params(2, 1), 1), DataError);
  EXPECT_THROW(gen_mnar(d, uniform_rates(2, 0.3), draw_mnar_params(2, 1), 1), DataError);
}

TEST(Mnar, ZeroWeightReducesToMcar) {
  Rng rng(4);
  const Matrix d = testutil::random_matrix(40, 2, rng, 0, 1);
  MnarParams p{{0.0, 0.0}};
  const Matrix pi = mnar_probabilities(d, uniform_rates(2, 0.35), p);
  for (double x : pi.values()) EXPECT_DOUBLE_EQ(x, 0.35);
}

TEST(Mnar, LargerValuesLessLikelyMissing) {
  Rng rng(5);
  const Matrix d = testutil::random_matrix(5000, 1, rng, 0, 1);
  const auto m = gen_mnar(d, uniform_rates(1, 0.3), MnarParams{{0.9}}, 7);
  EXPECT_NEAR(column_missing_rate(m, 0), 0.3, 0.02);
  std::vector<double> x, miss;
  for (std::size_t k = 0; k < 5000; ++k) {
    x.push_back(d(k, 0));
    miss.push_back(m.observed(k, 0) ? 0.0 : 1.0);
  }
  EXPECT_LT(corr::spearman(x, miss), 0.0);
}

TEST(Guard, RepairsEmptyColumn) {
  data::Mask m(4, 2);
  for (std::size_t i = 0; i < 4; ++i) m(i, 1) = 0;
  const data::Mask before = m;
  EXPECT_EQ(connectivity_guard(m, 1), 1u);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < 4; ++i) flipped += m(i, 1) != before(i, 1);
  EXPECT_EQ(flipped, 1u);
}

TEST(Guard, LeavesValidMaskAlone) {
  data::Mask m(3, 3);
  m(0, 0) = 0;
  m(1, 2) = 0;
  const data::Mask before = m;
  EXPECT_EQ(connectivity_guard(m, 1), 0u);
  EXPECT_EQ(m, before);
}

TEST(Guard, ExtremeRateLeavesNoEmptyLine) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix d(10, 3, 0.5);
    const auto g = generate(d, Mechanism::mcar, uniform_rates(3, 0.99), seed);
    for (std::size_t i = 0; i < 10; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < 3; ++j) any |= g.mask.observed(i, j);
      EXPECT_TRUE(any);
    }
    for (std::size_t j = 0; j < 3; ++j) EXPECT_GT(1.0 - column_missing_rate(g.mask, j), 0.0);
  }
}

TEST(Generate, SpecRecordsDrawsAndReplays) {
  Rng rng(6);
  const Matrix d = testutil::random_matrix(100, 3, rng, 0, 1);
  const auto a = generate(d, Mechanism::mar, uniform_rates(3, 0.3), 12);
  const auto b = generate(d, Mechanism::mar, uniform_rates(3, 0.3), 12);
  EXPECT_EQ(a.mask, b.mask);
  const auto j = a.spec.to_json();
  EXPECT_EQ(j.at("mechanism"), "mar");
  EXPECT_EQ(j.at("mar").at("w").size(), 3u);
  EXPECT_EQ(j.at("mar").at("m").size(), 3u);
  EXPECT_EQ(parse_mechanism("MNAR"), Mechanism::mnar);
  EXPECT_THROW(parse_mechanism("random"), ConfigError);
}
