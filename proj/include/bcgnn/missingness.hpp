#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcgnn/data.hpp"
#include "bcgnn/num/matrix.hpp"

namespace bcgnn::miss {

enum class Mechanism { mcar, mar, mnar };

Mechanism parse_mechanism(const std::string& name);
std::string to_string(Mechanism m);

/// Per-dataset draws for the MAR generator. weight/offset ~ U(0,1) and
/// depends ~ Bernoulli(0.5), one entry per feature.
struct MarParams {
  std::vector<double> weight;
  std::vector<double> offset;
  std::vector<std::uint8_t> depends;
};

/// Per-feature self-dependence weights for MNAR, each ~ U(0,1).
struct MnarParams {
  std::vector<double> weight;
};

/// Everything needed to reproduce a generated mask.
struct MissSpec {
  Mechanism mechanism = Mechanism::mcar;
  std::vector<double> rates;  // per-feature target missing rate
  std::uint64_t seed = 0;
  MarParams mar;
  MnarParams mnar;
  std::size_t clipped = 0;  // probabilities clipped to [0, 1]
  std::size_t repairs = 0;  // entries un-masked by the connectivity guard

  nlohmann::json to_json() const;
};

/// Broadcasts a single rate to m features; throws ConfigError outside (0, 1).
std::vector<double> uniform_rates(std::size_t m, double rate);

MarParams draw_mar_params(std::size_t m, std::uint64_t seed);
MnarParams draw_mnar_params(std::size_t m, std::uint64_t seed);

/// Each entry observed independently with probability 1 - rate.
data::Mask gen_mcar(std::size_t n, std::size_t m, double rate, std::uint64_t seed);
data::Mask gen_mcar(std::size_t n, const std::vector<double>& rates, std::uint64_t seed);

/// Missing probability of feature i depends on the values of features j < i:
///   pi_ki = p(i) * n * exp(s_k) / sum_l exp(s_l),
///   s_k   = sum_{j<i} w_j m_j D_kj + b_j (1 - m_j),
/// clipped to [0, 1]. The first feature has no predecessors and falls back to
/// MCAR at p(1). `data` must be complete (simulation-time values).
/// `clipped`, if given, receives the number of clipped probabilities.
data::Mask gen_mar(const num::Matrix& data, const std::vector<double>& rates,
                   const MarParams& params, std::uint64_t seed, std::size_t* clipped = nullptr);

/// Missing probability of D_ki depends on its own value:
///   pi_ki = p(i) * n * exp(-w_i D_ki) / sum_l exp(-w_i D_li), clipped to [0, 1].
data::Mask gen_mnar(const num::Matrix& data, const std::vector<double>& rates,
                    const MnarParams& params, std::uint64_t seed, std::size_t* clipped = nullptr);

/// The missing-probability matrices behind gen_mar/gen_mnar (before sampling).
num::Matrix mar_probabilities(const num::Matrix& data, const std::vector<double>& rates,
                              const MarParams& params, std::size_t* clipped = nullptr);
num::Matrix mnar_probabilities(const num::Matrix& data, const std::vector<double>& rates,
                               const MnarParams& params, std::size_t* clipped = nullptr);

/// Ensures every row and column keeps at least one observed entry by
/// un-masking one uniformly chosen entry of each empty row, then of each
/// empty column. Returns the number of repairs.
std::size_t connectivity_guard(data::Mask& mask, std::uint64_t seed);

/// Full generation pipeline: draws mechanism parameters from `seed`, builds
/// the mask, and applies the guard unless disabled. `data` is expected in
/// [0, 1] (MinMax-scaled) so the exponents stay on a common scale.
struct Generated {
  data::Mask mask;
  MissSpec spec;
};
Generated generate(const num::Matrix& data, Mechanism mechanism, const std::vector<double>& rates,
                   std::uint64_t seed, bool guard = true);

}  // namespace bcgnn::miss
