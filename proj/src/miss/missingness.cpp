#include "bcgnn/missingness.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "bcgnn/error.hpp"
#include "bcgnn/rng.hpp"

namespace bcgnn::miss {

namespace {

// Sub-stream ids under the user seed.
constexpr std::uint64_t kParamStream = 1;
constexpr std::uint64_t kSampleStream = 2;
constexpr std::uint64_t kGuardStream = 3;

void require_finite(const num::Matrix& data, const char* who) {
  if (!data.all_finite()) throw DataError(std::string(who) + ": data must be complete and finite");
}

void require_rates(const std::vector<double>& rates, std::size_t m) {
  if (rates.size() != m) {
    throw ConfigError("expected " + std::to_string(m) + " missing rates, got " +
                      std::to_string(rates.size()));
  }
  for (double r : rates)
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("missing rate must lie in (0, 1)");
}

// Turns per-row scores into pi = p * n * exp(s_k) / sum_l exp(s_l), clipped.
void normalized_column(const std::vector<double>& score, double rate, num::Matrix& pi,
                       std::size_t col, std::size_t& clipped) {
  const std::size_t n = score.size();
  const double top = *std::max_element(score.begin(), score.end());
  std::vector<double> e(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    e[k] = std::exp(score[k] - top);
    total += e[k];
  }
  for (std::size_t k = 0; k < n; ++k) {
    // ratio is exactly 1 when all scores agree, so pi reduces to p exactly.
    const double ratio = static_cast<double>(n) * e[k] / total;
    double p = rate * ratio;
    if (p > 1.0) {
      p = 1.0;
      ++clipped;
    }
    pi(k, col) = p;
  }
}

data::Mask sample(const num::Matrix& pi, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kSampleStream));
  data::Mask mask(pi.rows(), pi.cols());
  for (std::size_t k = 0; k < pi.rows(); ++k)
    for (std::size_t i = 0; i < pi.cols(); ++i) mask(k, i) = rng.bernoulli(pi(k, i)) ? 0 : 1;
  return mask;
}

}  // namespace

Mechanism parse_mechanism(const std::string& name) {
  if (name == "mcar" || name == "MCAR") return Mechanism::mcar;
  if (name == "mar" || name == "MAR") return Mechanism::mar;
  if (name == "mnar" || name == "MNAR") return Mechanism::mnar;
  throw ConfigError("unknown missingness mechanism '" + name + "'");
}

std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::mcar:
      return "mcar";
    case Mechanism::mar:
      return "mar";
    case Mechanism::mnar:
      return "mnar";
  }
  return "?";
}

nlohmann::json MissSpec::to_json() const {
  nlohmann::json j = {{"mechanism", miss::to_string(mechanism)},
                      {"rates", rates},
                      {"seed", seed},
                      {"clipped", clipped},
                      {"repairs", repairs}};
  if (mechanism == Mechanism::mar) {
    j["mar"] = {{"w", mar.weight}, {"b", mar.offset}, {"m", mar.depends}};
  } else if (mechanism == Mechanism::mnar) {
    j["mnar"] = {{"w", mnar.weight}};
  }
  return j;
}

std::vector<double> uniform_rates(std::size_t m, double rate) {
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("missing rate must lie in (0, 1)");
  return std::vector<double>(m, rate);
}

MarParams draw_mar_params(std::size_t m, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kParamStream));
  MarParams p;
  for (std::size_t j = 0; j < m; ++j) {
    p.weight.push_back(rng.uniform());
    p.offset.push_back(rng.uniform());
    p.depends.push_back(rng.bernoulli(0.5) ? 1 : 0);
  }
  return p;
}

MnarParams draw_mnar_params(std::size_t m, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kParamStream));
  MnarParams p;
  for (std::size_t j = 0; j < m; ++j) p.weight.push_back(rng.uniform());
  return p;
}

data::Mask gen_mcar(std::size_t n, const std::vector<double>& rates, std::uint64_t seed) {
  require_rates(rates, rates.size());
  num::Matrix pi(n, rates.size());
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < rates.size(); ++i) pi(k, i) = rates[i];
  return sample(pi, seed);
}

data::Mask gen_mcar(std::size_t n, std::size_t m, double rate, std::uint64_t seed) {
  return gen_mcar(n, uniform_rates(m, rate), seed);
}

num::Matrix mar_probabilities(const num::Matrix& data, const std::vector<double>& rates,
                              const MarParams& params, std::size_t* clipped) {
  require_finite(data, "gen_mar");
  const std::size_t n = data.rows(), m = data.cols();
  require_rates(rates, m);
  if (params.weight.size() != m || params.offset.size() != m || params.depends.size() != m) {
    throw ConfigError("MAR parameters do not cover every feature");
  }
  num::Matrix pi(n, m);
  std::size_t clip_count = 0;
  if (n == 0) return pi;
  for (std::size_t k = 0; k < n; ++k) pi(k, 0) = rates[0];
  std::vector<double> score(n, 0.0);
  for (std::size_t i = 1; i < m; ++i) {
    // Extend the running score with feature i - 1.
    const std::size_t j = i - 1;
    for (std::size_t k = 0; k < n; ++k) {
      score[k] += params.depends[j] ? params.weight[j] * data(k, j) : params.offset[j];
    }
    normalized_column(score, rates[i], pi, i, clip_count);
  }
  if (clipped) *clipped = clip_count;
  return pi;
}

num::Matrix mnar_probabilities(const num::Matrix& data, const std::vector<double>& rates,
                               const MnarParams& params, std::size_t* clipped) {
  require_finite(data, "gen_mnar");
  const std::size_t n = data.rows(), m = data.cols();
  require_rates(rates, m);
  if (params.weight.size() != m) throw ConfigError("MNAR parameters do not cover every feature");
  num::Matrix pi(n, m);
  std::size_t clip_count = 0;
  if (n == 0) return pi;
  std::vector<double> score(n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) score[k] = -params.weight[i] * data(k, i);
    normalized_column(score, rates[i], pi, i, clip_count);
  }
  if (clipped) *clipped = clip_count;
  return pi;
}

data::Mask gen_mar(const num::Matrix& data, const std::vector<double>& rates,
                   const MarParams& params, std::uint64_t seed, std::size_t* clipped) {
  return sample(mar_probabilities(data, rates, params, clipped), seed);
}

data::Mask gen_mnar(const num::Matrix& data, const std::vector<double>& rates,
                    const MnarParams& params, std::uint64_t seed, std::size_t* clipped) {
  return sample(mnar_probabilities(data, rates, params, clipped), seed);
}

std::size_t connectivity_guard(data::Mask& mask, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kGuardStream));
  std::size_t repairs = 0;
  const std::size_t n = mask.rows(), m = mask.cols();
  if (n == 0 || m == 0) return 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < m && !any; ++j) any = mask.observed(i, j);
    if (!any) {
      const std::size_t j = rng.index(m);
      mask(i, j) = 1;
      ++repairs;
      spdlog::info("connectivity guard: row {} had no observed entry, un-masked column {}", i, j);
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    bool any = false;
    for (std::size_t i = 0; i < n && !any; ++i) any = mask.observed(i, j);
    if (!any) {
      const std::size_t i = rng.index(n);
      mask(i, j) = 1;
      ++repairs;
      spdlog::info("connectivity guard: column {} had no observed entry, un-masked row {}", j, i);
    }
  }
  return repairs;
}

Generated generate(const num::Matrix& data, Mechanism mechanism, const std::vector<double>& rates,
                   std::uint64_t seed, bool guard) {
  Generated g;
  g.spec.mechanism = mechanism;
  g.spec.rates = rates;
  g.spec.seed = seed;
  switch (mechanism) {
    case Mechanism::mcar:
      g.mask = gen_mcar(data.rows(), rates, seed);
      break;
    case Mechanism::mar:
      g.spec.mar = draw_mar_params(data.cols(), seed);
      g.mask = gen_mar(data, rates, g.spec.mar, seed, &g.spec.clipped);
      break;
    case Mechanism::mnar:
      g.spec.mnar = draw_mnar_params(data.cols(), seed);
      g.mask = gen_mnar(data, rates, g.spec.mnar, seed, &g.spec.clipped);
      break;
  }
  if (g.spec.clipped > 0) {
    spdlog::warn("{}: {} missing probabilities exceeded 1 and were clipped",
                 miss::to_string(mechanism), g.spec.clipped);
  }
  if (guard) g.spec.repairs = connectivity_guard(g.mask, seed);
  return g;
}

}  // namespace bcgnn::miss
