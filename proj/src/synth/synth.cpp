#include <cmath>
#include <string>

#include "bcgnn/error.hpp"
#include "bcgnn/rng.hpp"
#include "bcgnn/synth.hpp"

namespace bcgnn::synth {

using nlohmann::json;

namespace {

// Standard-normal tertile cut points.
constexpr double kLowCut = -0.4307272992954576;
constexpr double kHighCut = 0.4307272992954576;

const char* kTransformNames[] = {"identity", "exp", "cubic", "logistic"};

double monotone(std::size_t kind, double x) {
  switch (kind % 4) {
    case 1:
      return std::exp(0.5 * x);
    case 2:
      return x + 0.3 * x * x * x;
    case 3:
      return 10.0 / (1.0 + std::exp(-1.5 * x));
    default:
      return x;
  }
}

}  // namespace

Synthetic generate(const Options& opt) {
  if (opt.rows < 2 || opt.features < 2) throw ConfigError("synth: rows and features must be >= 2");
  if (opt.categorical > opt.features) throw ConfigError("synth: more categorical than total features");
  if (!(opt.noise > 0.0)) throw ConfigError("synth: noise must be positive");
  const std::size_t n = opt.rows;
  const std::size_t m = opt.features;
  Rng rng(derive_seed(opt.seed, 0));

  Synthetic out;
  std::vector<double> loading(m, 0.0);
  if (!opt.independent)
    for (std::size_t j = 0; j < m; ++j)
      loading[j] = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.7, 1.0);
  std::vector<double> coef(m);
  for (double& c : coef) c = rng.uniform(-1.0, 1.0);

  for (std::size_t j = 0; j < m; ++j) {
    data::Column c;
    c.name = "x" + std::to_string(j);
    if (j >= m - opt.categorical) {
      c.kind = data::ColumnKind::categorical;
      c.categories = {"low", "mid", "high"};
    }
    out.schema.columns.push_back(c);
  }
  if (opt.label) {
    out.schema.columns.push_back({"y", data::ColumnKind::continuous, {}});
    out.schema.label = "y";
  }

  out.values = num::Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.normal();
    double y = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double spread = opt.independent ? 1.0 : std::sqrt(loading[j] * loading[j] + opt.noise * opt.noise);
      const double x = (opt.independent ? rng.normal() : loading[j] * z + opt.noise * rng.normal()) / spread;
      double v;
      if (out.schema.columns[j].kind == data::ColumnKind::categorical) {
        v = x < kLowCut ? 0.0 : (x < kHighCut ? 1.0 : 2.0);
        y += coef[j] * (v - 1.0);
      } else {
        v = monotone(j, x);
        y += coef[j] * v;
      }
      out.values(i, j) = v;
    }
    if (opt.label) out.labels.push_back(y + 0.1 * rng.normal());
  }

  json transforms = json::array();
  for (std::size_t j = 0; j < m; ++j)
    transforms.push_back(out.schema.columns[j].kind == data::ColumnKind::categorical
                             ? "tertiles"
                             : kTransformNames[j % 4]);
  out.truth = {{"rows", n},
               {"features", m},
               {"seed", opt.seed},
               {"independent", opt.independent},
               {"noise", opt.noise},
               {"loadings", loading},
               {"transforms", transforms}};
  if (opt.label) out.truth["label_coefficients"] = coef;
  return out;
}

data::Dataset to_dataset(const Synthetic& s) {
  data::Dataset ds;
  ds.schema = s.schema;
  ds.features = s.schema.features();
  if (const auto at = s.schema.label_index()) ds.label_column = s.schema.columns[*at];
  ds.raw = s.values;
  ds.mask = data::Mask(s.values.rows(), s.values.cols());
  if (ds.label_column) {
    ds.labels = s.labels;
    ds.label_mask.assign(s.labels.size(), 1);
  }
  return ds;
}

}  // namespace bcgnn::synth
