#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "bcgnn/data.hpp"
#include "bcgnn/num/matrix.hpp"

namespace bcgnn::synth {

struct Options {
  std::size_t rows = 500;
  std::size_t features = 8;
  std::uint64_t seed = 0;
  /// No shared factor: every feature is its own noise source.
  bool independent = false;
  /// The last `categorical` features are cut into three ordered levels.
  std::size_t categorical = 0;
  bool label = true;
  double noise = 0.5;
};

struct Synthetic {
  data::Schema schema;
  num::Matrix values;          // rows x features, original units
  std::vector<double> labels;  // empty without label
  nlohmann::json truth;        // loadings, transforms, label coefficients
};

/// Tabular benchmark with planted monotone dependencies: one latent factor,
/// random-sign loadings of magnitude in [0.7, 1], a monotone transform per
/// feature and Gaussian noise, plus a label linear in the features.
/// Throws ConfigError unless rows, features >= 2.
Synthetic generate(const Options& opt);

/// Fully observed Dataset view of a synthetic table.
data::Dataset to_dataset(const Synthetic& s);

}  // namespace bcgnn::synth
