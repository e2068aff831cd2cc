#pragma once

#include "bcgnn/graph.hpp"
#include "bcgnn/missingness.hpp"
#include "bcgnn/model.hpp"
#include "bcgnn/synth.hpp"

namespace testutil {

/// Small scaled dataset with its graph, layout and freshly initialized
/// parameters. Signs alternate +1 / -1 with every third pair left at 0.
struct ModelFixture {
  bcgnn::data::Dataset data;
  bcgnn::graph::Graph graph;
  bcgnn::model::Hyper hyper;
  bcgnn::model::FeatureLayout layout;
  bcgnn::model::ModelParams params;

  ModelFixture(std::size_t rows, std::size_t features, std::size_t categorical, std::size_t dim,
               std::size_t layers, std::uint64_t seed, double missing = 0.3) {
    bcgnn::synth::Options opt;
    opt.rows = rows;
    opt.features = features;
    opt.categorical = categorical;
    opt.seed = seed;
    data = bcgnn::synth::to_dataset(bcgnn::synth::generate(opt));
    data.apply_mask(bcgnn::miss::generate(data.raw, bcgnn::miss::Mechanism::mcar,
                                          bcgnn::miss::uniform_rates(features, missing), seed)
                        .mask);
    bcgnn::data::fit_minmax(data).apply(data);
    hyper.node_dim = hyper.edge_dim = hyper.message_dim = dim;
    hyper.layers = layers;
    layout = bcgnn::model::FeatureLayout::from_dataset(data);
    graph = bcgnn::graph::build_graph(data, mixed_signs(features), dim);
    params = bcgnn::model::init_params(hyper, layout, seed + 100);
  }

  static bcgnn::corr::SignMatrix mixed_signs(std::size_t m) {
    bcgnn::corr::SignMatrix s(m);
    std::size_t k = 0;
    for (std::size_t w = 0; w < m; ++w)
      for (std::size_t v = w + 1; v < m; ++v, ++k) {
        const int sign = k % 3 == 2 ? 0 : (k % 2 == 0 ? 1 : -1);
        s.set(w, v, sign);
        s.set(v, w, sign);
      }
    return s;
  }

  /// Moves every parameter off its initial value so zero biases and unit
  /// strengths do not hide mistakes.
  void perturb(std::uint64_t seed, double amount = 0.1) {
    bcgnn::Rng rng(seed);
    for (auto* p : params.all())
      for (double& x : p->value.values()) x += rng.uniform(-amount, amount);
  }
};

}  // namespace testutil
