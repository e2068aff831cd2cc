#include "bcgnn/graph.hpp"

#include <algorithm>
#include <cmath>

#include "bcgnn/error.hpp"

namespace bcgnn::graph {

nlohmann::json Graph::stats() const {
  const std::size_t pairs = feature_pairs();
  std::size_t active = 0;
  for (std::size_t w = 0; w < features; ++w)
    for (std::size_t v = 0; v < features; ++v)
      if (w != v && signs(w, v) != 0) ++active;
  return {{"observations", observations},
          {"features", features},
          {"bipartite_edges", edges.size()},
          {"feature_edges", pairs},
          {"signed_feature_edges", active},
          {"sign_sparsity", pairs == 0 ? 0.0 : 1.0 - static_cast<double>(active) / static_cast<double>(pairs)}};
}

std::size_t edge_width_for(const std::vector<data::Column>& features) {
  std::size_t width = 1;
  for (const auto& c : features)
    if (c.kind == data::ColumnKind::categorical) width = std::max(width, c.category_count());
  return width;
}

Graph build_graph(const data::Dataset& ds, const corr::SignMatrix& signs, std::size_t node_dim,
                  bool require_coverage) {
  const std::size_t n = ds.rows(), m = ds.cols();
  if (m > node_dim) {
    throw ConfigError("feature count " + std::to_string(m) + " exceeds node dimension " +
                      std::to_string(node_dim) + "; feature nodes need distinct one-hot identities");
  }
  if (signs.size() != m) throw ShapeError("build_graph: sign matrix does not match feature count");
  if (ds.scaled.rows() != n || ds.scaled.cols() != m) {
    throw DataError("build_graph: dataset has not been scaled");
  }
  Graph g;
  g.observations = n;
  g.features = m;
  g.signs = signs;
  g.edge_width = edge_width_for(ds.features);
  for (const auto& c : ds.features) {
    g.category_counts.push_back(c.kind == data::ColumnKind::categorical ? c.category_count() : 0);
  }
  std::vector<std::size_t> per_feature(m, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (ds.mask.observed(i, j)) {
        g.edges.push_back({i, j});
        ++per_feature[j];
      }
  if (require_coverage && n > 0) {
    for (std::size_t j = 0; j < m; ++j)
      if (per_feature[j] == 0) {
        throw DataError("feature '" + ds.features[j].name + "' has no observed entries");
      }
  }
  g.edge_features = num::Matrix(g.edges.size(), g.edge_width);
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const auto [i, j] = g.edges[k];
    if (g.category_counts[j] > 0) {
      const auto cat = static_cast<std::size_t>(std::llround(ds.raw(i, j)));
      g.edge_features(k, cat) = 1.0;
    } else {
      g.edge_features(k, 0) = ds.scaled(i, j);
    }
  }
  return g;
}

num::Matrix init_feature_nodes(std::size_t features, std::size_t node_dim) {
  if (features > node_dim) throw ConfigError("feature count exceeds node dimension");
  num::Matrix h(features, node_dim);
  for (std::size_t j = 0; j < features; ++j) h(j, j) = 1.0;
  return h;
}

num::Matrix init_observation_nodes(std::size_t observations, std::size_t node_dim) {
  return num::Matrix(observations, node_dim, 1.0);
}

EdgeSplit drop_b(std::size_t edge_count, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("DropB rate must lie in [0, 1)");
  EdgeSplit split;
  for (std::size_t k = 0; k < edge_count; ++k) {
    if (rng.uniform() > rate) {
      split.retained.push_back(k);
    } else {
      split.held_out.push_back(k);
    }
  }
  return split;
}

std::vector<std::uint8_t> drop_c(std::size_t features, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("DropC rate must lie in [0, 1)");
  std::vector<std::uint8_t> keep(features * features, 0);
  for (std::size_t w = 0; w < features; ++w)
    for (std::size_t v = 0; v < features; ++v)
      if (w != v) keep[w * features + v] = rng.uniform() > rate ? 1 : 0;
  return keep;
}

std::vector<double> attention_keep_flags(std::size_t dim, double rate, Rng& rng) {
  std::vector<double> keep(dim);
  for (double& k : keep) k = rng.uniform() > rate ? 1.0 : 0.0;
  return keep;
}

DropMasks sample_drop_masks(const Graph& g, double drop_bipartite, double drop_feature,
                            double attention_drop, std::size_t layers, std::size_t node_dim,
                            Rng& rng) {
  if (!(attention_drop >= 0.0 && attention_drop <= 1.0)) {
    throw ConfigError("AttentionDrop rate must lie in [0, 1]");
  }
  DropMasks masks;
  masks.bipartite = drop_b(g.edges.size(), drop_bipartite, rng);
  masks.feature_pairs = drop_c(g.features, drop_feature, rng);
  const std::size_t m = g.features;
  for (std::size_t l = 0; l < layers; ++l) {
    num::Matrix keep(m * m, node_dim);
    for (std::size_t w = 0; w < m; ++w)
      for (std::size_t v = 0; v < m; ++v) {
        if (w == v) continue;
        const auto flags = attention_keep_flags(node_dim, attention_drop, rng);
        std::copy(flags.begin(), flags.end(), keep.row(w * m + v).begin());
      }
    masks.attention_keep.push_back(std::move(keep));
  }
  return masks;
}

}  // namespace bcgnn::graph
