#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "bcgnn/correlation.hpp"
#include "bcgnn/data.hpp"
#include "bcgnn/num/matrix.hpp"
#include "bcgnn/rng.hpp"

namespace bcgnn::graph {

/// Observation-feature edge for an observed cell (obs = row, feat = column).
struct BipartiteEdge {
  std::size_t obs = 0;
  std::size_t feat = 0;
};

/// Union graph: bipartite observation-feature edges plus the complete
/// directed feature graph, which is implicit in `signs` (every ordered pair
/// w != v exists; its sign gates the message).
struct Graph {
  std::size_t observations = 0;
  std::size_t features = 0;
  std::vector<BipartiteEdge> edges;   // row-major over observed cells
  num::Matrix edge_features;          // |edges| x edge_width, layer-0 attributes
  std::size_t edge_width = 1;         // max(1, max category count)
  std::vector<std::size_t> category_counts;  // 0 for continuous features
  corr::SignMatrix signs;

  std::size_t feature_pairs() const { return features * (features - 1); }
  nlohmann::json stats() const;
};

/// Layer-0 edge width shared by every feature of the dataset.
std::size_t edge_width_for(const std::vector<data::Column>& features);

/// One edge per observed cell of ds.scaled. Continuous cells carry their
/// scaled value in slot 0; categorical cells a one-hot of their category; both
/// zero-padded to the common edge width. Throws ConfigError when the feature
/// count exceeds node_dim (one-hot feature identities need m <= d_n), and
/// DataError for a feature without observed entries unless require_coverage
/// is false (inference on a few new rows).
Graph build_graph(const data::Dataset& ds, const corr::SignMatrix& signs, std::size_t node_dim,
                  bool require_coverage = true);

/// Initial embeddings: distinct one-hot rows for feature nodes, all-ones rows
/// for observation nodes.
num::Matrix init_feature_nodes(std::size_t features, std::size_t node_dim);
num::Matrix init_observation_nodes(std::size_t observations, std::size_t node_dim);

struct EdgeSplit {
  std::vector<std::size_t> retained;
  std::vector<std::size_t> held_out;
};

/// Keeps each edge with probability 1 - rate (uniform draw > rate).
EdgeSplit drop_b(std::size_t edge_count, double rate, Rng& rng);
/// m x m retention flags for the directed feature edges; the diagonal is 0
/// and each direction is drawn independently.
std::vector<std::uint8_t> drop_c(std::size_t features, double rate, Rng& rng);

/// Per-epoch random structure for training.
struct DropMasks {
  EdgeSplit bipartite;
  std::vector<std::uint8_t> feature_pairs;  // m x m, 1 = retained
  /// attention_keep[l] is (m*m) x node_dim; row w*m+v holds the 0/1 keep
  /// flags for the attention vector of pair w -> v at layer l.
  std::vector<num::Matrix> attention_keep;
};

/// Draws DropB, then DropC, then AttentionDrop flags for every layer and
/// ordered pair, in that order, from `rng`.
DropMasks sample_drop_masks(const Graph& g, double drop_bipartite, double drop_feature,
                            double attention_drop, std::size_t layers, std::size_t node_dim,
                            Rng& rng);

/// Keep flags for one attention vector: element k survives when b_k > rate.
std::vector<double> attention_keep_flags(std::size_t dim, double rate, Rng& rng);

}  // namespace bcgnn::graph
