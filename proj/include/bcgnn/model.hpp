#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "bcgnn/graph.hpp"
#include "bcgnn/num/tape.hpp"

namespace bcgnn::model {

using num::Aggregation;

Aggregation parse_aggregation(const std::string& name);
std::string to_string(Aggregation agg);

/// Input of the feature readout head for cell (i, j).
///   linear:      [h_i; h_j]
///   interaction: [h_i; h_j; h_i * h_j]
/// The linear form is additive in i and j (every row is shifted by the same
/// amount for all features), so it cannot express feature-specific
/// dependence on the observation; interaction is the default.
enum class Readout { linear, interaction };

Readout parse_readout(const std::string& name);
std::string to_string(Readout r);

/// Architecture hyperparameters. Message width must equal node width because
/// feature nodes pool bipartite and feature-to-feature messages together.
struct Hyper {
  std::size_t node_dim = 64;
  std::size_t edge_dim = 64;
  std::size_t message_dim = 64;
  std::size_t layers = 3;
  Aggregation aggregation = Aggregation::mean;
  double leaky_slope = 0.01;
  double attention_drop = 0.3;
  model::Readout readout = model::Readout::interaction;

  /// Width of the feature readout input (2 or 3 node widths).
  std::size_t readout_width() const { return (readout == model::Readout::linear ? 2 : 3) * node_dim; }
  void validate() const;
  nlohmann::json to_json() const;
  static Hyper from_json(const nlohmann::json& j);
  bool operator==(const Hyper&) const = default;
};

/// Shape facts the parameters depend on.
struct FeatureLayout {
  std::vector<std::size_t> categories;  // per feature; 0 = continuous
  std::size_t edge_width = 1;           // layer-0 edge attribute width
  bool has_label = false;
  std::size_t label_classes = 0;        // 0 = regression label

  std::size_t features() const { return categories.size(); }
  static FeatureLayout from_dataset(const data::Dataset& ds);
  nlohmann::json to_json() const;
  static FeatureLayout from_json(const nlohmann::json& j);
  bool operator==(const FeatureLayout&) const = default;
};

/// Weights of one message-passing layer.
struct LayerParams {
  num::Parameter message_weight;  // P: d_m x (2 d_n + d_e_in), columns (target, edge, source)
  num::Parameter message_bias;    // b: 1 x d_m
  num::Parameter node_weight;     // Q: d_n x (d_n + d_m), columns (self, message)
  num::Parameter node_bias;       // c: 1 x d_n
  num::Parameter edge_weight;     // W: d_e x (d_e_in + 2 d_n), columns (edge, feature, observation)
  num::Parameter edge_bias;       // d: 1 x d_e
  std::vector<num::Parameter> attention_weight;  // U_w: d_n x 2 d_n, columns (source, target)
  num::Parameter attention_bias;  // g: 1 x d_n
  num::Parameter strength;        // I: m x m; entry (w, v) scales w -> v, diagonal unused
};

struct CategoricalHead {
  std::size_t feature = 0;
  num::Parameter weight;  // K x readout width, columns (observation, feature[, product])
  num::Parameter bias;    // 1 x K
};

struct ModelParams {
  std::vector<LayerParams> layers;
  num::Parameter continuous_weight;  // 1 x readout width, shared by continuous features
  num::Parameter continuous_bias;    // 1 x 1
  std::vector<CategoricalHead> categorical;
  num::Parameter label_weight;  // C x m (C = 1 for regression); empty without label
  num::Parameter label_bias;    // 1 x C

  /// Every parameter in a fixed order (optimizer and checkpoint order).
  std::vector<num::Parameter*> all();
  std::vector<const num::Parameter*> all() const;
  void zero_grad();
};

/// Xavier-uniform weights, zero biases, unit strengths.
ModelParams init_params(const Hyper& hyper, const FeatureLayout& layout, std::uint64_t seed);

// Single-node forms of the layer computations. encode() evaluates the same
// expressions for all nodes at once.

/// ReLU(P * [h_target; e; h_source] + b).
std::vector<double> bipartite_message(std::span<const double> h_target, std::span<const double> edge,
                                      std::span<const double> h_source, const LayerParams& layer);
/// LeakyReLU(U_w * [h_source; h_target] + g).
std::vector<double> attention_score(std::span<const double> h_source,
                                    std::span<const double> h_target, const num::Matrix& weight,
                                    std::span<const double> bias, double slope);
/// Softmax of the score; in training, element k is zeroed when keep[k] == 0
/// (surviving weights are not renormalized).
std::vector<double> attention_weights(std::span<const double> score, bool training,
                                      std::span<const double> keep = {});
/// (sign * strength * alpha) elementwise-times h_source.
std::vector<double> feature_message(std::span<const double> h_source, std::span<const double> alpha,
                                    int sign, double strength);
/// Elementwise mean/sum/max over equal-width messages; zero vector when empty.
std::vector<double> aggregate(const std::vector<std::vector<double>>& messages, Aggregation agg,
                              std::size_t width);
/// ReLU(Q * [h; m] + c).
std::vector<double> update_node(std::span<const double> h, std::span<const double> message,
                                const LayerParams& layer);
/// ReLU(W * [e; h_feature; h_observation] + d), using this layer's updated nodes.
std::vector<double> update_edge(std::span<const double> edge, std::span<const double> h_feature,
                                std::span<const double> h_observation, const LayerParams& layer);
/// Linear label head over one imputed row; softmax for classification.
std::vector<double> readout_label(std::span<const double> imputed_row, const num::Matrix& weight,
                                  std::span<const double> bias, bool classification);

/// Parameters placed on a tape.
struct LayerVars {
  num::Var message_weight, message_bias, node_weight, node_bias, edge_weight, edge_bias;
  std::vector<num::Var> attention_weight;
  num::Var attention_bias, strength;
};
struct BoundParams {
  std::vector<LayerVars> layers;
  num::Var continuous_weight, continuous_bias;
  std::vector<num::Var> categorical_weight, categorical_bias;  // indexed by feature; invalid if continuous
  num::Var label_weight, label_bias;
};

/// Trainable binding: backward() accumulates into the Parameters.
BoundParams bind(num::Tape& tape, ModelParams& params);
/// Constant binding for inference.
BoundParams bind(num::Tape& tape, const ModelParams& params);

struct Embeddings {
  num::Var observations;  // n x d_n after the last layer
  num::Var features;      // m x d_n after the last layer
};

/// Runs all layers. With masks, only retained bipartite and feature edges
/// take part and attention vectors are dropped per the masks; without masks
/// the full graph is used. Feature pairs whose sign is 0 are left out of the
/// aggregation entirely.
Embeddings encode(num::Tape& tape, const graph::Graph& g, const BoundParams& params,
                  const Hyper& hyper, const graph::DropMasks* masks);

struct ReadoutVars {
  num::Var continuous;               // n x m, continuous head at every cell
  std::vector<num::Var> logits;      // per feature: n x K (invalid for continuous)
  num::Var imputed;                  // n x m in scaled units; categorical = E[index] / (K - 1)
};

ReadoutVars readout(num::Tape& tape, const Embeddings& emb, const BoundParams& params,
                    const Hyper& hyper, const FeatureLayout& layout);

/// n x C label output (raw linear scores / logits).
num::Var label_scores(const num::Var& imputed, const BoundParams& params);

/// Plain-value result of a forward pass.
struct Imputation {
  num::Matrix values;                      // n x m scaled; categorical = argmax / (K - 1)
  std::vector<num::Matrix> probabilities;  // per feature: n x K (empty for continuous)
  num::Matrix label_output;                // n x 1 regression value or n x C probabilities
  num::Matrix observation_embeddings;
  num::Matrix feature_embeddings;
};

/// Full forward pass. When training is false the masks are ignored, the full
/// graph is used, and continuous outputs are clamped to [0, 1].
Imputation forward(const graph::Graph& g, const ModelParams& params, const Hyper& hyper,
                   const FeatureLayout& layout, const graph::DropMasks* masks, bool training);

}  // namespace bcgnn::model
