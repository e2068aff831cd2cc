#include <algorithm>

#include <spdlog/spdlog.h>

#include "bcgnn/error.hpp"
#include "bcgnn/model.hpp"

namespace bcgnn::model {

using num::Matrix;
using num::Tape;
using num::Var;

namespace {

template <class Params, class Leaf>
BoundParams bind_with(Params& params, Leaf leaf) {
  BoundParams b;
  for (auto& l : params.layers) {
    LayerVars v;
    v.message_weight = leaf(l.message_weight);
    v.message_bias = leaf(l.message_bias);
    v.node_weight = leaf(l.node_weight);
    v.node_bias = leaf(l.node_bias);
    v.edge_weight = leaf(l.edge_weight);
    v.edge_bias = leaf(l.edge_bias);
    for (auto& u : l.attention_weight) v.attention_weight.push_back(leaf(u));
    v.attention_bias = leaf(l.attention_bias);
    v.strength = leaf(l.strength);
    b.layers.push_back(std::move(v));
  }
  b.continuous_weight = leaf(params.continuous_weight);
  b.continuous_bias = leaf(params.continuous_bias);
  const std::size_t m = params.layers.empty() ? 0 : params.layers.front().strength.value.rows();
  b.categorical_weight.resize(m);
  b.categorical_bias.resize(m);
  for (auto& h : params.categorical) {
    b.categorical_weight.at(h.feature) = leaf(h.weight);
    b.categorical_bias.at(h.feature) = leaf(h.bias);
  }
  if (!params.label_weight.value.empty()) {
    b.label_weight = leaf(params.label_weight);
    b.label_bias = leaf(params.label_bias);
  }
  return b;
}

struct ActivePairs {
  std::vector<std::size_t> source;   // w per pair, grouped by w ascending
  std::vector<std::size_t> target;   // v per pair
  std::vector<std::size_t> flat;     // w * m + v
  Matrix sign;                       // |pairs| x 1
};

ActivePairs active_pairs(const graph::Graph& g, const graph::DropMasks* masks) {
  const std::size_t m = g.features;
  ActivePairs p;
  std::vector<double> signs;
  for (std::size_t w = 0; w < m; ++w)
    for (std::size_t v = 0; v < m; ++v) {
      if (w == v || g.signs(w, v) == 0) continue;
      if (masks && !masks->feature_pairs[w * m + v]) continue;
      p.source.push_back(w);
      p.target.push_back(v);
      p.flat.push_back(w * m + v);
      signs.push_back(static_cast<double>(g.signs(w, v)));
    }
  p.sign = Matrix::column_vector(signs);
  return p;
}

}  // namespace

BoundParams bind(Tape& tape, ModelParams& params) {
  return bind_with(params, [&](num::Parameter& p) { return tape.parameter(p); });
}

BoundParams bind(Tape& tape, const ModelParams& params) {
  return bind_with(params, [&](const num::Parameter& p) { return tape.constant(p.value); });
}

Embeddings encode(Tape& tape, const graph::Graph& g, const BoundParams& params,
                  const Hyper& hyper, const graph::DropMasks* masks) {
  const std::size_t n = g.observations;
  const std::size_t m = g.features;
  const std::size_t d = hyper.node_dim;
  if (params.layers.size() != hyper.layers)
    throw ShapeError("encode: " + std::to_string(params.layers.size()) + " layers bound, " +
                     std::to_string(hyper.layers) + " configured");

  std::vector<std::size_t> edge_ids;
  if (masks) {
    edge_ids = masks->bipartite.retained;
  } else {
    edge_ids.resize(g.edges.size());
    for (std::size_t k = 0; k < edge_ids.size(); ++k) edge_ids[k] = k;
  }
  std::vector<std::size_t> edge_obs(edge_ids.size()), edge_feat(edge_ids.size());
  for (std::size_t k = 0; k < edge_ids.size(); ++k) {
    edge_obs[k] = g.edges[edge_ids[k]].obs;
    edge_feat[k] = g.edges[edge_ids[k]].feat;
  }
  const auto pairs = active_pairs(g, masks);

  Var h_obs = tape.constant(graph::init_observation_nodes(n, d));
  Var h_feat = tape.constant(graph::init_feature_nodes(m, d));
  Var edges = gather_rows(tape.constant(g.edge_features), edge_ids);

  const auto relu = num::Activation::relu();
  const std::vector<std::size_t> all_rows;
  for (std::size_t l = 0; l < hyper.layers; ++l) {
    const auto& p = params.layers[l];
    const std::size_t edge_in = edges.cols();

    // Bipartite messages. The edge term is shared by both directions.
    Var target_w = slice_cols(p.message_weight, 0, d);
    Var source_w = slice_cols(p.message_weight, d + edge_in, d);
    Var edge_term = matmul_nt(edges, slice_cols(p.message_weight, d, edge_in));
    Var feat_as_target = matmul_nt(h_feat, target_w);
    Var obs_as_target = matmul_nt(h_obs, target_w);
    Var feat_as_source = matmul_nt(h_feat, source_w);
    Var obs_as_source = matmul_nt(h_obs, source_w);
    const num::Addend to_feat_terms[] = {
        {feat_as_target, edge_feat}, {edge_term, all_rows}, {obs_as_source, edge_obs}};
    const num::Addend to_obs_terms[] = {
        {obs_as_target, edge_obs}, {edge_term, all_rows}, {feat_as_source, edge_feat}};
    Var to_feat = fused_sum(to_feat_terms, p.message_bias, relu);
    Var to_obs = fused_sum(to_obs_terms, p.message_bias, relu);

    // Feature-to-feature messages, scored per source node.
    Var feat_messages;
    if (!pairs.source.empty()) {
      std::vector<Var> scores;
      for (std::size_t begin = 0; begin < pairs.source.size();) {
        const std::size_t w = pairs.source[begin];
        std::size_t end = begin;
        while (end < pairs.source.size() && pairs.source[end] == w) ++end;
        std::vector<std::size_t> targets(pairs.target.begin() + begin, pairs.target.begin() + end);
        const Var& u = p.attention_weight[w];
        const std::size_t src[] = {w};
        Var src_term = matmul_nt(gather_rows(h_feat, src), slice_cols(u, 0, d));
        Var tgt_term = matmul_nt(gather_rows(h_feat, targets), slice_cols(u, d, d));
        const num::Addend terms[] = {{tgt_term, all_rows},
                                     {src_term, std::vector<std::size_t>(end - begin, 0)}};
        scores.push_back(
            fused_sum(terms, p.attention_bias, num::Activation::leaky_relu(hyper.leaky_slope)));
        begin = end;
      }
      Var alpha = softmax_rows(concat_rows(scores));
      if (masks) {
        const Matrix& keep = masks->attention_keep.at(l);
        Matrix rows(pairs.flat.size(), d);
        for (std::size_t k = 0; k < pairs.flat.size(); ++k)
          std::copy_n(keep.row(pairs.flat[k]).begin(), d, rows.row(k).begin());
        alpha = mul_const(alpha, rows);
      }
      Var gate = mul_const(gather_elements(p.strength, pairs.flat), pairs.sign);
      feat_messages = mul(scale_rows(alpha, gate), gather_rows(h_feat, pairs.source));
    }

    Var feat_agg;
    if (feat_messages.valid()) {
      const Var parts[] = {to_feat, feat_messages};
      std::vector<std::size_t> segments(edge_feat);
      segments.insert(segments.end(), pairs.target.begin(), pairs.target.end());
      feat_agg = segment_reduce(concat_rows(parts), segments, m, hyper.aggregation);
    } else {
      feat_agg = segment_reduce(to_feat, edge_feat, m, hyper.aggregation);
    }
    Var obs_agg = segment_reduce(to_obs, edge_obs, n, hyper.aggregation);

    Var self_w = slice_cols(p.node_weight, 0, d);
    Var msg_w = slice_cols(p.node_weight, d, d);
    const num::Addend obs_terms[] = {{matmul_nt(h_obs, self_w), all_rows},
                                     {matmul_nt(obs_agg, msg_w), all_rows}};
    const num::Addend feat_terms[] = {{matmul_nt(h_feat, self_w), all_rows},
                                      {matmul_nt(feat_agg, msg_w), all_rows}};
    Var next_obs = fused_sum(obs_terms, p.node_bias, relu);
    Var next_feat = fused_sum(feat_terms, p.node_bias, relu);

    // The readout never sees edges, so the last edge update is skipped.
    if (l + 1 < hyper.layers) {
      const num::Addend edge_terms[] = {
          {matmul_nt(edges, slice_cols(p.edge_weight, 0, edge_in)), all_rows},
          {matmul_nt(next_feat, slice_cols(p.edge_weight, edge_in, d)), edge_feat},
          {matmul_nt(next_obs, slice_cols(p.edge_weight, edge_in + d, d)), edge_obs}};
      edges = fused_sum(edge_terms, p.edge_bias, relu);
    }
    h_obs = next_obs;
    h_feat = next_feat;
  }
  return {h_obs, h_feat};
}

ReadoutVars readout(Tape& tape, const Embeddings& emb, const BoundParams& params,
                    const Hyper& hyper, const FeatureLayout& layout) {
  const std::size_t m = layout.features();
  const std::size_t d = emb.observations.cols();
  const bool interaction = hyper.readout == Readout::interaction;
  const std::vector<std::size_t> all_rows;

  // Head weights acting on h_i for each feature: the observation block, plus
  // the product block scaled by h_j under the interaction readout.
  auto obs_weights = [&](const Var& w, std::size_t feature, std::size_t rows) {
    Var base = slice_cols(w, 0, d);
    if (!interaction) return base;
    const std::vector<std::size_t> repeat(rows, feature);
    return add(base, mul(slice_cols(w, 2 * d, d), gather_rows(emb.features, repeat)));
  };

  ReadoutVars out;
  {
    const Var& w = params.continuous_weight;
    std::vector<Var> per_feature;
    for (std::size_t j = 0; j < m; ++j) per_feature.push_back(obs_weights(w, j, 1));
    Var obs_block = matmul_nt(emb.observations, concat_rows(per_feature));  // n x m
    Var feat_term = matmul_nt(slice_cols(w, d, d), emb.features);           // 1 x m
    const std::vector<std::size_t> bias_rows(m, 0);
    Var feat_row = add(feat_term, transpose(gather_rows(params.continuous_bias, bias_rows)));
    const num::Addend terms[] = {{obs_block, all_rows}};
    out.continuous = fused_sum(terms, feat_row, num::Activation::identity());
  }

  out.logits.resize(m);
  std::vector<Var> columns;
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t k = layout.categories[j];
    if (k == 0) {
      columns.push_back(slice_cols(out.continuous, j, 1));
      continue;
    }
    const Var& w = params.categorical_weight.at(j);
    const std::size_t feat[] = {j};
    Var row = add(matmul_nt(gather_rows(emb.features, feat), slice_cols(w, d, d)),
                  params.categorical_bias.at(j));
    const num::Addend terms[] = {{matmul_nt(emb.observations, obs_weights(w, j, k)), all_rows}};
    out.logits[j] = fused_sum(terms, row, num::Activation::identity());
    Matrix levels(k, 1);
    for (std::size_t c = 0; c < k; ++c)
      levels(c, 0) = k > 1 ? static_cast<double>(c) / static_cast<double>(k - 1) : 0.0;
    columns.push_back(matmul(softmax_rows(out.logits[j]), tape.constant(std::move(levels))));
  }
  out.imputed = concat_cols(columns);
  return out;
}

Var label_scores(const Var& imputed, const BoundParams& params) {
  if (!params.label_weight.valid()) throw ConfigError("model has no label head");
  return add_row(matmul_nt(imputed, params.label_weight), params.label_bias);
}

Imputation forward(const graph::Graph& g, const ModelParams& params, const Hyper& hyper,
                   const FeatureLayout& layout, const graph::DropMasks* masks, bool training) {
  Tape tape;
  const BoundParams bound = bind(tape, params);
  const Embeddings emb = encode(tape, g, bound, hyper, training ? masks : nullptr);
  const ReadoutVars r = readout(tape, emb, bound, hyper, layout);

  Imputation out;
  out.observation_embeddings = emb.observations.value();
  out.feature_embeddings = emb.features.value();
  out.values = r.imputed.value();
  out.probabilities.resize(layout.features());
  for (std::size_t j = 0; j < layout.features(); ++j) {
    const std::size_t k = layout.categories[j];
    if (k == 0) {
      if (!training)
        for (std::size_t i = 0; i < out.values.rows(); ++i)
          out.values(i, j) = std::clamp(out.values(i, j), 0.0, 1.0);
      continue;
    }
    Matrix probs = softmax_rows(r.logits[j]).value();
    if (!training) {
      for (std::size_t i = 0; i < probs.rows(); ++i) {
        auto row = probs.row(i);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        out.values(i, j) = k > 1 ? static_cast<double>(best) / static_cast<double>(k - 1) : 0.0;
      }
    }
    out.probabilities[j] = std::move(probs);
  }
  if (bound.label_weight.valid()) {
    Var scores = label_scores(r.imputed, bound);
    out.label_output = layout.label_classes > 0 ? softmax_rows(scores).value() : scores.value();
  }
  return out;
}

}  // namespace bcgnn::model
