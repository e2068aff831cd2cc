#include <cmath>
#include <string>

#include "bcgnn/error.hpp"
#include "bcgnn/model.hpp"
#include "bcgnn/rng.hpp"

namespace bcgnn::model {

using nlohmann::json;
using num::Matrix;
using num::Parameter;

Aggregation parse_aggregation(const std::string& name) {
  if (name == "mean") return Aggregation::mean;
  if (name == "sum") return Aggregation::sum;
  if (name == "max") return Aggregation::max;
  throw ConfigError("unknown aggregation '" + name + "' (expected mean, sum or max)");
}

std::string to_string(Aggregation agg) {
  switch (agg) {
    case Aggregation::mean:
      return "mean";
    case Aggregation::sum:
      return "sum";
    case Aggregation::max:
      return "max";
  }
  return "mean";
}

Readout parse_readout(const std::string& name) {
  if (name == "linear") return Readout::linear;
  if (name == "interaction") return Readout::interaction;
  throw ConfigError("unknown readout '" + name + "' (expected linear or interaction)");
}

std::string to_string(Readout r) { return r == Readout::linear ? "linear" : "interaction"; }

void Hyper::validate() const {
  if (node_dim == 0 || edge_dim == 0 || message_dim == 0)
    throw ConfigError("embedding widths must be positive");
  if (message_dim != node_dim)
    throw ConfigError("message_dim (" + std::to_string(message_dim) + ") must equal node_dim (" +
                      std::to_string(node_dim) + ")");
  if (layers == 0) throw ConfigError("layers must be at least 1");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
    throw ConfigError("leaky_slope must lie in [0, 1)");
  if (!(attention_drop >= 0.0 && attention_drop <= 1.0))
    throw ConfigError("attention_drop must lie in [0, 1]");
}

json Hyper::to_json() const {
  return {{"node_dim", node_dim},       {"edge_dim", edge_dim},
          {"message_dim", message_dim}, {"layers", layers},
          {"aggregation", model::to_string(aggregation)},
          {"leaky_slope", leaky_slope}, {"attention_drop", attention_drop},
          {"readout", model::to_string(readout)}};
}

Hyper Hyper::from_json(const json& j) {
  Hyper h;
  h.node_dim = j.at("node_dim").get<std::size_t>();
  h.edge_dim = j.at("edge_dim").get<std::size_t>();
  h.message_dim = j.at("message_dim").get<std::size_t>();
  h.layers = j.at("layers").get<std::size_t>();
  h.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
  h.leaky_slope = j.at("leaky_slope").get<double>();
  h.attention_drop = j.at("attention_drop").get<double>();
  h.readout = parse_readout(j.at("readout").get<std::string>());
  h.validate();
  return h;
}

FeatureLayout FeatureLayout::from_dataset(const data::Dataset& ds) {
  FeatureLayout out;
  for (const auto& c : ds.features)
    out.categories.push_back(c.kind == data::ColumnKind::categorical ? c.category_count() : 0);
  out.edge_width = graph::edge_width_for(ds.features);
  if (ds.label_column) {
    out.has_label = true;
    out.label_classes = ds.label_column->kind == data::ColumnKind::categorical
                            ? ds.label_column->category_count()
                            : 0;
  }
  return out;
}

json FeatureLayout::to_json() const {
  return {{"categories", categories},
          {"edge_width", edge_width},
          {"has_label", has_label},
          {"label_classes", label_classes}};
}

FeatureLayout FeatureLayout::from_json(const json& j) {
  FeatureLayout out;
  out.categories = j.at("categories").get<std::vector<std::size_t>>();
  out.edge_width = j.at("edge_width").get<std::size_t>();
  out.has_label = j.at("has_label").get<bool>();
  out.label_classes = j.at("label_classes").get<std::size_t>();
  return out;
}

namespace {

Parameter xavier(std::string name, std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  for (double& x : w.values()) x = rng.uniform(-bound, bound);
  return Parameter(std::move(name), std::move(w));
}

Parameter zeros(std::string name, std::size_t rows, std::size_t cols) {
  return Parameter(std::move(name), Matrix(rows, cols));
}

}  // namespace

ModelParams init_params(const Hyper& hyper, const FeatureLayout& layout, std::uint64_t seed) {
  hyper.validate();
  const std::size_t m = layout.features();
  if (m == 0) throw ConfigError("model needs at least one feature");
  const std::size_t dn = hyper.node_dim;
  const std::size_t de = hyper.edge_dim;
  const std::size_t dm = hyper.message_dim;
  Rng rng(seed);

  ModelParams p;
  for (std::size_t l = 0; l < hyper.layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    const std::size_t edge_in = l == 0 ? layout.edge_width : de;
    LayerParams layer;
    layer.message_weight = xavier(pre + "message_weight", dm, 2 * dn + edge_in, rng);
    layer.message_bias = zeros(pre + "message_bias", 1, dm);
    layer.node_weight = xavier(pre + "node_weight", dn, dn + dm, rng);
    layer.node_bias = zeros(pre + "node_bias", 1, dn);
    layer.edge_weight = xavier(pre + "edge_weight", de, edge_in + 2 * dn, rng);
    layer.edge_bias = zeros(pre + "edge_bias", 1, de);
    for (std::size_t w = 0; w < m; ++w)
      layer.attention_weight.push_back(
          xavier(pre + "attention_weight." + std::to_string(w), dn, 2 * dn, rng));
    layer.attention_bias = zeros(pre + "attention_bias", 1, dn);
    layer.strength = Parameter(pre + "strength", Matrix(m, m, 1.0));
    p.layers.push_back(std::move(layer));
  }
  p.continuous_weight = xavier("continuous_weight", 1, hyper.readout_width(), rng);
  p.continuous_bias = zeros("continuous_bias", 1, 1);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t k = layout.categories[j];
    if (k == 0) continue;
    CategoricalHead head;
    head.feature = j;
    head.weight = xavier("categorical_weight." + std::to_string(j), k, hyper.readout_width(), rng);
    head.bias = zeros("categorical_bias." + std::to_string(j), 1, k);
    p.categorical.push_back(std::move(head));
  }
  if (layout.has_label) {
    const std::size_t c = layout.label_classes == 0 ? 1 : layout.label_classes;
    p.label_weight = xavier("label_weight", c, m, rng);
    p.label_bias = zeros("label_bias", 1, c);
  }
  return p;
}

std::vector<Parameter*> ModelParams::all() {
  std::vector<Parameter*> out;
  for (auto& l : layers) {
    out.insert(out.end(), {&l.message_weight, &l.message_bias, &l.node_weight, &l.node_bias,
                           &l.edge_weight, &l.edge_bias});
    for (auto& u : l.attention_weight) out.push_back(&u);
    out.push_back(&l.attention_bias);
    out.push_back(&l.strength);
  }
  out.push_back(&continuous_weight);
  out.push_back(&continuous_bias);
  for (auto& h : categorical) {
    out.push_back(&h.weight);
    out.push_back(&h.bias);
  }
  if (!label_weight.value.empty()) {
    out.push_back(&label_weight);
    out.push_back(&label_bias);
  }
  return out;
}

std::vector<const Parameter*> ModelParams::all() const {
  auto mut = const_cast<ModelParams*>(this)->all();
  return {mut.begin(), mut.end()};
}

void ModelParams::zero_grad() {
  for (auto* p : all()) p->zero_grad();
}

}  // namespace bcgnn::model
