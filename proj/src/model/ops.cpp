#include <algorithm>
#include <limits>

#include "bcgnn/error.hpp"
#include "bcgnn/model.hpp"

namespace bcgnn::model {

using num::Matrix;

namespace {

// ReLU(weight * concat(parts) + bias) for a single vector.
std::vector<double> affine(const Matrix& weight, std::span<const double> bias,
                           std::initializer_list<std::span<const double>> parts,
                           num::Activation act, const char* what) {
  std::size_t width = 0;
  for (auto p : parts) width += p.size();
  if (width != weight.cols() || bias.size() != weight.rows())
    throw ShapeError(std::string(what) + ": input width " + std::to_string(width) +
                     " vs weight " + weight.shape_string());
  std::vector<double> x;
  x.reserve(width);
  for (auto p : parts) x.insert(x.end(), p.begin(), p.end());
  std::vector<double> out(weight.rows());
  for (std::size_t r = 0; r < weight.rows(); ++r) {
    double acc = bias[r];
    auto row = weight.row(r);
    for (std::size_t k = 0; k < width; ++k) acc += row[k] * x[k];
    out[r] = act.apply(acc);
  }
  return out;
}

}  // namespace

std::vector<double> bipartite_message(std::span<const double> h_target, std::span<const double> edge,
                                      std::span<const double> h_source, const LayerParams& layer) {
  return affine(layer.message_weight.value, layer.message_bias.value.values(),
                {h_target, edge, h_source}, num::Activation::relu(), "bipartite_message");
}

std::vector<double> attention_score(std::span<const double> h_source,
                                    std::span<const double> h_target, const Matrix& weight,
                                    std::span<const double> bias, double slope) {
  return affine(weight, bias, {h_source, h_target}, num::Activation::leaky_relu(slope),
                "attention_score");
}

std::vector<double> attention_weights(std::span<const double> score, bool training,
                                      std::span<const double> keep) {
  auto alpha = num::softmax(score);
  if (training && !keep.empty()) {
    if (keep.size() != alpha.size())
      throw ShapeError("attention_weights: keep flags have width " + std::to_string(keep.size()) +
                       ", score has " + std::to_string(alpha.size()));
    for (std::size_t k = 0; k < alpha.size(); ++k) alpha[k] *= keep[k];
  }
  return alpha;
}

std::vector<double> feature_message(std::span<const double> h_source, std::span<const double> alpha,
                                    int sign, double strength) {
  if (alpha.size() != h_source.size())
    throw ShapeError("feature_message: attention width " + std::to_string(alpha.size()) +
                     " vs embedding width " + std::to_string(h_source.size()));
  std::vector<double> out(h_source.size());
  const double gate = static_cast<double>(sign) * strength;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = gate * alpha[k] * h_source[k];
  return out;
}

std::vector<double> aggregate(const std::vector<std::vector<double>>& messages, Aggregation agg,
                              std::size_t width) {
  std::vector<double> out(width, 0.0);
  if (messages.empty()) return out;
  if (agg == Aggregation::max) out.assign(width, -std::numeric_limits<double>::infinity());
  for (const auto& msg : messages) {
    if (msg.size() != width)
      throw ShapeError("aggregate: message width " + std::to_string(msg.size()) + " vs " +
                       std::to_string(width));
    for (std::size_t k = 0; k < width; ++k)
      out[k] = agg == Aggregation::max ? std::max(out[k], msg[k]) : out[k] + msg[k];
  }
  if (agg == Aggregation::mean)
    for (double& x : out) x /= static_cast<double>(messages.size());
  return out;
}

std::vector<double> update_node(std::span<const double> h, std::span<const double> message,
                                const LayerParams& layer) {
  return affine(layer.node_weight.value, layer.node_bias.value.values(), {h, message},
                num::Activation::relu(), "update_node");
}

std::vector<double> update_edge(std::span<const double> edge, std::span<const double> h_feature,
                                std::span<const double> h_observation, const LayerParams& layer) {
  return affine(layer.edge_weight.value, layer.edge_bias.value.values(),
                {edge, h_feature, h_observation}, num::Activation::relu(), "update_edge");
}

std::vector<double> readout_label(std::span<const double> imputed_row, const Matrix& weight,
                                  std::span<const double> bias, bool classification) {
  auto out = affine(weight, bias, {imputed_row}, num::Activation::identity(), "readout_label");
  if (classification) out = num::softmax(out);
  return out;
}

}  // namespace bcgnn::model
