#include <algorithm>
#include <chrono>
#include <cmath>

#include <spdlog/spdlog.h>

#include "bcgnn/error.hpp"
#include "bcgnn/num/adam.hpp"
#include "bcgnn/rng.hpp"
#include "bcgnn/train.hpp"

namespace bcgnn::train {

using num::Matrix;
using num::Tape;
using num::Var;

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kDropStream = 2;

}  // namespace

LossTargets loss_targets(const graph::Graph& g, const data::Dataset& ds,
                         std::span<const std::size_t> edges) {
  const std::size_t m = g.features;
  LossTargets t;
  t.categorical_rows.resize(m);
  t.categorical_truth.resize(m);
  std::vector<double> truth;
  for (std::size_t k : edges) {
    const auto [i, j] = g.edges.at(k);
    if (g.category_counts[j] > 0) {
      t.categorical_rows[j].push_back(i);
      t.categorical_truth[j].push_back(static_cast<std::size_t>(std::llround(ds.raw(i, j))));
    } else {
      t.continuous_cells.push_back(i * m + j);
      truth.push_back(ds.scaled(i, j));
    }
  }
  t.continuous_truth = Matrix::column_vector(truth);
  t.count = edges.size();
  return t;
}

Var imputation_loss(Tape& tape, const model::ReadoutVars& r, const LossTargets& t) {
  if (t.count == 0) return tape.constant(Matrix(1, 1));
  const double total = static_cast<double>(t.count);
  std::vector<Var> parts;
  if (!t.continuous_cells.empty()) {
    Var pred = gather_elements(r.continuous, t.continuous_cells);
    parts.push_back(scale(mean_squared_error(pred, t.continuous_truth),
                          static_cast<double>(t.continuous_cells.size()) / total));
  }
  for (std::size_t j = 0; j < t.categorical_rows.size(); ++j) {
    const auto& rows = t.categorical_rows[j];
    if (rows.empty()) continue;
    Var logits = gather_rows(r.logits.at(j), rows);
    parts.push_back(scale(cross_entropy(logits, t.categorical_truth[j]),
                          static_cast<double>(rows.size()) / total));
  }
  Var loss = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) loss = add(loss, parts[k]);
  return loss;
}

Var label_loss(const Var& scores, const data::Dataset& ds, const std::vector<std::uint8_t>& train,
               bool classification) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.label_mask.size(); ++i)
    if (ds.label_mask[i] && train.at(i)) rows.push_back(i);
  if (rows.empty()) throw DataError("label task has no training labels");
  Var picked = gather_rows(scores, rows);
  if (classification) {
    std::vector<std::size_t> target;
    for (std::size_t i : rows) target.push_back(static_cast<std::size_t>(std::llround(ds.labels_scaled[i])));
    return cross_entropy(picked, target);
  }
  Matrix target(rows.size(), 1);
  for (std::size_t k = 0; k < rows.size(); ++k) target(k, 0) = ds.labels_scaled[rows[k]];
  return mean_squared_error(picked, target);
}

StepLoss step_loss(Tape& tape, const model::BoundParams& bound, const graph::Graph& g,
                   const data::Dataset& scaled, const model::Hyper& hyper,
                   const model::FeatureLayout& layout, const graph::DropMasks& masks,
                   const TrainConfig& config, const std::vector<std::uint8_t>& label_train) {
  const model::Embeddings emb = model::encode(tape, g, bound, hyper, &masks);
  const model::ReadoutVars r = model::readout(tape, emb, bound, hyper, layout);
  const LossTargets targets = loss_targets(g, scaled, masks.bipartite.held_out);
  StepLoss out;
  out.targets = targets.count;
  out.total = imputation_loss(tape, r, targets);
  out.imputation = out.total.value()(0, 0);
  if (config.label_task) {
    Var lab = label_loss(model::label_scores(r.imputed, bound), scaled, label_train,
                         layout.label_classes > 0);
    out.label = lab.value()(0, 0);
    out.total = add(out.total, scale(lab, config.label_weight));
  }
  return out;
}

FitResult fit(const data::Dataset& ds, const TrainConfig& config, const model::Hyper& hyper,
              const std::vector<std::uint8_t>* label_train, const EpochCallback& on_epoch) {
  config.validate();
  hyper.validate();
  num::retain_heap_memory();
  if (config.label_task && !ds.has_labels())
    throw ConfigError("label task requested but the schema names no label column");

  FitResult result;
  result.scaled = ds;
  data::Dataset& data = result.scaled;
  std::vector<std::uint8_t> train_rows =
      label_train ? *label_train : std::vector<std::uint8_t>(ds.label_mask.size(), 1);
  if (train_rows.size() != ds.label_mask.size())
    throw DataError("label split covers " + std::to_string(train_rows.size()) + " rows, data has " +
                    std::to_string(ds.label_mask.size()));

  Checkpoint& ck = result.checkpoint;
  ck.scaler = data::fit_minmax(data, label_train);
  ck.scaler.apply(data);
  const std::size_t m = data.cols();
  ck.signs = config.ablate_interdependence
                 ? corr::SignMatrix::zeros(m)
                 : corr::pairwise_corr(data.scaled, data.mask, config.estimator).signs;
  result.graph = graph::build_graph(data, ck.signs, hyper.node_dim);
  const graph::Graph& g = result.graph;
  spdlog::debug("training graph: {}", g.stats().dump());

  ck.hyper = hyper;
  ck.layout = model::FeatureLayout::from_dataset(data);
  ck.schema = data.schema;
  ck.config = config;
  ck.params = model::init_params(hyper, ck.layout, derive_seed(config.seed, kInitStream));

  Rng drop_rng(derive_seed(config.seed, kDropStream));
  num::AdamState adam;
  adam.lr = config.lr;
  auto param_list = ck.params.all();
  bool warned_empty = false;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const graph::DropMasks masks =
        graph::sample_drop_masks(g, config.drop_bipartite, config.drop_feature,
                                 hyper.attention_drop, hyper.layers, hyper.node_dim, drop_rng);
    Tape tape;
    const model::BoundParams bound = model::bind(tape, ck.params);
    const StepLoss loss = step_loss(tape, bound, g, data, hyper, ck.layout, masks, config, train_rows);

    const double total = loss.total.value()(0, 0);
    if (!std::isfinite(total))
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                         " (imputation " + std::to_string(loss.imputation) + ", label " +
                         std::to_string(loss.label) + ")");
    if (loss.targets == 0 && !warned_empty) {
      spdlog::warn("epoch {}: no held-out edges, imputation loss is 0", epoch);
      warned_empty = true;
    }
    if (loss.targets > 0 || config.label_task) {
      ck.params.zero_grad();
      tape.backward(loss.total);
      num::adam_step(param_list, adam);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.imputation_loss = loss.imputation;
    entry.label_loss = loss.label;
    entry.wallclock =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (config.log_interval > 0 && (epoch % config.log_interval == 0 || epoch == 1))
      spdlog::info("epoch {} imputation {:.6f} label {:.6f}", epoch, loss.imputation, loss.label);
  }
  ck.epochs_run = config.epochs;
  return result;
}

namespace {

ImputeResult run_inference(const Checkpoint& ck, const data::Dataset& ds, bool require_coverage) {
  if (!(ds.schema == ck.schema)) throw DataError("dataset schema does not match the checkpoint");
  const std::size_t m = ck.layout.features();
  ImputeResult out;
  if (ds.rows() == 0) {
    out.scaled = Matrix(0, m);
    out.original = Matrix(0, m);
    out.probabilities.resize(m);
    return out;
  }
  data::Dataset data = ds;
  ck.scaler.apply(data);
  const graph::Graph g = graph::build_graph(data, ck.signs, ck.hyper.node_dim, require_coverage);
  model::Imputation imp = model::forward(g, ck.params, ck.hyper, ck.layout, nullptr, false);

  out.scaled = imp.values;
  out.original = Matrix(data.rows(), m);
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double v = ck.scaler.inverse_transform(j, imp.values(i, j));
      out.original(i, j) = ck.layout.categories[j] > 0 ? std::round(v) : v;
    }
  out.probabilities = std::move(imp.probabilities);
  out.observation_embeddings = std::move(imp.observation_embeddings);
  out.feature_embeddings = std::move(imp.feature_embeddings);
  if (ck.layout.has_label) {
    const Matrix& lab = imp.label_output;
    if (ck.layout.label_classes > 0) {
      out.label_probabilities = lab;
      for (std::size_t i = 0; i < lab.rows(); ++i) {
        auto row = lab.row(i);
        out.labels.push_back(
            static_cast<double>(std::max_element(row.begin(), row.end()) - row.begin()));
      }
    } else {
      for (std::size_t i = 0; i < lab.rows(); ++i)
        out.labels.push_back(ck.scaler.inverse_transform_label(lab(i, 0)));
    }
  }
  return out;
}

}  // namespace

ImputeResult impute(const Checkpoint& ck, const data::Dataset& ds) {
  return run_inference(ck, ds, true);
}

ImputeResult impute_new(const Checkpoint& ck, const data::Dataset& new_ds) {
  return run_inference(ck, new_ds, false);
}

Matrix fill_missing(const data::Dataset& ds, const Matrix& imputed) {
  num::require_same_shape(ds.raw, imputed, "fill_missing");
  Matrix out = imputed;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t j = 0; j < ds.cols(); ++j)
      if (ds.mask.observed(i, j)) out(i, j) = ds.raw(i, j);
  return out;
}

}  // namespace bcgnn::train
