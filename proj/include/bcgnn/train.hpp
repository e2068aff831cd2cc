#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcgnn/correlation.hpp"
#include "bcgnn/data.hpp"
#include "bcgnn/graph.hpp"
#include "bcgnn/model.hpp"

namespace bcgnn::train {

struct TrainConfig {
  std::size_t epochs = 2000;
  double lr = 0.001;
  double drop_bipartite = 0.5;
  double drop_feature = 0.5;
  corr::Estimator estimator = corr::Estimator::spearman;
  std::uint64_t seed = 0;
  bool label_task = false;
  double label_weight = 1.0;
  std::size_t log_interval = 100;
  /// Replace every correlation sign with 0 (bipartite-only model).
  bool ablate_interdependence = false;

  /// Short runs for tests and desk experiments.
  static TrainConfig desk() { return TrainConfig{}; }
  /// The long published schedule.
  static TrainConfig paper() {
    TrainConfig c;
    c.epochs = 20000;
    return c;
  }

  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: unknown keys throw ConfigError; absent keys keep defaults.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

struct Checkpoint {
  model::Hyper hyper;
  model::FeatureLayout layout;
  model::ModelParams params;
  data::Schema schema;
  data::ScalerStats scaler;
  corr::SignMatrix signs;
  TrainConfig config;
  std::size_t epochs_run = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: 8-byte magic "BCGNNCK1", u32 version, u64 metadata length, JSON
/// metadata, then for every parameter (in ModelParams::all() order) u64 rows,
/// u64 cols and rows*cols little-endian doubles. Throws FormatError on a
/// corrupt or truncated file or a version mismatch.
std::string serialize(const Checkpoint& ck);
Checkpoint deserialize(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double imputation_loss = 0.0;
  double label_loss = 0.0;
  double wallclock = 0.0;  // seconds since fit() started
};

nlohmann::json to_json(const EpochLog& e);
/// One JSON object per line.
void write_log(std::ostream& out, const std::vector<EpochLog>& history);

/// Imputation loss pieces for one epoch.
struct LossTargets {
  std::vector<std::size_t> continuous_cells;  // flat i * m + j into the n x m continuous map
  num::Matrix continuous_truth;               // k x 1 scaled values
  std::vector<std::vector<std::size_t>> categorical_rows;   // per feature
  std::vector<std::vector<std::size_t>> categorical_truth;  // per feature
  std::size_t count = 0;
};

/// Targets for the given (held-out) edges of g, with truth read from ds.
LossTargets loss_targets(const graph::Graph& g, const data::Dataset& ds,
                         std::span<const std::size_t> edges);

/// Mean per-edge loss: squared error on continuous cells, cross-entropy on
/// categorical cells. An empty target set gives a constant 0.
num::Var imputation_loss(num::Tape& tape, const model::ReadoutVars& r, const LossTargets& t);

/// Mean label loss over rows with train[i] == 1: squared error on scaled
/// regression labels, cross-entropy on class indices. Throws DataError when
/// no training label exists.
num::Var label_loss(const num::Var& scores, const data::Dataset& ds,
                    const std::vector<std::uint8_t>& train, bool classification);

/// One training step's loss on a fixed set of drop masks. `params` must be
/// bound on `tape` by the caller so gradients reach them.
struct StepLoss {
  num::Var total;
  double imputation = 0.0;
  double label = 0.0;
  std::size_t targets = 0;  // held-out edges contributing to the imputation loss
};

StepLoss step_loss(num::Tape& tape, const model::BoundParams& bound, const graph::Graph& g,
                   const data::Dataset& scaled, const model::Hyper& hyper,
                   const model::FeatureLayout& layout, const graph::DropMasks& masks,
                   const TrainConfig& config, const std::vector<std::uint8_t>& label_train);

struct FitResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> history;  // every epoch
  data::Dataset scaled;           // training data after scaling
  graph::Graph graph;             // full training graph
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains on `ds` (missing cells already hidden by its mask). Fits the scaler
/// and correlation signs on the observed entries, then runs full-batch Adam
/// with fresh DropEdge and AttentionDrop masks every epoch. `label_train`
/// selects the training labels when config.label_task is set (all observed
/// labels when null). Throws NumericError naming the epoch on a non-finite
/// loss.
FitResult fit(const data::Dataset& ds, const TrainConfig& config, const model::Hyper& hyper,
              const std::vector<std::uint8_t>* label_train = nullptr,
              const EpochCallback& on_epoch = {});

struct ImputeResult {
  num::Matrix scaled;    // n x m, [0, 1] units
  num::Matrix original;  // n x m, original units (categorical = category index)
  std::vector<num::Matrix> probabilities;  // per feature, n x K (empty for continuous)
  std::vector<double> labels;              // original units / class index; empty without label head
  num::Matrix label_probabilities;         // classification only
  num::Matrix observation_embeddings;
  num::Matrix feature_embeddings;
};

/// Full-graph inference on ds with the checkpoint's frozen scaler and signs.
/// Throws DataError when the schema differs from the checkpoint's.
ImputeResult impute(const Checkpoint& ck, const data::Dataset& ds);
/// Inference on rows never seen in training; zero rows give an empty result.
ImputeResult impute_new(const Checkpoint& ck, const data::Dataset& new_ds);

/// Observed cells keep their value, missing cells take the imputation.
num::Matrix fill_missing(const data::Dataset& ds, const num::Matrix& imputed);

}  // namespace bcgnn::train
