#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "bcgnn/error.hpp"
#include "bcgnn/missingness.hpp"
#include "bcgnn/synth.hpp"
#include "bcgnn/train.hpp"
#include "train_checks.hpp"

using namespace bcgnn;
using namespace bcgnn::train;
using num::Matrix;

namespace {

data::Dataset masked_synth(std::size_t rows, std::size_t features, std::uint64_t seed,
                           double rate = 0.3, std::size_t categorical = 0) {
  synth::Options opt;
  opt.rows = rows;
  opt.features = features;
  opt.categorical = categorical;
  opt.seed = seed;
  data::Dataset ds = synth::to_dataset(synth::generate(opt));
  ds.apply_mask(
      miss::generate(ds.raw, miss::Mechanism::mcar, miss::uniform_rates(features, rate), seed + 1)
          .mask);
  return ds;
}

model::Hyper small_hyper(std::size_t dim = 16) {
  model::Hyper h;
  h.node_dim = h.edge_dim = h.message_dim = dim;
  h.layers = 2;
  return h;
}

TrainConfig short_config(std::size_t epochs, std::uint64_t seed = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.seed = seed;
  c.log_interval = 0;
  return c;
}

std::vector<double> losses(const std::vector<EpochLog>& history) {
  std::vector<double> out;
  for (const auto& e : history) out.push_back(e.imputation_loss + e.label_loss);
  return out;
}

}  // namespace

TEST(ImputationLoss, Examples) {
  num::Tape tape;
  model::ReadoutVars r;
  r.continuous = tape.constant(Matrix{{0.7}});
  r.logits = {tape.constant(Matrix(1, 4))};

  LossTargets cont;
  cont.categorical_rows.resize(1);
  cont.categorical_truth.resize(1);
  cont.continuous_cells = {0};
  cont.continuous_truth = Matrix{{0.5}};
  cont.count = 1;
  EXPECT_NEAR(imputation_loss(tape, r, cont).value()(0, 0), 0.04, 1e-15);

  LossTargets perfect = cont;
  perfect.continuous_truth = Matrix{{0.7}};
  EXPECT_EQ(imputation_loss(tape, r, perfect).value()(0, 0), 0.0);

  LossTargets cat;
  cat.categorical_rows = {{0}};
  cat.categorical_truth = {{2}};
  cat.count = 1;
  EXPECT_NEAR(imputation_loss(tape, r, cat).value()(0, 0), std::log(4.0), 1e-15);

  LossTargets none;
  none.categorical_rows.resize(1);
  none.categorical_truth.resize(1);
  EXPECT_EQ(imputation_loss(tape, r, none).value()(0, 0), 0.0);
}

TEST(ImputationLoss, MixedTargetsAverageOverEdges) {
  num::Tape tape;
  model::ReadoutVars r;
  r.continuous = tape.constant(Matrix{{0.7, 0.0}});
  r.logits = {num::Var{}, tape.constant(Matrix(1, 2))};
  LossTargets t;
  t.categorical_rows = {{}, {0}};
  t.categorical_truth = {{}, {1}};
  t.continuous_cells = {0};
  t.continuous_truth = Matrix{{0.5}};
  t.count = 2;
  EXPECT_NEAR(imputation_loss(tape, r, t).value()(0, 0), 0.5 * (0.04 + std::log(2.0)), 1e-15);
}

TEST(LabelLoss, Examples) {
  data::Dataset ds;
  ds.label_mask = {1, 1};
  ds.labels_scaled = {1.0, 0.25};
  num::Tape tape;
  EXPECT_EQ(label_loss(tape.constant(Matrix{{0.0}, {0.25}}), ds, {1, 0}, false).value()(0, 0), 1.0);
  EXPECT_EQ(label_loss(tape.constant(Matrix{{1.0}, {0.25}}), ds, {1, 1}, false).value()(0, 0), 0.0);
  ds.labels_scaled = {1.0, 0.0};
  EXPECT_NEAR(label_loss(tape.constant(Matrix(2, 2)), ds, {1, 1}, true).value()(0, 0),
              std::log(2.0), 1e-15);
  EXPECT_THROW(label_loss(tape.constant(Matrix(2, 1)), ds, {0, 0}, false), DataError);
  ds.label_mask = {0, 1};
  EXPECT_THROW(label_loss(tape.constant(Matrix(2, 1)), ds, {1, 0}, false), DataError);
}

TEST(StepLoss, GradientsMatchFiniteDifferences) {
  for (auto agg : {model::Aggregation::mean, model::Aggregation::sum, model::Aggregation::max}) {
    for (const auto& e : testutil::step_loss_gradient_errors(21, agg))
      EXPECT_LT(e.error, 1e-5) << e.name << " under " << model::to_string(agg);
  }
}

TEST(StepLoss, HeldOutEdgeValuesDoNotReachTheirPredictions) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto outcome = testutil::check_loss_isolation(seed);
    EXPECT_GT(outcome.edges_checked, 0u);
    EXPECT_EQ(outcome.violations, 0u) << "seed " << seed;
  }
}

TEST(StepLoss, RetainedEdgeValuesDoReachTheLoss) {
  testutil::ModelFixture fx(12, 4, 0, 8, 2, 4, 0.2);
  Rng rng(9);
  const auto masks = graph::sample_drop_masks(fx.graph, 0.5, 0.5, 0.3, 2, 8, rng);
  ASSERT_FALSE(masks.bipartite.retained.empty());
  auto loss = [&](const graph::Graph& g) {
    num::Tape tape;
    const auto bound = model::bind(tape, static_cast<const model::ModelParams&>(fx.params));
    return step_loss(tape, bound, g, fx.data, fx.hyper, fx.layout, masks, TrainConfig{}, {})
        .imputation;
  };
  graph::Graph changed = fx.graph;
  changed.edge_features.row(masks.bipartite.retained[0])[0] += 0.3;
  EXPECT_NE(loss(fx.graph), loss(changed));
}

TEST(Fit, SameSeedGivesIdenticalRuns) {
  const auto ds = masked_synth(60, 4, 1);
  const auto a = fit(ds, short_config(25), small_hyper());
  const auto b = fit(ds, short_config(25), small_hyper());
  EXPECT_EQ(losses(a.history), losses(b.history));
  EXPECT_EQ(serialize(a.checkpoint), serialize(b.checkpoint));
  const auto c = fit(ds, short_config(25, 4), small_hyper());
  EXPECT_NE(losses(a.history), losses(c.history));
}

TEST(Fit, NoHeldOutEdgesLeavesParametersUnchanged) {
  const auto ds = masked_synth(40, 4, 2);
  TrainConfig config = short_config(5);
  config.drop_bipartite = 0.0;
  const auto r = fit(ds, config, small_hyper());
  for (const auto& e : r.history) EXPECT_EQ(e.imputation_loss, 0.0);
  const auto initial =
      model::init_params(small_hyper(), r.checkpoint.layout, derive_seed(config.seed, 1));
  const auto now = r.checkpoint.params.all();
  const auto then = initial.all();
  ASSERT_EQ(now.size(), then.size());
  for (std::size_t k = 0; k < now.size(); ++k) EXPECT_EQ(now[k]->value, then[k]->value) << now[k]->name;
}

TEST(Fit, LossFallsOverTraining) {
  const auto ds = masked_synth(500, 8, 5);
  const auto r = fit(ds, short_config(200, 5), small_hyper(32));
  ASSERT_EQ(r.history.size(), 200u);
  EXPECT_LT(r.history[99].imputation_loss, r.history[0].imputation_loss);
  for (const auto& e : r.history) EXPECT_TRUE(std::isfinite(e.imputation_loss));
}

TEST(Fit, LabelTaskTrainsBothHeads) {
  const auto ds = masked_synth(80, 4, 6, 0.2, 1);
  TrainConfig config = short_config(30, 6);
  config.label_task = true;
  const auto split = data::split_labels(ds.label_mask, 6);
  const auto r = fit(ds, config, small_hyper(), &split);
  EXPECT_GT(r.history.front().label_loss, 0.0);
  EXPECT_LT(r.history.back().label_loss, r.history.front().label_loss);
  const auto out = impute(r.checkpoint, ds);
  EXPECT_EQ(out.labels.size(), ds.rows());
}

TEST(Fit, RejectsBadInputs) {
  const auto ds = masked_synth(30, 3, 7);
  TrainConfig config = short_config(0);
  EXPECT_THROW(fit(ds, config, small_hyper()), ConfigError);
  config = short_config(2);
  config.drop_bipartite = 1.0;
  EXPECT_THROW(fit(ds, config, small_hyper()), ConfigError);
  data::Dataset unlabeled = ds;
  unlabeled.label_column.reset();
  config = short_config(2);
  config.label_task = true;
  EXPECT_THROW(fit(unlabeled, config, small_hyper()), ConfigError);
}

TEST(Fit, CallbackSeesEveryEpoch) {
  std::size_t calls = 0;
  fit(masked_synth(30, 3, 8), short_config(7), small_hyper(8), nullptr,
      [&](const EpochLog& e) { EXPECT_EQ(e.epoch, ++calls); });
  EXPECT_EQ(calls, 7u);
}

class Trained : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new data::Dataset(masked_synth(60, 5, 11, 0.3, 1));
    result_ = new FitResult(fit(*data_, short_config(30, 11), small_hyper()));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete data_;
  }
  static data::Dataset* data_;
  static FitResult* result_;
};
data::Dataset* Trained::data_ = nullptr;
FitResult* Trained::result_ = nullptr;

TEST_F(Trained, CheckpointRoundTripIsBitwise) {
  const Checkpoint& ck = result_->checkpoint;
  const Checkpoint back = deserialize(serialize(ck));
  EXPECT_EQ(back.hyper, ck.hyper);
  EXPECT_EQ(back.layout, ck.layout);
  EXPECT_EQ(back.schema, ck.schema);
  EXPECT_EQ(back.epochs_run, 30u);
  EXPECT_EQ(serialize(back), serialize(ck));
  const auto a = impute(ck, *data_), b = impute(back, *data_);
  EXPECT_EQ(a.scaled, b.scaled);
  EXPECT_EQ(a.original, b.original);
  EXPECT_EQ(a.probabilities, b.probabilities);
  EXPECT_EQ(a.labels, b.labels);

  testutil::TempDir dir("ck");
  save_checkpoint(dir / "m.ck", ck);
  EXPECT_EQ(impute(load_checkpoint(dir / "m.ck"), *data_).scaled, a.scaled);
}

TEST_F(Trained, CorruptCheckpointsAreRejected) {
  const std::string bytes = serialize(result_->checkpoint);
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, bytes.size() / 2,
                          bytes.size() - 1})
    EXPECT_THROW(deserialize(bytes.substr(0, cut)), FormatError) << "cut at " << cut;
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  EXPECT_THROW(deserialize(wrong_magic), FormatError);
  std::string wrong_version = bytes;
  wrong_version[8] = static_cast<char>(kCheckpointVersion + 1);
  EXPECT_THROW(deserialize(wrong_version), FormatError);
  EXPECT_THROW(deserialize(bytes + "x"), FormatError);
  testutil::TempDir dir("ck");
  EXPECT_THROW(load_checkpoint(dir / "absent.ck"), Error);
}

TEST_F(Trained, ImputeCoversEveryCellDeterministically) {
  const auto a = impute(result_->checkpoint, *data_);
  const auto b = impute(result_->checkpoint, *data_);
  EXPECT_EQ(a.scaled.rows(), data_->rows());
  EXPECT_EQ(a.scaled.cols(), data_->cols());
  EXPECT_EQ(a.scaled, b.scaled);
  EXPECT_TRUE(a.original.all_finite());
  for (double v : a.scaled.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const std::size_t cat = data_->cols() - 1;
  ASSERT_EQ(a.probabilities[cat].cols(), 3u);
  for (std::size_t i = 0; i < data_->rows(); ++i) {
    double total = 0.0;
    for (double p : a.probabilities[cat].row(i)) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(a.original(i, cat), std::round(a.original(i, cat)));
  }
}

TEST_F(Trained, FrozenScalerInvertsOnObservedCells) {
  const auto& stats = result_->checkpoint.scaler;
  for (std::size_t i = 0; i < data_->rows(); ++i)
    for (std::size_t j = 0; j < data_->cols(); ++j)
      if (data_->mask.observed(i, j)) {
        const double raw = data_->raw(i, j);
        EXPECT_NEAR(stats.inverse_transform(j, stats.transform(j, raw)), raw,
                    1e-12 * (1.0 + std::abs(raw)));
      }
}

TEST_F(Trained, ImputeNewOnTrainingRowsMatchesImpute) {
  const Checkpoint& ck = result_->checkpoint;
  EXPECT_EQ(impute_new(ck, *data_).scaled, impute(ck, *data_).scaled);
  const auto empty = impute_new(ck, data_->select_rows({}));
  EXPECT_EQ(empty.scaled.rows(), 0u);
  EXPECT_EQ(empty.original.cols(), data_->cols());
  const auto few = data_->select_rows({4, 1, 9});
  const auto a = impute_new(ck, few), b = impute_new(ck, few);
  EXPECT_EQ(a.scaled, b.scaled);
  EXPECT_EQ(a.scaled.rows(), 3u);
}

TEST_F(Trained, ImputeNewScalesOutOfRangeInputsWithoutClampingThem) {
  data::Dataset wide = data_->select_rows({0, 1, 2});
  for (std::size_t i = 0; i < 3; ++i)
    if (wide.mask.observed(i, 0)) wide.raw(i, 0) = 1e3;
  const auto out = impute_new(result_->checkpoint, wide);
  for (double v : out.scaled.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST_F(Trained, SchemaMismatchIsRejected) {
  data::Dataset other = *data_;
  other.schema.columns[0].name = "renamed";
  EXPECT_THROW(impute(result_->checkpoint, other), DataError);
  EXPECT_THROW(impute_new(result_->checkpoint, other), DataError);
}

TEST_F(Trained, FillMissingKeepsObservedCells) {
  const auto imp = impute(result_->checkpoint, *data_);
  const Matrix filled = fill_missing(*data_, imp.original);
  for (std::size_t i = 0; i < data_->rows(); ++i)
    for (std::size_t j = 0; j < data_->cols(); ++j)
      EXPECT_EQ(filled(i, j), data_->mask.observed(i, j) ? data_->raw(i, j) : imp.original(i, j));
  EXPECT_THROW(fill_missing(*data_, Matrix(2, 2)), ShapeError);
}

TEST_F(Trained, HistoryLogsOneJsonLinePerEpoch) {
  std::ostringstream out;
  write_log(out, result_->history);
  std::istringstream in(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch").get<std::size_t>(), ++n);
    for (const char* key : {"imputation_loss", "label_loss", "wallclock"}) EXPECT_TRUE(j.contains(key));
  }
  EXPECT_EQ(n, 30u);
}

TEST(TrainConfigJson, StrictKeysAndValidation) {
  TrainConfig c = TrainConfig::from_json(nlohmann::json{{"epochs", 12}, {"lr", 0.01}});
  EXPECT_EQ(c.epochs, 12u);
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_EQ(c.drop_bipartite, 0.5);
  EXPECT_EQ(TrainConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"epoch", 12}}), ConfigError);
  TrainConfig bad;
  bad.drop_feature = -0.1;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_EQ(TrainConfig::paper().epochs, 20000u);
  EXPECT_EQ(TrainConfig::desk().epochs, 2000u);
}
