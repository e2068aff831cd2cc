#include <cmath>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "bcgnn/data.hpp"
#include "bcgnn/error.hpp"
#include "bcgnn/eval.hpp"
#include "bcgnn/missingness.hpp"
#include "bcgnn/run_config.hpp"
#include "bcgnn/synth.hpp"
#include "bcgnn/train.hpp"

using namespace bcgnn;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumeric = 4 };

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

void emit(const json& report, const std::string& out) {
  std::cout << report.dump(2) << '\n';
  if (!out.empty()) write_json(out, report);
}

data::Dataset load_masked(const std::string& data_path, const data::Schema& schema,
                          const std::string& mask_path) {
  data::Dataset ds = data::load_csv(data_path, schema);
  if (!mask_path.empty()) ds.apply_mask(data::read_mask(mask_path));
  return ds;
}

std::vector<std::size_t> category_counts(const std::vector<data::Column>& features) {
  std::vector<std::size_t> out;
  for (const auto& c : features)
    out.push_back(c.kind == data::ColumnKind::categorical ? c.category_count() : 0);
  return out;
}

// synth

struct SynthArgs {
  synth::Options opt;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  const auto s = synth::generate(a.opt);
  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  data::write_csv(dir / "data.csv", s.schema, s.values, s.labels.empty() ? nullptr : &s.labels);
  s.schema.save(dir / "schema.json");
  write_json(dir / "truth.json", s.truth);
  spdlog::info("wrote {} rows x {} features to {}", s.values.rows(), s.values.cols(), dir.string());
  return kOk;
}

// genmask

struct GenmaskArgs {
  std::string data, schema, mechanism, out;
  double rate = 0.3;
  std::uint64_t seed = 0;
  bool no_guard = false;
};

int run_genmask(const GenmaskArgs& a) {
  const auto mechanism = miss::parse_mechanism(a.mechanism);
  const auto schema = data::Schema::load(a.schema);
  data::Dataset ds = data::load_csv(a.data, schema);
  const std::size_t n = ds.rows(), m = ds.cols();
  if (mechanism != miss::Mechanism::mcar && ds.mask.count_missing() > 0)
    throw DataError(miss::to_string(mechanism) + " needs fully observed data; found " +
                    std::to_string(ds.mask.count_missing()) + " empty cells");
  const auto rates = miss::uniform_rates(m, a.rate);
  num::Matrix values(n, m);
  if (mechanism != miss::Mechanism::mcar) {
    data::fit_minmax(ds).apply(ds);
    values = ds.scaled;
  }
  auto gen = miss::generate(values, mechanism, rates, a.seed, !a.no_guard);

  // The mask file spans every CSV column; labels stay as loaded.
  const auto label_at = schema.label_index();
  data::Mask full(n, schema.columns.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t f = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      if (label_at && c == *label_at) {
        full(i, c) = ds.label_mask[i];
        continue;
      }
      full(i, c) = gen.mask(i, f) && ds.mask(i, f) ? 1 : 0;
      ++f;
    }
  }
  std::vector<std::string> header;
  for (const auto& c : schema.columns) header.push_back(c.name);
  data::write_mask(a.out, header, full);
  write_json(a.out + ".json", gen.spec.to_json());
  spdlog::info("{} mask: {} of {} feature cells missing", miss::to_string(mechanism),
               gen.mask.count_missing(), n * m);
  return kOk;
}

// train

struct TrainArgs {
  std::string config, data, schema, mask, checkpoint, log, profile;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::string aggregation, estimator;
  bool label_task = false;
  bool ablate = false;
};

int run_train(const TrainArgs& a) {
  RunConfig rc;
  if (!a.config.empty()) rc = RunConfig::load(a.config);
  if (a.profile == "paper") rc.train.epochs = train::TrainConfig::paper().epochs;
  else if (a.profile == "desk") rc.train.epochs = train::TrainConfig::desk().epochs;
  if (!a.data.empty()) rc.paths.data = a.data;
  if (!a.schema.empty()) rc.paths.schema = a.schema;
  if (!a.mask.empty()) rc.paths.mask = a.mask;
  if (!a.checkpoint.empty()) rc.paths.checkpoint = a.checkpoint;
  if (!a.log.empty()) rc.paths.log = a.log;
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.seed) rc.train.seed = *a.seed;
  if (a.lr) rc.train.lr = *a.lr;
  if (!a.aggregation.empty()) rc.model.aggregation = model::parse_aggregation(a.aggregation);
  if (!a.estimator.empty()) rc.train.estimator = corr::parse_estimator(a.estimator);
  if (a.label_task) rc.train.label_task = true;
  if (a.ablate) rc.train.ablate_interdependence = true;
  rc.train.validate();
  rc.model.validate();
  if (rc.paths.data.empty()) throw ConfigError("no data file given (--data or paths.data)");
  if (rc.paths.schema.empty()) throw ConfigError("no schema file given (--schema or paths.schema)");
  if (rc.paths.checkpoint.empty())
    throw ConfigError("no checkpoint path given (--out-checkpoint or paths.checkpoint)");
  if (rc.paths.log.empty()) rc.paths.log = rc.paths.checkpoint + ".log.jsonl";

  const auto schema = data::Schema::load(rc.paths.schema);
  const data::Dataset ds = load_masked(rc.paths.data, schema, rc.paths.mask);

  std::vector<std::uint8_t> split;
  if (rc.train.label_task) {
    split = data::split_labels(ds.label_mask, rc.train.seed);
    json rows = json::array();
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i]) rows.push_back(i);
    write_json(rc.paths.checkpoint + ".split.json", {{"train_rows", rows}});
  }

  std::ofstream log(rc.paths.log);
  if (!log) throw DataError("cannot write log " + rc.paths.log);
  auto result = train::fit(ds, rc.train, rc.model, rc.train.label_task ? &split : nullptr,
                           [&](const train::EpochLog& e) { log << train::to_json(e).dump() << '\n'; });
  train::save_checkpoint(rc.paths.checkpoint, result.checkpoint);
  const auto& last = result.history.back();
  spdlog::info("trained {} epochs in {:.1f}s; final imputation loss {:.6f}", last.epoch,
               last.wallclock, last.imputation_loss);
  return kOk;
}

// impute

struct ImputeArgs {
  std::string checkpoint, data, mask, out;
  bool new_data = false;
};

int run_impute(const ImputeArgs& a) {
  const auto ck = train::load_checkpoint(a.checkpoint);
  const data::Dataset ds = load_masked(a.data, ck.schema, a.mask);
  const auto res = a.new_data ? train::impute_new(ck, ds) : train::impute(ck, ds);
  const num::Matrix filled = train::fill_missing(ds, res.original);

  std::vector<double> labels;
  if (ds.has_labels()) {
    labels = ds.labels;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (!ds.label_mask[i]) labels[i] = res.labels.at(i);
  }
  data::write_csv(a.out, ck.schema, filled, ds.has_labels() ? &labels : nullptr);

  json cells = json::array();
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    const auto& col = ds.features[j];
    if (col.kind != data::ColumnKind::categorical) continue;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      if (ds.mask.observed(i, j)) continue;
      json probs = json::object();
      for (std::size_t k = 0; k < col.category_count(); ++k)
        probs[col.categories[k]] = res.probabilities[j](i, k);
      cells.push_back({{"row", i}, {"column", col.name}, {"probabilities", probs}});
    }
  }
  write_json(a.out + ".dist.json", {{"cells", cells}});
  spdlog::info("imputed {} missing cells into {}", ds.mask.count_missing(), a.out);
  return kOk;
}

// eval

struct EvalArgs {
  std::string imputed, truth, mask, schema, checkpoint, out;
  double epsilon = 1.0;
};

int run_eval(const EvalArgs& a) {
  std::optional<train::Checkpoint> ck;
  if (!a.checkpoint.empty()) ck = train::load_checkpoint(a.checkpoint);
  data::Schema schema;
  if (!a.schema.empty()) schema = data::Schema::load(a.schema);
  else if (ck) schema = ck->schema;
  else throw ConfigError("eval needs --schema or --checkpoint");

  const data::Dataset truth = data::load_csv(a.truth, schema);
  const data::Dataset imputed = data::load_csv(a.imputed, schema);
  if (imputed.rows() != truth.rows())
    throw ShapeError("imputed file has " + std::to_string(imputed.rows()) + " rows, truth has " +
                     std::to_string(truth.rows()));
  if (imputed.mask.count_missing() > 0) throw DataError("imputed file still has empty cells");
  data::Dataset masked = truth;
  masked.apply_mask(data::read_mask(a.mask));

  const auto scaler = ck ? ck->scaler : data::fit_minmax(masked);
  const auto cats = category_counts(truth.features);
  const auto truth_scaled = eval::scale_matrix(scaler, truth.raw);

  eval::EvalReport report;
  for (const auto& c : truth.features) report.feature_names.push_back(c.name);
  report.mae = eval::mae_breakdown(eval::scale_matrix(scaler, imputed.raw), truth_scaled,
                                   masked.mask, cats);
  double raw_sum = 0.0;
  std::size_t raw_count = 0;
  for (std::size_t i = 0; i < truth.rows(); ++i)
    for (std::size_t j = 0; j < truth.cols(); ++j)
      if (!masked.mask.observed(i, j) && cats[j] == 0) {
        raw_sum += std::abs(imputed.raw(i, j) - truth.raw(i, j));
        ++raw_count;
      }
  report.mae_original = raw_count ? raw_sum / static_cast<double>(raw_count) : 0.0;
  const double baseline = eval::mae_missing(
      eval::scale_matrix(scaler, eval::mean_impute(masked)), truth_scaled, masked.mask, cats);
  report.mean_baseline_mae = baseline;
  if (baseline > 0.0) report.normalized = eval::normalized_mae(report.mae.overall, baseline);

  if (truth.has_labels()) {
    double err = 0.0;
    std::size_t hits = 0, count = 0;
    for (std::size_t i = 0; i < truth.rows(); ++i) {
      if (!truth.label_mask[i] || masked.label_mask[i]) continue;
      err += std::abs(imputed.labels[i] - truth.labels[i]);
      hits += imputed.labels[i] == truth.labels[i];
      ++count;
    }
    if (count > 0) {
      if (truth.label_column->kind == data::ColumnKind::categorical)
        report.label_accuracy = static_cast<double>(hits) / static_cast<double>(count);
      else
        report.label_mae = err / static_cast<double>(count);
    }
  }
  if (ck) {
    const auto res = train::impute(*ck, masked);
    report.epsilon = a.epsilon;
    report.r_features = eval::embedding_space_size(res.feature_embeddings, a.epsilon);
    report.r_observations = eval::embedding_space_size(res.observation_embeddings, a.epsilon);
    report.config = {{"train", ck->config.to_json()}, {"model", ck->hyper.to_json()}};
  }
  emit(report.to_json(), a.out);
  return kOk;
}

// predict

struct PredictArgs {
  std::string checkpoint, data, mask, split, out, report;
};

int run_predict(const PredictArgs& a) {
  const auto ck = train::load_checkpoint(a.checkpoint);
  if (!ck.layout.has_label) throw ConfigError("checkpoint has no label head");
  const data::Dataset ds = load_masked(a.data, ck.schema, a.mask);
  const auto res = train::impute(ck, ds);

  std::vector<std::uint8_t> train_rows(ds.rows(), 0);
  if (!a.split.empty())
    for (const auto& r : read_json(a.split).at("train_rows")) train_rows.at(r.get<std::size_t>()) = 1;

  const bool classification = ck.layout.label_classes > 0;
  double err = 0.0, base_err = 0.0, train_mean = 0.0;
  std::size_t hits = 0, count = 0, train_count = 0;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (ds.label_mask[i] && train_rows[i]) {
      train_mean += ds.labels[i];
      ++train_count;
    }
  if (train_count) train_mean /= static_cast<double>(train_count);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    if (!ds.label_mask[i] || train_rows[i]) continue;
    err += std::abs(res.labels[i] - ds.labels[i]);
    base_err += std::abs(train_mean - ds.labels[i]);
    hits += res.labels[i] == ds.labels[i];
    ++count;
  }

  json report = {{"rows", ds.rows()}, {"evaluated", count}};
  if (count > 0) {
    if (classification) {
      report["accuracy"] = static_cast<double>(hits) / static_cast<double>(count);
    } else {
      report["label_mae"] = err / static_cast<double>(count);
      if (train_count) report["train_mean_mae"] = base_err / static_cast<double>(count);
    }
  }
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw DataError("cannot write " + a.out);
    out << "row,prediction\n";
    for (std::size_t i = 0; i < res.labels.size(); ++i) {
      out << i << ',';
      if (classification)
        out << ds.label_column->categories.at(static_cast<std::size_t>(res.labels[i]));
      else
        out << json(res.labels[i]).dump();
      out << '\n';
    }
  }
  emit(report, a.report);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_st("bcgnn"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Missing-value imputation and label prediction with bipartite/feature graph networks"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic benchmark (data.csv, schema.json, truth.json)");
  synth_cmd->add_option("--n", synth_args.opt.rows, "Rows")->check(CLI::Range(2, 100000000));
  synth_cmd->add_option("--m", synth_args.opt.features, "Features")->check(CLI::Range(2, 100000));
  synth_cmd->add_option("--seed", synth_args.opt.seed, "Random seed");
  synth_cmd->add_option("--categorical", synth_args.opt.categorical, "Number of three-level categorical features");
  synth_cmd->add_option("--noise", synth_args.opt.noise, "Noise standard deviation");
  synth_cmd->add_flag("--independent", synth_args.opt.independent, "No shared factor between features");
  bool no_label = false;
  synth_cmd->add_flag("--no-label", no_label, "Omit the label column");
  synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();

  GenmaskArgs gm;
  auto* genmask_cmd = app.add_subcommand("genmask", "Simulate a missingness mask");
  genmask_cmd->add_option("--data", gm.data, "Data CSV")->required()->check(CLI::ExistingFile);
  genmask_cmd->add_option("--schema", gm.schema, "Schema JSON")->required()->check(CLI::ExistingFile);
  genmask_cmd->add_option("--mechanism", gm.mechanism, "mcar, mar or mnar")->required();
  genmask_cmd->add_option("--rate", gm.rate, "Target missing rate in (0, 1)")->required();
  genmask_cmd->add_option("--seed", gm.seed, "Random seed");
  genmask_cmd->add_flag("--no-guard", gm.no_guard, "Allow rows/columns without observed cells");
  genmask_cmd->add_option("--out", gm.out, "Mask CSV (a .json sidecar is written next to it)")->required();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--config", ta.config, "Run config JSON (flags override it)")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", ta.data, "Data CSV")->check(CLI::ExistingFile);
  train_cmd->add_option("--schema", ta.schema, "Schema JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--mask", ta.mask, "Mask CSV hiding test cells")->check(CLI::ExistingFile);
  train_cmd->add_option("--out-checkpoint", ta.checkpoint, "Checkpoint path");
  train_cmd->add_option("--log", ta.log, "JSONL training log (default: <checkpoint>.log.jsonl)");
  train_cmd->add_option("--profile", ta.profile, "desk (2000 epochs) or paper (20000 epochs)")
      ->check(CLI::IsMember({"desk", "paper"}));
  train_cmd->add_option("--epochs", ta.epochs, "Training epochs");
  train_cmd->add_option("--seed", ta.seed, "Random seed");
  train_cmd->add_option("--lr", ta.lr, "Adam learning rate");
  train_cmd->add_option("--aggregation", ta.aggregation, "mean, sum or max");
  train_cmd->add_option("--estimator", ta.estimator, "spearman, pearson or kendall");
  train_cmd->add_flag("--label-task", ta.label_task, "Also train the label head on a 7:3 split");
  train_cmd->add_flag("--ablate-interdependence", ta.ablate, "Zero every correlation sign");

  ImputeArgs ia;
  auto* impute_cmd = app.add_subcommand("impute", "Fill missing cells with a trained model");
  impute_cmd->add_option("--checkpoint", ia.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  impute_cmd->add_option("--data", ia.data, "Data CSV")->check(CLI::ExistingFile);
  impute_cmd->add_option("--new-data", ia.data, "Data CSV of unseen rows (no retraining)")->check(CLI::ExistingFile);
  impute_cmd->add_option("--mask", ia.mask, "Mask CSV")->check(CLI::ExistingFile);
  impute_cmd->add_option("--out", ia.out, "Imputed CSV (a .dist.json sidecar is written next to it)")->required();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Score an imputation against ground truth");
  eval_cmd->add_option("--imputed", ea.imputed, "Imputed CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--truth", ea.truth, "Complete CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--mask", ea.mask, "Mask CSV used for training")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--schema", ea.schema, "Schema JSON (default: from checkpoint)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "Checkpoint, enables embedding-space size")->check(CLI::ExistingFile);
  eval_cmd->add_option("--epsilon", ea.epsilon, "Distortion for the embedding-space size");
  eval_cmd->add_option("--out", ea.out, "Also write the report here");

  PredictArgs pa;
  auto* predict_cmd = app.add_subcommand("predict", "Predict labels with a trained model");
  predict_cmd->add_option("--checkpoint", pa.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--data", pa.data, "Data CSV")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--mask", pa.mask, "Mask CSV")->check(CLI::ExistingFile);
  predict_cmd->add_option("--split", pa.split, "Split file written by train --label-task")->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", pa.out, "Predictions CSV");
  predict_cmd->add_option("--report", pa.report, "Also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*synth_cmd) {
      synth_args.opt.label = !no_label;
      return run_synth(synth_args);
    }
    if (*genmask_cmd) return run_genmask(gm);
    if (*train_cmd) return run_train(ta);
    if (*impute_cmd) {
      const bool has_data = impute_cmd->count("--data") > 0;
      ia.new_data = impute_cmd->count("--new-data") > 0;
      if (has_data == ia.new_data) throw ConfigError("give exactly one of --data or --new-data");
      return run_impute(ia);
    }
    if (*eval_cmd) return run_eval(ea);
    if (*predict_cmd) return run_predict(pa);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const NumericError& e) {
    spdlog::error("{}", e.what());
    return kNumeric;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
  return kUsage;
}
