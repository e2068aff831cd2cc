// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "bcgnn/correlation.hpp"
#include "bcgnn/eval.hpp"
#include "bcgnn/missingness.hpp"
#include "bcgnn/synth.hpp"
#include "bcgnn/train.hpp"
#include "train_checks.hpp"

using namespace bcgnn;
using num::Matrix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

// ---------------------------------------------------------------- 1 to 7

Outcome gradient_fidelity() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t tensors = 0;
  for (auto agg : {model::Aggregation::mean, model::Aggregation::sum, model::Aggregation::max}) {
    for (const auto& e : testutil::step_loss_gradient_errors(1, agg)) {
      ++tensors;
      if (e.error >= worst) {
        worst = e.error;
        worst_name = e.name + "/" + model::to_string(agg);
      }
    }
  }
  const double secs = seconds_since(start);
  return {worst < 1e-5 && secs < 30.0,
          fmt::format("{} parameter tensors, worst relative error {:.2e} ({}), {:.1f} s", tensors,
                      worst, worst_name, secs)};
}

Outcome attention_normalization() {
  Rng rng(2);
  double worst = 0.0;
  for (int t = 0; t < 100000; ++t) {
    std::vector<double> score(1 + rng.index(64));
    for (double& s : score) s = rng.uniform(-30.0, 30.0);
    const auto w = model::attention_weights(score, false);
    worst = std::max(worst, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0));
  }
  std::size_t kept = 0;
  for (int t = 0; t < 10000; ++t) kept += graph::attention_keep_flags(1, 0.3, rng)[0] > 0.0;
  const double survival = kept / 10000.0;
  return {worst <= 1e-9 && std::abs(survival - 0.7) <= 0.02,
          fmt::format("max |sum - 1| = {:.1e}, survival {:.4f}", worst, survival)};
}

std::vector<double> ranks_by_sort(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t k = 0; k < order.size(); ++k) r[order[k]] = static_cast<double>(k + 1);
  return r;
}

Outcome spearman_oracle() {
  Rng rng(3);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 3 + rng.index(100);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.uniform(-10, 10);
      y[i] = rng.uniform(-10, 10);
    }
    const auto rx = ranks_by_sort(x), ry = ranks_by_sort(y);
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    const double nn = static_cast<double>(n);
    const double simplified = 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
    worst = std::max(worst, std::abs(corr::spearman(x, y) - simplified));
  }
  const double hand = corr::spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{2, 1, 4, 3});
  return {worst <= 1e-12 && hand == 0.6,
          fmt::format("max deviation {:.1e} over 1000 pairs, hand case {:.17g}", worst, hand)};
}

Outcome sign_threshold() {
  const std::vector<std::pair<double, int>> cases{{0.05, 0}, {0.0999, 0}, {0.1, 1},
                                                  {0.5, 1},  {-0.1, -1},  {-0.3, -1}};
  std::string bad;
  for (const auto& [s, want] : cases)
    if (corr::sign_indicator(s) != want) bad += fmt::format(" {}", s);
  return {bad.empty(), bad.empty() ? "6/6 cases" : "wrong at" + bad};
}

Outcome missingness_rates() {
  const auto start = Clock::now();
  synth::Options opt;
  opt.rows = 5000;
  opt.seed = 5;
  opt.label = false;
  data::Dataset ds = synth::to_dataset(synth::generate(opt));
  data::fit_minmax(ds).apply(ds);
  const std::size_t n = ds.rows(), m = ds.cols();
  double worst = 0.0;
  std::string worst_at;
  for (auto mech : {miss::Mechanism::mcar, miss::Mechanism::mar, miss::Mechanism::mnar}) {
    for (double rate : {0.3, 0.5, 0.7}) {
      const auto g = miss::generate(ds.scaled, mech, miss::uniform_rates(m, rate), 50);
      for (std::size_t j = 0; j < m; ++j) {
        std::size_t missing = 0;
        for (std::size_t i = 0; i < n; ++i) missing += !g.mask.observed(i, j);
        const double dev = std::abs(static_cast<double>(missing) / static_cast<double>(n) - rate);
        if (dev > worst) {
          worst = dev;
          worst_at = fmt::format("{} at {} feature {}", miss::to_string(mech), rate, j);
        }
      }
    }
  }
  const auto rates = miss::uniform_rates(m, 0.4);
  miss::MarParams mar = miss::draw_mar_params(m, 6);
  std::fill(mar.depends.begin(), mar.depends.end(), 0);
  miss::MnarParams mnar{std::vector<double>(m, 0.0)};
  const Matrix pm = miss::mar_probabilities(ds.scaled, rates, mar);
  const Matrix pn = miss::mnar_probabilities(ds.scaled, rates, mnar);
  double reduction = 0.0;
  for (std::size_t k = 0; k < pm.size(); ++k)
    reduction = std::max({reduction, std::abs(pm[k] - 0.4), std::abs(pn[k] - 0.4)});
  const double secs = seconds_since(start);
  return {worst <= 0.02 && reduction <= 1e-12 && secs < 60.0,
          fmt::format("worst rate deviation {:.4f} ({}), MAR/MNAR reduction max |pi - p| {:.1e}, "
                      "{:.1f} s",
                      worst, worst_at, reduction, secs)};
}

Outcome mnar_direction() {
  std::size_t negative = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    Matrix d(2000, 1);
    for (double& x : d.values()) x = rng.uniform();
    const miss::MnarParams p{{rng.uniform(0.05, 1.0)}};
    const data::Mask mask = miss::gen_mnar(d, miss::uniform_rates(1, 0.3), p, seed);
    std::vector<double> value(2000), missing(2000);
    for (std::size_t i = 0; i < 2000; ++i) {
      value[i] = d(i, 0);
      missing[i] = mask.observed(i, 0) ? 0.0 : 1.0;
    }
    negative += corr::pearson(value, missing) < 0.0;
  }
  return {negative >= 95, fmt::format("negative in {}/100 trials", negative)};
}

Outcome loss_isolation() {
  std::size_t edges = 0, violations = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto o = testutil::check_loss_isolation(seed, 1000);
    edges += o.edges_checked;
    violations += o.violations;
  }
  return {edges > 0 && violations == 0,
          fmt::format("{} held-out edges perturbed, {} changed prediction or loss", edges, violations)};
}

// ---------------------------------------------------------------- 8 to 11

data::Dataset benchmark(std::uint64_t seed) {
  synth::Options opt;
  opt.rows = 500;
  opt.features = 8;
  opt.seed = seed;
  return synth::to_dataset(synth::generate(opt));
}

data::Dataset with_mcar(const data::Dataset& full, std::uint64_t seed, double rate = 0.3) {
  data::Dataset ds = full;
  ds.apply_mask(miss::generate(ds.raw, miss::Mechanism::mcar, miss::uniform_rates(ds.cols(), rate),
                               seed)
                    .mask);
  return ds;
}

train::TrainConfig desk(std::uint64_t seed) {
  train::TrainConfig c = train::TrainConfig::desk();
  c.seed = seed;
  c.log_interval = 0;
  return c;
}

std::vector<std::size_t> categories_of(const data::Dataset& ds) {
  std::vector<std::size_t> out;
  for (const auto& c : ds.features) out.push_back(c.category_count());
  return out;
}

// MAE on the cells hidden in `masked`, scaled with `stats`.
double hidden_mae(const Matrix& predicted_original, const data::Dataset& full,
                  const data::Dataset& masked, const data::ScalerStats& stats) {
  return eval::mae_missing(eval::scale_matrix(stats, predicted_original),
                           eval::scale_matrix(stats, full.raw), masked.mask, categories_of(full));
}

struct SeedRun {
  double bcgnn = 0, mean = 0, knn = 0, seconds = 0;
  double ablation_mae = 0, r_full = 0, r_ablation = 0;
  double trained_mae = 0, new_mae = 0;
  double label_mae = 0, label_baseline = 0;
};

constexpr std::uint64_t kSeeds = 5;
std::vector<SeedRun> seed_runs;

void run_seed(std::uint64_t seed) {
  SeedRun r;
  const data::Dataset full = benchmark(seed);
  const data::Dataset masked = with_mcar(full, seed + 100);
  const model::Hyper hyper;

  auto start = Clock::now();
  const auto fitted = train::fit(masked, desk(seed), hyper);
  const auto imp = train::impute(fitted.checkpoint, masked);
  r.seconds = seconds_since(start);
  const auto& stats = fitted.checkpoint.scaler;
  r.bcgnn = hidden_mae(imp.original, full, masked, stats);
  r.mean = hidden_mae(eval::mean_impute(masked), full, masked, stats);
  r.knn = hidden_mae(eval::knn_impute(masked, 5), full, masked, stats);
  r.r_full = eval::embedding_space_size(imp.feature_embeddings);

  train::TrainConfig ablated = desk(seed);
  ablated.ablate_interdependence = true;
  const auto abl = train::fit(masked, ablated, hyper);
  const auto abl_imp = train::impute(abl.checkpoint, masked);
  r.ablation_mae = hidden_mae(abl_imp.original, full, masked, abl.checkpoint.scaler);
  r.r_ablation = eval::embedding_space_size(abl_imp.feature_embeddings);

  std::vector<std::size_t> rows(full.rows());
  std::iota(rows.begin(), rows.end(), 0);
  Rng shuffle(derive_seed(seed, 7));
  for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[shuffle.index(i)]);
  const std::vector<std::size_t> first(rows.begin(), rows.begin() + 250), second(rows.begin() + 250, rows.end());
  const data::Dataset train_full = full.select_rows(first), new_full = full.select_rows(second);
  const data::Dataset train_masked = with_mcar(train_full, seed + 200);
  const data::Dataset new_masked = with_mcar(new_full, seed + 300);
  const auto half = train::fit(train_masked, desk(seed), hyper);
  r.trained_mae = hidden_mae(train::impute(half.checkpoint, train_masked).original, train_full,
                             train_masked, half.checkpoint.scaler);
  r.new_mae = hidden_mae(train::impute_new(half.checkpoint, new_masked).original, new_full,
                         new_masked, half.checkpoint.scaler);

  const auto split = data::split_labels(masked.label_mask, seed);
  train::TrainConfig labelled = desk(seed);
  labelled.label_task = true;
  const auto lab = train::fit(masked, labelled, hyper, &split);
  const auto lab_imp = train::impute(lab.checkpoint, masked);
  double train_sum = 0.0;
  std::size_t train_count = 0;
  for (std::size_t i = 0; i < masked.rows(); ++i)
    if (masked.label_mask[i] && split[i]) {
      train_sum += masked.labels[i];
      ++train_count;
    }
  const double train_mean = train_sum / static_cast<double>(train_count);
  std::size_t test_count = 0;
  for (std::size_t i = 0; i < masked.rows(); ++i)
    if (masked.label_mask[i] && !split[i]) {
      r.label_mae += std::abs(lab_imp.labels[i] - full.labels[i]);
      r.label_baseline += std::abs(train_mean - full.labels[i]);
      ++test_count;
    }
  r.label_mae /= static_cast<double>(test_count);
  r.label_baseline /= static_cast<double>(test_count);

  std::printf(
      "  seed %llu: mae %.4f mean %.4f knn %.4f | ablation mae %.4f R_F %.3f vs %.3f | "
      "inductive %.4f vs %.4f | label %.4f vs %.4f | %.1f s per training\n",
      static_cast<unsigned long long>(seed), r.bcgnn, r.mean, r.knn, r.ablation_mae, r.r_full,
      r.r_ablation, r.new_mae, r.trained_mae, r.label_mae, r.label_baseline, r.seconds);
  std::fflush(stdout);
  seed_runs.push_back(r);
}

void ensure_seed_runs() {
  if (!seed_runs.empty()) return;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) run_seed(seed);
}

std::string per_seed(const std::function<std::string(const SeedRun&)>& f) {
  std::string s;
  for (const auto& r : seed_runs) s += (s.empty() ? "" : ", ") + f(r);
  return s;
}

Outcome imputation_win() {
  ensure_seed_runs();
  std::size_t wins = 0;
  double slowest = 0.0;
  for (const auto& r : seed_runs) {
    wins += r.bcgnn <= 0.8 * r.mean && r.bcgnn <= 0.95 * r.knn;
    slowest = std::max(slowest, r.seconds);
  }
  return {wins >= 4 && slowest < 300.0,
          fmt::format("{}/5 seeds; mae/mean, mae/knn: {}; slowest seed {:.0f} s", wins,
                      per_seed([](const SeedRun& r) {
                        return fmt::format("{:.3f}/{:.3f}", r.bcgnn / r.mean, r.bcgnn / r.knn);
                      }),
                      slowest)};
}

Outcome ablation_direction() {
  ensure_seed_runs();
  std::size_t r_wins = 0, mae_wins = 0;
  double r_mean_full = 0.0, r_mean_abl = 0.0;
  for (const auto& r : seed_runs) {
    r_wins += r.r_full > r.r_ablation;
    mae_wins += r.bcgnn <= r.ablation_mae;
    r_mean_full += r.r_full / kSeeds;
    r_mean_abl += r.r_ablation / kSeeds;
  }
  return {r_wins >= 4 && mae_wins >= 3,
          fmt::format("R(V_F) larger in {}/5 (mean {:.3f} vs {:.3f}), MAE no worse in {}/5", r_wins,
                      r_mean_full, r_mean_abl, mae_wins)};
}

Outcome inductive() {
  ensure_seed_runs();
  std::size_t ok = 0;
  for (const auto& r : seed_runs) ok += r.new_mae <= 1.25 * r.trained_mae;
  return {ok >= 4, fmt::format("{}/5 seeds; new/trained: {}", ok, per_seed([](const SeedRun& r) {
                                 return fmt::format("{:.3f}", r.new_mae / r.trained_mae);
                               }))};
}

Outcome label_prediction() {
  ensure_seed_runs();
  std::size_t ok = 0;
  for (const auto& r : seed_runs) ok += r.label_mae < r.label_baseline;
  return {ok >= 4, fmt::format("{}/5 seeds; model/mean-predictor: {}", ok,
                               per_seed([](const SeedRun& r) {
                                 return fmt::format("{:.3f}", r.label_mae / r.label_baseline);
                               }))};
}

// ---------------------------------------------------------------- 12 to 14

Outcome embedding_size_numerics() {
  const double zero = eval::embedding_space_size(Matrix(4, 6));
  double worst = 0.0;
  for (std::size_t d : {1u, 2u, 8u, 64u}) {
    Matrix v(1, d);
    v(0, d - 1) = 1.0;
    worst = std::max(worst, std::abs(eval::embedding_space_size(v) -
                                     0.5 * std::log2(1.0 + 1.0 / static_cast<double>(d))));
  }
  Rng rng(12);
  std::size_t increasing = 0;
  for (int t = 0; t < 100; ++t) {
    const Matrix v = testutil::random_matrix(1 + rng.index(10), 1 + rng.index(16), rng);
    increasing += eval::embedding_space_size(v * 2.0) > eval::embedding_space_size(v);
  }
  return {zero == 0.0 && worst <= 1e-12 && increasing == 100,
          fmt::format("R(0) = {}, single-row deviation {:.1e}, increased under scaling {}/100", zero,
                      worst, increasing)};
}

Outcome determinism_and_roundtrip() {
  const data::Dataset ds = with_mcar(benchmark(13), 14);
  train::TrainConfig c = desk(13);
  c.epochs = 60;
  const auto a = train::fit(ds, c, model::Hyper{});
  const auto b = train::fit(ds, c, model::Hyper{});
  bool same_logs = a.history.size() == b.history.size();
  for (std::size_t e = 0; same_logs && e < a.history.size(); ++e)
    same_logs = a.history[e].imputation_loss == b.history[e].imputation_loss &&
                a.history[e].label_loss == b.history[e].label_loss;
  const bool same_checkpoint = train::serialize(a.checkpoint) == train::serialize(b.checkpoint);
  const auto reloaded = train::deserialize(train::serialize(a.checkpoint));
  const auto before = train::impute(a.checkpoint, ds);
  const auto after = train::impute(reloaded, ds);
  const bool same_forward = before.scaled == after.scaled &&
                            before.feature_embeddings == after.feature_embeddings &&
                            before.observation_embeddings == after.observation_embeddings &&
                            before.labels == after.labels;
  return {same_logs && same_checkpoint && same_forward,
          fmt::format("loss logs {}, checkpoints {}, forward after reload {}",
                      same_logs ? "identical" : "differ", same_checkpoint ? "identical" : "differ",
                      same_forward ? "bitwise equal" : "differs")};
}

Outcome variants() {
  const data::Dataset ds = with_mcar(benchmark(14), 15);
  std::size_t finite = 0, runs = 0;
  std::string bad;
  for (auto agg : {model::Aggregation::mean, model::Aggregation::sum, model::Aggregation::max})
    for (auto est : {corr::Estimator::spearman, corr::Estimator::pearson, corr::Estimator::kendall}) {
      train::TrainConfig c = desk(14);
      c.epochs = 40;
      c.estimator = est;
      model::Hyper h;
      h.aggregation = agg;
      ++runs;
      try {
        const auto r = train::fit(ds, c, h);
        const bool ok = std::all_of(r.history.begin(), r.history.end(), [](const auto& e) {
          return std::isfinite(e.imputation_loss);
        }) && train::impute(r.checkpoint, ds).scaled.all_finite();
        finite += ok;
        if (!ok) bad += " " + model::to_string(agg) + "/" + corr::to_string(est);
      } catch (const std::exception& e) {
        bad += " " + model::to_string(agg) + "/" + corr::to_string(est) + "(" + e.what() + ")";
      }
    }
  // Elementwise max example and its order invariance.
  const auto max_example =
      model::aggregate({{1.0, 5.0, -2.0}, {3.0, 2.0, -1.0}}, model::Aggregation::max, 3);
  Rng rng(16);
  bool max_invariant = true;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::vector<double>> msgs(2 + rng.index(6), std::vector<double>(4));
    for (auto& v : msgs)
      for (double& x : v) x = rng.uniform(-1, 1);
    const auto forward = model::aggregate(msgs, model::Aggregation::max, 4);
    std::reverse(msgs.begin(), msgs.end());
    max_invariant &= model::aggregate(msgs, model::Aggregation::max, 4) == forward;
  }
  const bool max_ok = max_example == std::vector<double>{3.0, 5.0, -1.0} && max_invariant;
  return {finite == runs && max_ok,
          fmt::format("{}/{} variant runs finite{}; max example and order invariance {}", finite,
                      runs, bad.empty() ? "" : " (failed:" + bad + ")", max_ok ? "hold" : "fail")};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"attention normalization", attention_normalization},
      {"spearman oracle", spearman_oracle},
      {"sign threshold", sign_threshold},
      {"missingness rate fidelity", missingness_rates},
      {"mnar directionality", mnar_direction},
      {"loss isolation", loss_isolation},
      {"desk-scale imputation win", imputation_win},
      {"interdependence ablation direction", ablation_direction},
      {"inductive generalization", inductive},
      {"label prediction", label_prediction},
      {"embedding-space size numerics", embedding_size_numerics},
      {"determinism and checkpoint round trip", determinism_and_roundtrip},
      {"aggregation and correlation variants", variants},
  };

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int number = static_cast<int>(k + 1);
    if (!only.empty() && !only.count(number)) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", number,
                criteria[k].first.c_str(), o.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
