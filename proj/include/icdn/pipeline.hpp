#pragma once

// End-to-end flows shared by the command-line tool and the integration tests:
// config parsing, preprocessing, wide assembly, fold evaluation, benchmark
// runs and verification of a trained surface.

#include "icdn/evaluation.hpp"
#include "icdn/kv_config.hpp"
#include "icdn/model.hpp"
#include "icdn/panel.hpp"
#include "icdn/training.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace icdn::pipeline {

struct RunConfig {
    model::ModelConfig model;
    training::TrainConfig train;
    training::LossConfig loss;
    panel::FilterConfig filter;
};

const std::vector<std::string>& run_config_keys();
// Unknown keys raise ConfigError. The seed is not read from the file.
RunConfig load_run_config(const KeyValueConfig& kv);

const std::vector<std::string>& synth_config_keys();
// Missing elasticities and baselines are drawn from the config seed
// (own_min, own_max, cross_max control the draw).
panel::SynthConfig load_synth_config(const KeyValueConfig& kv, std::uint64_t seed);
std::string ground_truth_json(const panel::GroundTruth& truth);

struct PreprocessOutput {
    std::vector<panel::PanelRow> cleaned;
    std::vector<panel::FeatureRow> features;
    panel::NormalizeReport normalize;
    panel::FilterReport filter;
    panel::OutlierReport outliers;
    std::size_t calendar_inserted = 0;
    panel::WeekRange stats_range;
};
// normalize -> filters -> outliers -> calendar -> features. Static assortment
// counts use weeks up to `stats_last_week` (all weeks when absent).
PreprocessOutput preprocess(const std::vector<panel::RawRow>& raw, const panel::FilterConfig& cfg,
                            std::optional<int> stats_last_week = std::nullopt);
std::string preprocess_report_json(const PreprocessOutput& out);

struct WideData {
    panel::Universe universe;
    std::vector<panel::WideInstance> instances;
};
WideData build_wide(const std::vector<panel::FeatureRow>& features);
std::vector<int> distinct_weeks(const std::vector<panel::WideInstance>& instances);
std::vector<panel::WideInstance> select_weeks(const std::vector<panel::WideInstance>& instances, panel::WeekRange range);

// --- evaluation -------------------------------------------------------------

struct SeriesMetric {
    std::string source;
    std::string store;
    std::string upc;
    int fold = -1;
    std::int64_t seed = -1;
    std::optional<double> r2;
    double mae = 0.0;
    double rmse = 0.0;
};
void write_metrics_csv(std::ostream& out, const std::vector<SeriesMetric>& rows);
std::vector<SeriesMetric> read_metrics_csv(std::istream& in);

struct FoldSeedResult {
    int fold = 0;
    std::uint64_t seed = 0;
    double r2 = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    evaluation::ElasticityScore score;
};

struct EvaluateOptions {
    int folds = evaluation::kDefaultFolds;
    std::vector<std::uint64_t> seeds = {0};
    int bootstrap_reps = evaluation::kDefaultBootstrapReps;
    int block_len = evaluation::kDefaultBlockLength;
    std::uint64_t bootstrap_seed = 0;
    double beta_eda = -2.0;
};

struct EvaluateOutput {
    std::vector<FoldSeedResult> runs;
    evaluation::TrialSummary summary;
    std::vector<evaluation::ElasticityRecord> records;
    std::vector<SeriesMetric> metrics;
};

// Expanding folds x seeds; block bootstrap replicates resample the last fold's
// training weeks and are scored on its validation weeks.
EvaluateOutput evaluate_icdn(const WideData& data, const RunConfig& cfg, const EvaluateOptions& opts);
std::string evaluation_json(const EvaluateOutput& out);

struct BenchmarkOptions {
    int folds = evaluation::kDefaultFolds;
    int bootstrap_reps = evaluation::kDefaultBootstrapReps;
    int block_len = evaluation::kDefaultBlockLength;
    std::uint64_t seed = 0;
    const std::vector<std::pair<std::string, std::string>>* pairs = nullptr;
};

struct BenchmarkRun {
    std::vector<std::pair<int, std::vector<evaluation::BenchmarkOutcome>>> folds;
    std::vector<evaluation::ElasticityRecord> records;
    std::vector<SeriesMetric> metrics;
};
BenchmarkRun run_benchmark(const std::vector<panel::FeatureRow>& features, const BenchmarkOptions& opts);

// Paired samples from two metric tables: matched (store, upc, fold) triplets
// and per-fold means.
std::vector<evaluation::PairedSample> pair_metrics(const std::vector<SeriesMetric>& icdn,
                                                   const std::vector<SeriesMetric>& benchmark);

// Frozen-graph edges as (upc_i, upc_j).
std::vector<std::pair<std::string, std::string>> frozen_pairs(const model::ModelState& state);

// --- verification -------------------------------------------------------------

struct VerifyReport {
    int points = 0;
    double max_closure_residual = 0.0;
    double max_own_fd_delta = 0.0;     // relative, 1e-8 absolute floor
    double max_cross_fd_delta = 0.0;
    double max_curvature_fd_delta = 0.0;
    double max_path_gap = 0.0;
    std::string context;               // "data" or "neutral"
};
// Random interior points inside each product's knot span. Contexts come from
// `data` when given, otherwise a neutral context (no observed tokens, unknown
// store) under the frozen graph.
VerifyReport verify_surface(const model::ModelState& state, const std::vector<panel::WideInstance>* data, int points,
                            std::uint64_t seed);
std::string verify_json(const VerifyReport& r);

}  // namespace icdn::pipeline
