#pragma once

// Metrics, elasticity plausibility scores, trial selection, temporal folds,
// block bootstrap, pairwise log-log OLS benchmark with HC1 errors, and
// ICDN-vs-benchmark stability diagnostics.

#include "icdn/linalg.hpp"
#include "icdn/model.hpp"
#include "icdn/panel.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace icdn::evaluation {

// --- metrics --------------------------------------------------------------

// 1 - SSE / SST over entries with mask 1. Throws EvaluationError when fewer
// than two entries are observed or the observed targets have zero variance.
double masked_r2(const Vector& yhat, const Vector& y, const Vector& mask);

struct ErrorSummary {
    double mae = 0.0;
    double rmse = 0.0;
};
ErrorSummary masked_mae_rmse(const Vector& yhat, const Vector& y, const Vector& mask);

struct ElasticityScore {
    double p_own = 0.0;
    double p_prior = 0.0;
    double s_own = 0.0;
    double s_cross = 0.0;
    double s_elast = 0.0;
};
inline constexpr double kPriorTolerance = 0.3;
ElasticityScore elasticity_score(std::span<const double> own, std::span<const double> cross, double beta_eda = -2.0);

// mean - 0.25 * sample sd (sd of a singleton is 0).
double robust_aggregate(std::span<const double> values);

struct TrialSummary {
    int id = 0;
    std::vector<double> r2;       // per (fold, seed) evaluation
    std::vector<double> s_elast;
    double r2_robust = 0.0;
    double s_elast_robust = 0.0;
    double s_select = 0.0;

    static TrialSummary from_evaluations(int id, std::vector<double> r2, std::vector<double> s_elast);
};
// argmax of s_select; ties go to the lowest id.
int select_trial(std::span<const TrialSummary> trials);

// --- resampling -------------------------------------------------------------

struct Fold {
    panel::WeekRange train;
    panel::WeekRange val;
};
struct FoldPlan {
    std::vector<Fold> folds;
};
inline constexpr int kDefaultFolds = 5;

// Splits the sorted distinct weeks into n_folds + 1 contiguous blocks (sizes
// differ by at most one, larger blocks first); fold f trains on blocks 1..f and
// validates on block f + 1.
FoldPlan make_folds(std::span<const int> weeks, int n_folds = kDefaultFolds);

inline constexpr int kDefaultBlockLength = 8;
inline constexpr int kDefaultBootstrapReps = 50;

// Each replicate is a concatenation of whole blocks drawn with replacement
// (as many draws as there are blocks), from the "bootstrap" stream of `seed`.
std::vector<std::vector<int>> block_bootstrap(std::span<const int> weeks, int block_len, int n_reps, std::uint64_t seed);

// Instances for a week multiset; repeated weeks contribute repeated instances.
std::vector<panel::WideInstance> resample_instances(std::span<const panel::WideInstance> instances,
                                                    std::span<const int> weeks);

// --- benchmark --------------------------------------------------------------

struct OlsResult {
    Vector beta;
    Matrix hc1;
    Vector residual;
};
// Least squares by column-pivoted QR with HC1 sandwich covariance. Throws
// DomainError when the design is rank deficient or has n <= k.
OlsResult ols_hc1(const Matrix& X, const Vector& y);

inline constexpr int kMinBenchmarkRows = 30;

// Regression controls for the pairwise benchmark.
const std::vector<std::string>& benchmark_controls();

struct PairwiseGroup {
    std::string store;
    std::string upc_i;
    std::string upc_j;
    // Columns: log own price, log cross price, then benchmark_controls().
    Matrix x_train, x_val;
    Vector y_train, y_val;
    std::vector<int> weeks_train, weeks_val;
};

struct BenchmarkFit {
    std::string store, upc_i, upc_j;
    double b0 = 0.0, b_own = 0.0, b_cross = 0.0;
    std::vector<std::string> control_names;  // controls retained in the design
    std::vector<double> gamma;
    Matrix hc1;
    double se_own = 0.0, se_cross = 0.0;
    double own_ci_lo = 0.0, own_ci_hi = 0.0, cross_ci_lo = 0.0, cross_ci_hi = 0.0;
    double p_own = 0.0, p_cross = 0.0;
    std::size_t n_train = 0, n_val = 0;
    double val_mae = 0.0, val_rmse = 0.0;
    std::optional<double> val_r2;
};

struct BenchmarkOutcome {
    std::string store, upc_i, upc_j;
    std::optional<BenchmarkFit> fit;
    std::string skip_reason;  // "min observations", "own price variation", ...
};

BenchmarkOutcome benchmark_fit(const PairwiseGroup& group);

// Rows where both UPCs are observed in the same store-week. Rows lacking the
// lagged neighbor mean are dropped. `pairs`, when given, restricts the ordered
// (i, j) pairs considered.
std::vector<PairwiseGroup> build_pairwise_groups(const std::vector<panel::FeatureRow>& features,
                                                 panel::WeekRange train, panel::WeekRange val,
                                                 const std::vector<std::pair<std::string, std::string>>* pairs = nullptr);

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkOutcome>& outcomes, int fold = -1,
                         bool header = true);

// --- elasticity records -----------------------------------------------------

struct ElasticityRecord {
    std::string source;  // "icdn" or "benchmark"
    std::string store;
    std::string upc_i;
    std::string upc_j;   // equal to upc_i for own-price records
    int week = -1;       // -1 when not tied to a single week
    int fold = -1;
    std::int64_t seed = -1;
    int replicate = -1;  // -1 for point estimates
    double estimate = 0.0;
    std::optional<double> ci_lo, ci_hi;
};

// Own records for observed products; cross records on frozen edges with both
// products observed. Requires a frozen graph.
std::vector<ElasticityRecord> extract_elasticities(const model::ModelState& state,
                                                   std::span<const panel::WideInstance> split, int fold = -1,
                                                   std::int64_t seed = -1, int replicate = -1);

std::vector<ElasticityRecord> benchmark_records(const std::vector<BenchmarkOutcome>& outcomes, int fold,
                                                int replicate = -1);

void write_records_csv(std::ostream& out, const std::vector<ElasticityRecord>& records);
std::vector<ElasticityRecord> read_records_csv(std::istream& in);

// --- diagnostics ------------------------------------------------------------

struct KeyStats {
    std::size_t folds = 0;
    std::size_t replicates = 0;
    double point = 0.0;  // median of per-fold estimates (or of all point records)
    std::optional<double> ci_lo, ci_hi, ci_width, boot_sd;
    std::optional<double> fold_sd;            // needs >= 3 folds
    std::optional<double> coverage;           // share of fold estimates inside the bootstrap CI
    std::optional<double> dispersion_ratio;   // boot_sd / fold_sd
};

struct MatchedKey {
    std::string store, upc_i, upc_j;
    KeyStats icdn, benchmark;
    bool same_sign = false;
    std::optional<double> icdn_narrower_ci;   // 1, 0.5 on ties, 0
    std::optional<double> icdn_lower_sd;
    std::optional<double> icdn_more_stable;
};

struct SignShares {
    double negative = 0.0;
    double zero = 0.0;
    double positive = 0.0;
};

struct SourceSummary {
    SignShares signs;
    std::optional<double> median_ci_width;
    std::optional<double> median_boot_sd;
    std::optional<double> median_fold_sd;
    std::optional<double> mean_coverage;
    std::optional<double> median_dispersion_ratio;
};

struct PairedSample {
    std::string metric;  // "r2", "mae", "rmse"
    std::string key;     // fold or (store, upc, fold) label
    double icdn = 0.0;
    double benchmark = 0.0;
};

struct PairedSummary {
    std::string metric;
    std::size_t n = 0;
    double mean_delta = 0.0;  // icdn - benchmark
    double sd_delta = 0.0;
    std::optional<double> t_stat;
    double signed_rank_plus = 0.0;   // Wilcoxon W+
    double signed_rank_minus = 0.0;  // W-
    double share_positive = 0.0;
};
PairedSummary paired_summary(const std::string& metric, std::span<const double> icdn, std::span<const double> bench);

struct DiagnosticsReport {
    std::vector<MatchedKey> keys;
    std::size_t matched = 0;
    double same_sign_rate = 0.0;
    std::optional<double> narrower_ci_rate, lower_sd_rate, more_stable_rate;
    SourceSummary icdn, benchmark;
    std::vector<PairedSummary> paired;
    bool empty_warning = false;
};

struct BootstrapCi {
    double lo = 0.0;
    double hi = 0.0;
};
BootstrapCi percentile_ci(std::vector<double> estimates, double level = 0.95);

KeyStats summarize_key(const std::map<int, std::vector<double>>& fold_points,
                       const std::map<int, std::vector<double>>& replicate_points);

DiagnosticsReport stability_diagnostics(const std::vector<ElasticityRecord>& icdn,
                                        const std::vector<ElasticityRecord>& benchmark,
                                        const std::vector<PairedSample>& paired = {});

std::string to_json(const DiagnosticsReport& report);

}  // namespace icdn::evaluation
