#pragma once

// Weekly scanner panel: ingestion, unit normalization, identification filters,
// calendar completion, feature engineering and wide store-week assembly.

#include "icdn/linalg.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace icdn::panel {

inline constexpr double kLitersPerOunce = 0.0295735;
inline constexpr double kLitersPerGallon = 3.78541;

struct RawRow {
    std::string store_code;
    std::string upc_code;
    int week_id = 0;
    double units_sold = 0.0;  // counts in real data; synthetic panels may carry fractional units
    double total_price = 0.0;
    int units_per_deal = 1;
    std::string pack_size_text;
    bool promo_b = false;
    bool promo_s = false;
    bool promo_c = false;
    bool exclude_flag = false;
    std::string brand_family;
    std::string style_segment;
    std::string category_code;
};

struct PanelRow {
    RawRow raw;
    double liters = 0.0;           // liters per sellable UPC unit
    double liters_sold = 0.0;      // q_L
    double price_per_liter = 0.0;  // p_L
    double log_price = 0.0;        // u
    double log_demand = 0.0;       // y
    bool on_promo = false;
};

struct FilterConfig {
    double min_price = 0.05;
    int min_store_weeks = 150;
    int min_series_weeks = 52;
    double min_coverage = 0.75;
    int min_distinct_prices = 3;
    int min_price_changes = 5;
    double min_logprice_range = 0.15;
    double max_promo_corr = 0.80;
    double max_promo_switch_share = 0.80;
    double iqr_multiplier = 1.5;

    void validate() const;
};

enum class FilterRule {
    MinStoreWeeks,
    MinWeeks,
    Coverage,
    DistinctPrices,
    PriceChanges,
    LogPriceRange,
    PromoCorrelation,
    PromoSwitchShare,
};
inline constexpr int kFilterRuleCount = 8;
const char* to_string(FilterRule rule);

struct NormalizeReport {
    std::size_t input_rows = 0;
    std::size_t kept_rows = 0;
    std::size_t excluded = 0;    // exclude_flag set
    std::size_t zero_units = 0;
    std::size_t min_price = 0;   // total_price <= min_price
    std::size_t nonfinite = 0;
};

struct SeriesDiagnostics {
    std::string store_code;
    std::string upc_code;
    int observed_weeks = 0;
    double coverage = 0.0;
    int distinct_prices = 0;
    int price_changes = 0;
    double logprice_range = 0.0;
    double promo_corr = 0.0;
    double promo_switch_share = 0.0;
    std::optional<FilterRule> removed_by;
};

struct FilterReport {
    std::size_t input_rows = 0;
    std::size_t kept_rows = 0;
    std::size_t input_series = 0;
    std::size_t kept_series = 0;
    std::size_t stores_removed = 0;
    std::array<std::size_t, kFilterRuleCount> series_removed{};
    std::array<std::size_t, kFilterRuleCount> rows_removed{};
    std::vector<SeriesDiagnostics> series;
    bool empty_warning = false;
};

struct UpcOutliers {
    std::string upc_code;
    std::size_t rows = 0;
    std::size_t dropped = 0;
    bool skipped = false;  // fewer than 4 rows
    double lower_fence = 0.0;
    double upper_fence = 0.0;
};

struct OutlierReport {
    std::size_t input_rows = 0;
    std::size_t kept_rows = 0;
    std::vector<UpcOutliers> per_upc;
};

struct CalendarRow {
    PanelRow data;  // identity and metadata always set; economic fields NaN when synthetic
    bool synthetic = false;
};

struct CalendarPanel {
    std::vector<CalendarRow> rows;  // sorted by (store, upc, week)
    std::size_t inserted = 0;  // synthetic rows present
};

struct WeekRange {
    int first = 0;
    int last = 0;
    [[nodiscard]] bool contains(int w) const noexcept { return w >= first && w <= last; }
};

struct FeatureRow {
    PanelRow row;
    int week_rank = 0;
    double sin_52 = 0, cos_52 = 0, sin_26 = 0, cos_26 = 0, sin_13 = 0, cos_13 = 0;
    double weeks_since_first_seen_upc = 0;
    double weeks_since_first_seen_store_upc = 0;
    double lag_1 = 0, lag_2 = 0, lag_4 = 0;
    double rolling_mean_4 = 0, rolling_mean_13 = 0;
    bool miss_lag_1 = false, miss_lag_2 = false, miss_lag_4 = false;
    bool miss_roll_4 = false, miss_roll_13 = false;
    double promo_intensity_store_week = 0;
    double n_neighbors_sw_cat = 0;
    double neighbor_promo_share_sw_cat = 0;
    double n_same_brand_neighbors_sw_cat = 0;
    double same_brand_neighbor_promo_share_sw_cat = 0;
    double lag1_neighbor_mean = 0;
    double lag1_same_brand_neighbor_mean = 0;
    double roll4_neighbor_mean = 0;
    bool miss_lag1_neighbor_mean = false;
    bool miss_lag1_same_brand_neighbor_mean = false;
    bool miss_roll4_neighbor_mean = false;
    double store_category_upc_count_static = 0;
    double same_brand_upc_count_store_cat_static = 0;
    double n_new_neighbors_13w = 0;
    double share_new_neighbors_13w = 0;
    bool is_synthetic_row = false;
};

// Numeric context features that enter a product token. `standardize` marks
// features scaled with train-split mean/sd; flags pass through raw.
struct TokenFeature {
    const char* name;
    double (*get)(const FeatureRow&);
    bool standardize;
};
const std::vector<TokenFeature>& token_features();

struct ProductMeta {
    std::string upc_code;
    std::string brand_family;
    std::string style_segment;
    std::string category_code;
    double liters = 1.0;
};

// Ordered product universe; index i is product i of every wide vector.
struct Universe {
    std::vector<ProductMeta> products;

    [[nodiscard]] std::size_t size() const noexcept { return products.size(); }
    [[nodiscard]] std::optional<std::size_t> index_of(const std::string& upc) const;
    static Universe from_features(const std::vector<FeatureRow>& fp);
};

struct WideInstance {
    std::string store_code;
    int week_id = 0;
    Vector log_price;      // u, complete after imputation
    Vector log_demand;     // y, meaningful where mask = 1
    Vector mask;           // 0/1
    Matrix tokens;         // n x token_features().size(), raw values; rows with mask 0 are zero
    std::vector<double> demand_smoothed;  // optional warm-start targets (empty until set)

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(log_price.size()); }
    [[nodiscard]] int observed() const;
};

// --- operations -----------------------------------------------------------

std::vector<RawRow> load_panel(const std::string& path);
std::vector<RawRow> read_panel(std::istream& in);
void write_raw_panel(std::ostream& out, const std::vector<RawRow>& rows);

double parse_pack_size(const std::string& pack_size_text);

struct NormalizeResult {
    std::vector<PanelRow> rows;
    NormalizeReport report;
};
NormalizeResult normalize_units(const std::vector<RawRow>& rows, double min_price = 0.05);

struct FilterResult {
    std::vector<PanelRow> rows;
    FilterReport report;
};
FilterResult apply_filters(const std::vector<PanelRow>& panel, const FilterConfig& cfg);

// Per-series identification diagnostics without removing anything.
SeriesDiagnostics diagnose_series(const std::vector<const PanelRow*>& series_sorted_by_week);

struct OutlierResult {
    std::vector<PanelRow> rows;
    OutlierReport report;
};
OutlierResult remove_price_outliers(const std::vector<PanelRow>& panel, const FilterConfig& cfg);

CalendarPanel complete_calendar(const std::vector<PanelRow>& panel);
CalendarPanel complete_calendar(const CalendarPanel& skeleton);

// Computes every feature on the completed weekly grid and projects back onto
// observed rows. Static assortment counts use only weeks inside `split`.
std::vector<FeatureRow> engineer_features(const CalendarPanel& skeleton, WeekRange split);

std::vector<WideInstance> assemble_wide(const std::vector<FeatureRow>& fp, const Universe& universe);

void write_panel_rows(std::ostream& out, const std::vector<PanelRow>& rows);
void write_feature_panel(std::ostream& out, const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_feature_panel(std::istream& in);
std::vector<FeatureRow> load_feature_panel(const std::string& path);

// Trailing rolling mean of observed log demand per (store, UPC) series, window
// counted in observed rows, min periods 1. Fills WideInstance::demand_smoothed.
void attach_smoothed_targets(std::vector<WideInstance>& instances, int window);

// --- synthetic panels -------------------------------------------------------

struct SynthConfig {
    int n_products = 5;
    int n_stores = 3;
    int n_weeks = 200;
    int first_week = 1;
    std::vector<double> own;        // epsilon_i < 0
    Matrix cross;                   // c_ij, diagonal ignored
    std::vector<double> base_price; // p0 per liter
    std::vector<double> base_demand;// v0 in liters
    double walk_scale = 0.25;       // per-week sd of the log-price random walk
    double walk_bound = 0.35;       // |log p - log p0| <= bound (reflecting)
    double promo_prob = 0.12;
    double promo_discount = 0.15;
    double noise_sd = 0.0;
    double missing_prob = 0.0;      // chance a (store, week, upc) is unobserved
    int n_categories = 2;
    std::uint64_t seed = 1;

    void validate() const;
    // Missing own/cross/baselines are drawn from `seed` (own in [own_min, own_max],
    // |cross| <= cross_max).
    void fill_defaults(double own_min = -3.0, double own_max = -1.0, double cross_max = 0.5);
};

struct GroundTruth {
    std::vector<std::string> upcs;
    Matrix elasticity;  // diagonal = own, off-diagonal = cross
    std::vector<double> base_price;
    std::vector<double> base_demand;
    SynthConfig config;
};

struct SynthResult {
    std::vector<RawRow> raw;
    std::vector<PanelRow> rows;
    GroundTruth truth;
};

SynthResult generate_synthetic_panel(const SynthConfig& cfg);

}  // namespace icdn::panel
