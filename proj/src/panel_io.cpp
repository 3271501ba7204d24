#include "icdn/csv.hpp"
#include "icdn/error.hpp"
#include "icdn/panel.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <regex>
#include <set>
#include <tuple>

namespace icdn::panel {

namespace {

const std::vector<std::string> kRawColumns = {
    "store_code", "upc_code",   "week_id",      "units_sold",    "total_price",
    "units_per_deal", "pack_size_text", "promo_b", "promo_s",    "promo_c",
    "exclude_flag", "brand_family", "style_segment", "category_code"};

std::string b(bool v) { return v ? "1" : "0"; }
std::string d(double v) { return csv::format_double(v); }

}  // namespace

std::vector<RawRow> read_panel(std::istream& in) {
    const auto table = csv::Table::read_stream(in);
    std::vector<std::size_t> col;
    for (const auto& name : kRawColumns) col.push_back(table.column(name));

    std::vector<RawRow> rows;
    rows.reserve(table.records().size());
    std::set<std::tuple<std::string, int, std::string>> seen;
    for (const auto& rec : table.records()) {
        const auto& f = rec.fields;
        const auto line = rec.line;
        RawRow r;
        r.store_code = f[col[0]];
        r.upc_code = f[col[1]];
        if (r.store_code.empty() || r.upc_code.empty()) throw ParseError(line, "empty store_code or upc_code");
        r.week_id = static_cast<int>(csv::parse_int(f[col[2]], line, "week_id"));
        r.units_sold = csv::parse_double(f[col[3]], line, "units_sold");
        if (!(r.units_sold >= 0.0) || !std::isfinite(r.units_sold))
            throw ParseError(line, "units_sold must be a finite count >= 0, got '" + f[col[3]] + "'");
        r.total_price = csv::parse_double(f[col[4]], line, "total_price");
        if (!(r.total_price >= 0.0) || !std::isfinite(r.total_price))
            throw ParseError(line, "total_price must be finite and >= 0, got '" + f[col[4]] + "'");
        const auto upd = csv::parse_int(f[col[5]], line, "units_per_deal");
        if (upd < 1) throw ParseError(line, "units_per_deal must be >= 1, got '" + f[col[5]] + "'");
        r.units_per_deal = static_cast<int>(upd);
        r.pack_size_text = f[col[6]];
        r.promo_b = csv::parse_bool(f[col[7]], line, "promo_b");
        r.promo_s = csv::parse_bool(f[col[8]], line, "promo_s");
        r.promo_c = csv::parse_bool(f[col[9]], line, "promo_c");
        r.exclude_flag = csv::parse_bool(f[col[10]], line, "exclude_flag");
        r.brand_family = f[col[11]];
        r.style_segment = f[col[12]];
        r.category_code = f[col[13]];
        if (!seen.emplace(r.store_code, r.week_id, r.upc_code).second)
            throw DuplicateKeyError("store=" + r.store_code + " week=" + std::to_string(r.week_id) +
                                    " upc=" + r.upc_code);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<RawRow> load_panel(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open panel '" + path + "'");
    return read_panel(in);
}

void write_raw_panel(std::ostream& out, const std::vector<RawRow>& rows) {
    csv::Writer w(out);
    w.row(kRawColumns);
    for (const auto& r : rows) {
        w.row({r.store_code, r.upc_code, std::to_string(r.week_id), d(r.units_sold), d(r.total_price),
               std::to_string(r.units_per_deal), r.pack_size_text, b(r.promo_b), b(r.promo_s), b(r.promo_c),
               b(r.exclude_flag), r.brand_family, r.style_segment, r.category_code});
    }
}

double parse_pack_size(const std::string& text) {
    static const std::regex re(R"(^\s*(?:(\d+(?:\.\d+)?)\s*/\s*)?(\d+(?:\.\d+)?|\.\d+)\s*(OZ|ML|L|LTR|GAL)\.?\s*$)",
                               std::regex::icase);
    std::smatch m;
    if (!std::regex_match(text, m, re)) throw UnitParseError(text);
    const double count = m[1].matched ? std::stod(m[1].str()) : 1.0;
    const double volume = std::stod(m[2].str());
    std::string unit = m[3].str();
    for (auto& c : unit) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    double factor = 1.0;
    if (unit == "OZ") factor = kLitersPerOunce;
    else if (unit == "ML") factor = 1e-3;
    else if (unit == "GAL") factor = kLitersPerGallon;
    const double liters = count * volume * factor;
    if (!(liters > 0.0)) throw UnitParseError(text);
    return liters;
}

// --- feature panel I/O --------------------------------------------------------

namespace {

struct Column {
    const char* name;
    std::string (*put)(const FeatureRow&);
    void (*get)(FeatureRow&, const std::string&, std::size_t line);
};

#define ICDN_STR_COL(field, path)                                                             \
    Column { #field, [](const FeatureRow& r) { return std::string(r.path); },                  \
             [](FeatureRow& r, const std::string& s, std::size_t) { r.path = s; } }
#define ICDN_NUM_COL(field, path)                                                              \
    Column { #field, [](const FeatureRow& r) { return csv::format_double(r.path); },           \
             [](FeatureRow& r, const std::string& s, std::size_t line) {                       \
                 r.path = s.empty() ? std::nan("") : csv::parse_double(s, line, #field); } }
#define ICDN_INT_COL(field, path)                                                              \
    Column { #field, [](const FeatureRow& r) { return std::to_string(r.path); },               \
             [](FeatureRow& r, const std::string& s, std::size_t line) {                       \
                 r.path = static_cast<int>(csv::parse_int(s, line, #field)); } }
#define ICDN_BOOL_COL(field, path)                                                             \
    Column { #field, [](const FeatureRow& r) { return std::string(r.path ? "1" : "0"); },      \
             [](FeatureRow& r, const std::string& s, std::size_t line) {                       \
                 r.path = csv::parse_bool(s, line, #field); } }

const std::vector<Column>& feature_columns() {
    static const std::vector<Column> cols = {
        ICDN_STR_COL(store_code, row.raw.store_code),
        ICDN_STR_COL(upc_code, row.raw.upc_code),
        ICDN_INT_COL(week_id, row.raw.week_id),
        ICDN_STR_COL(brand_family, row.raw.brand_family),
        ICDN_STR_COL(style_segment, row.raw.style_segment),
        ICDN_STR_COL(category_code, row.raw.category_code),
        ICDN_STR_COL(pack_size_text, row.raw.pack_size_text),
        ICDN_NUM_COL(units_sold, row.raw.units_sold),
        ICDN_NUM_COL(total_price, row.raw.total_price),
        ICDN_INT_COL(units_per_deal, row.raw.units_per_deal),
        ICDN_BOOL_COL(promo_b, row.raw.promo_b),
        ICDN_BOOL_COL(promo_s, row.raw.promo_s),
        ICDN_BOOL_COL(promo_c, row.raw.promo_c),
        ICDN_NUM_COL(liters_per_upc, row.liters),
        ICDN_NUM_COL(liters_sold, row.liters_sold),
        ICDN_NUM_COL(price_per_liter, row.price_per_liter),
        ICDN_NUM_COL(log_price_per_liter, row.log_price),
        ICDN_NUM_COL(log_liters_sold, row.log_demand),
        ICDN_BOOL_COL(on_promo, row.on_promo),
        ICDN_INT_COL(week_rank, week_rank),
        ICDN_NUM_COL(sin_52, sin_52),
        ICDN_NUM_COL(cos_52, cos_52),
        ICDN_NUM_COL(sin_26, sin_26),
        ICDN_NUM_COL(cos_26, cos_26),
        ICDN_NUM_COL(sin_13, sin_13),
        ICDN_NUM_COL(cos_13, cos_13),
        ICDN_NUM_COL(weeks_since_first_seen_upc, weeks_since_first_seen_upc),
        ICDN_NUM_COL(weeks_since_first_seen_store_upc, weeks_since_first_seen_store_upc),
        ICDN_NUM_COL(lag_1_log_liters_sold, lag_1),
        ICDN_NUM_COL(lag_2_log_liters_sold, lag_2),
        ICDN_NUM_COL(lag_4_log_liters_sold, lag_4),
        ICDN_NUM_COL(rolling_mean_4_log_liters_sold, rolling_mean_4),
        ICDN_NUM_COL(rolling_mean_13_log_liters_sold, rolling_mean_13),
        ICDN_BOOL_COL(miss_lag_1, miss_lag_1),
        ICDN_BOOL_COL(miss_lag_2, miss_lag_2),
        ICDN_BOOL_COL(miss_lag_4, miss_lag_4),
        ICDN_BOOL_COL(miss_roll_4, miss_roll_4),
        ICDN_BOOL_COL(miss_roll_13, miss_roll_13),
        ICDN_NUM_COL(promo_intensity_store_week, promo_intensity_store_week),
        ICDN_NUM_COL(n_neighbors_sw_cat, n_neighbors_sw_cat),
        ICDN_NUM_COL(neighbor_promo_share_sw_cat, neighbor_promo_share_sw_cat),
        ICDN_NUM_COL(n_same_brand_neighbors_sw_cat, n_same_brand_neighbors_sw_cat),
        ICDN_NUM_COL(same_brand_neighbor_promo_share_sw_cat, same_brand_neighbor_promo_share_sw_cat),
        ICDN_NUM_COL(lag1_neighbor_mean_log_liters_sold, lag1_neighbor_mean),
        ICDN_NUM_COL(lag1_same_brand_neighbor_mean_log_liters_sold, lag1_same_brand_neighbor_mean),
        ICDN_NUM_COL(roll4_neighbor_mean_log_liters_sold, roll4_neighbor_mean),
        ICDN_BOOL_COL(miss_lag1_neighbor_mean_log_liters_sold, miss_lag1_neighbor_mean),
        ICDN_BOOL_COL(miss_lag1_same_brand_neighbor_mean_log_liters_sold, miss_lag1_same_brand_neighbor_mean),
        ICDN_BOOL_COL(miss_roll4_neighbor_mean_log_liters_sold, miss_roll4_neighbor_mean),
        ICDN_NUM_COL(store_category_upc_count_static, store_category_upc_count_static),
        ICDN_NUM_COL(same_brand_upc_count_store_cat_static, same_brand_upc_count_store_cat_static),
        ICDN_NUM_COL(n_new_neighbors_13w, n_new_neighbors_13w),
        ICDN_NUM_COL(share_new_neighbors_13w, share_new_neighbors_13w),
        ICDN_BOOL_COL(is_synthetic_row, is_synthetic_row),
    };
    return cols;
}

#undef ICDN_STR_COL
#undef ICDN_NUM_COL
#undef ICDN_INT_COL
#undef ICDN_BOOL_COL

}  // namespace

void write_feature_panel(std::ostream& out, const std::vector<FeatureRow>& rows) {
    csv::Writer w(out);
    const auto& cols = feature_columns();
    std::vector<std::string> fields;
    for (const auto& c : cols) fields.emplace_back(c.name);
    w.row(fields);
    for (const auto& r : rows) {
        fields.clear();
        for (const auto& c : cols) fields.push_back(c.put(r));
        w.row(fields);
    }
}

std::vector<FeatureRow> read_feature_panel(std::istream& in) {
    const auto table = csv::Table::read_stream(in);
    const auto& cols = feature_columns();
    std::vector<std::size_t> idx;
    for (const auto& c : cols) idx.push_back(table.column(c.name));
    std::vector<FeatureRow> rows;
    rows.reserve(table.records().size());
    for (const auto& rec : table.records()) {
        FeatureRow r;
        for (std::size_t k = 0; k < cols.size(); ++k) cols[k].get(r, rec.fields[idx[k]], rec.line);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<FeatureRow> load_feature_panel(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open feature panel '" + path + "'");
    return read_feature_panel(in);
}

void write_panel_rows(std::ostream& out, const std::vector<PanelRow>& rows) {
    csv::Writer w(out);
    w.row({"store_code", "upc_code", "week_id", "brand_family", "style_segment", "category_code",
           "pack_size_text", "units_sold", "total_price", "units_per_deal", "promo_b", "promo_s", "promo_c",
           "liters_per_upc", "liters_sold", "price_per_liter", "log_price_per_liter", "log_liters_sold",
           "on_promo"});
    for (const auto& r : rows) {
        const auto& raw = r.raw;
        w.row({raw.store_code, raw.upc_code, std::to_string(raw.week_id), raw.brand_family, raw.style_segment,
               raw.category_code, raw.pack_size_text, d(raw.units_sold), d(raw.total_price),
               std::to_string(raw.units_per_deal), b(raw.promo_b), b(raw.promo_s), b(raw.promo_c), d(r.liters),
               d(r.liters_sold), d(r.price_per_liter), d(r.log_price), d(r.log_demand), b(r.on_promo)});
    }
}

const std::vector<TokenFeature>& token_features() {
    using R = const FeatureRow&;
    static const std::vector<TokenFeature> feats = {
        {"present", [](R) { return 1.0; }, false},
        {"on_promo", [](R r) { return r.row.on_promo ? 1.0 : 0.0; }, false},
        {"promo_intensity_store_week", [](R r) { return r.promo_intensity_store_week; }, true},
        {"log_liters_per_upc", [](R r) { return std::log(r.row.liters); }, true},
        {"week_rank", [](R r) { return static_cast<double>(r.week_rank); }, true},
        {"sin_52", [](R r) { return r.sin_52; }, false},
        {"cos_52", [](R r) { return r.cos_52; }, false},
        {"sin_26", [](R r) { return r.sin_26; }, false},
        {"cos_26", [](R r) { return r.cos_26; }, false},
        {"sin_13", [](R r) { return r.sin_13; }, false},
        {"cos_13", [](R r) { return r.cos_13; }, false},
        {"weeks_since_first_seen_upc", [](R r) { return r.weeks_since_first_seen_upc; }, true},
        {"weeks_since_first_seen_store_upc", [](R r) { return r.weeks_since_first_seen_store_upc; }, true},
        {"lag_1", [](R r) { return r.lag_1; }, true},
        {"lag_2", [](R r) { return r.lag_2; }, true},
        {"lag_4", [](R r) { return r.lag_4; }, true},
        {"rolling_mean_4", [](R r) { return r.rolling_mean_4; }, true},
        {"rolling_mean_13", [](R r) { return r.rolling_mean_13; }, true},
        {"miss_lag_1", [](R r) { return r.miss_lag_1 ? 1.0 : 0.0; }, false},
        {"miss_lag_2", [](R r) { return r.miss_lag_2 ? 1.0 : 0.0; }, false},
        {"miss_lag_4", [](R r) { return r.miss_lag_4 ? 1.0 : 0.0; }, false},
        {"miss_roll_4", [](R r) { return r.miss_roll_4 ? 1.0 : 0.0; }, false},
        {"miss_roll_13", [](R r) { return r.miss_roll_13 ? 1.0 : 0.0; }, false},
        {"n_neighbors_sw_cat", [](R r) { return r.n_neighbors_sw_cat; }, true},
        {"neighbor_promo_share_sw_cat", [](R r) { return r.neighbor_promo_share_sw_cat; }, true},
        {"n_same_brand_neighbors_sw_cat", [](R r) { return r.n_same_brand_neighbors_sw_cat; }, true},
        {"same_brand_neighbor_promo_share_sw_cat", [](R r) { return r.same_brand_neighbor_promo_share_sw_cat; }, true},
        {"lag1_neighbor_mean", [](R r) { return r.lag1_neighbor_mean; }, true},
        {"lag1_same_brand_neighbor_mean", [](R r) { return r.lag1_same_brand_neighbor_mean; }, true},
        {"roll4_neighbor_mean", [](R r) { return r.roll4_neighbor_mean; }, true},
        {"miss_lag1_neighbor_mean", [](R r) { return r.miss_lag1_neighbor_mean ? 1.0 : 0.0; }, false},
        {"miss_lag1_same_brand_neighbor_mean", [](R r) { return r.miss_lag1_same_brand_neighbor_mean ? 1.0 : 0.0; }, false},
        {"miss_roll4_neighbor_mean", [](R r) { return r.miss_roll4_neighbor_mean ? 1.0 : 0.0; }, false},
        {"store_category_upc_count_static", [](R r) { return r.store_category_upc_count_static; }, true},
        {"same_brand_upc_count_store_cat_static", [](R r) { return r.same_brand_upc_count_store_cat_static; }, true},
        {"n_new_neighbors_13w", [](R r) { return r.n_new_neighbors_13w; }, true},
        {"share_new_neighbors_13w", [](R r) { return r.share_new_neighbors_13w; }, true},
    };
    return feats;
}

std::optional<std::size_t> Universe::index_of(const std::string& upc) const {
    for (std::size_t i = 0; i < products.size(); ++i)
        if (products[i].upc_code == upc) return i;
    return std::nullopt;
}

Universe Universe::from_features(const std::vector<FeatureRow>& fp) {
    std::map<std::string, ProductMeta> by_upc;
    for (const auto& r : fp) {
        auto& m = by_upc[r.row.raw.upc_code];
        if (m.upc_code.empty()) {
            m.upc_code = r.row.raw.upc_code;
            m.brand_family = r.row.raw.brand_family;
            m.style_segment = r.row.raw.style_segment;
            m.category_code = r.row.raw.category_code;
            m.liters = r.row.liters;
        }
    }
    Universe u;
    for (auto& [_, m] : by_upc) u.products.push_back(std::move(m));
    return u;
}

int WideInstance::observed() const {
    int n = 0;
    for (Eigen::Index i = 0; i < mask.size(); ++i) n += mask[i] > 0.5 ? 1 : 0;
    return n;
}

}  // namespace icdn::panel
