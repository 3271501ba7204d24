#include "icdn/panel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <tuple>

namespace icdn::panel {

namespace {

struct Rolling {
    double value = 0.0;
    bool missing = true;
};

// Mean of observed values at positions [t - window, t - 1].
Rolling trailing_mean(const std::vector<double>& y, std::size_t t, std::size_t window) {
    double sum = 0.0;
    int count = 0;
    const std::size_t start = t >= window ? t - window : 0;
    for (std::size_t k = start; k < t; ++k) {
        if (!std::isnan(y[k])) {
            sum += y[k];
            ++count;
        }
    }
    if (count == 0) return {};
    return {sum / count, false};
}

}  // namespace

std::vector<FeatureRow> engineer_features(const CalendarPanel& skeleton, WeekRange split) {
    const auto& rows = skeleton.rows;
    std::vector<FeatureRow> grid(rows.size());
    if (rows.empty()) return {};

    int min_week = rows.front().data.raw.week_id;
    for (const auto& r : rows) min_week = std::min(min_week, r.data.raw.week_id);

    std::map<std::string, int> first_seen_upc;
    std::map<std::pair<std::string, std::string>, int> first_seen_store_upc;
    for (const auto& r : rows) {
        if (r.synthetic) continue;
        const auto& raw = r.data.raw;
        auto it = first_seen_upc.try_emplace(raw.upc_code, raw.week_id).first;
        it->second = std::min(it->second, raw.week_id);
        auto jt = first_seen_store_upc.try_emplace({raw.store_code, raw.upc_code}, raw.week_id).first;
        jt->second = std::min(jt->second, raw.week_id);
    }

    // Per-series temporal features on the completed grid.
    std::size_t begin = 0;
    while (begin < rows.size()) {
        std::size_t end = begin + 1;
        const auto& key = rows[begin].data.raw;
        while (end < rows.size() && rows[end].data.raw.store_code == key.store_code &&
               rows[end].data.raw.upc_code == key.upc_code)
            ++end;
        std::vector<double> y;
        for (std::size_t k = begin; k < end; ++k) y.push_back(rows[k].synthetic ? NAN : rows[k].data.log_demand);
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t t = k - begin;
            auto& f = grid[k];
            f.row = rows[k].data;
            f.is_synthetic_row = rows[k].synthetic;
            const auto& raw = f.row.raw;
            f.week_rank = raw.week_id - min_week + 1;
            const double two_pi = 2.0 * std::numbers::pi;
            f.sin_52 = std::sin(two_pi * f.week_rank / 52.0);
            f.cos_52 = std::cos(two_pi * f.week_rank / 52.0);
            f.sin_26 = std::sin(two_pi * f.week_rank / 26.0);
            f.cos_26 = std::cos(two_pi * f.week_rank / 26.0);
            f.sin_13 = std::sin(two_pi * f.week_rank / 13.0);
            f.cos_13 = std::cos(two_pi * f.week_rank / 13.0);

            auto lag = [&](std::size_t k_lag, double& value, bool& miss) {
                if (t >= k_lag && !std::isnan(y[t - k_lag])) {
                    value = y[t - k_lag];
                    miss = false;
                } else {
                    value = 0.0;
                    miss = true;
                }
            };
            lag(1, f.lag_1, f.miss_lag_1);
            lag(2, f.lag_2, f.miss_lag_2);
            lag(4, f.lag_4, f.miss_lag_4);
            const auto r4 = trailing_mean(y, t, 4);
            const auto r13 = trailing_mean(y, t, 13);
            f.rolling_mean_4 = r4.value;
            f.miss_roll_4 = r4.missing;
            f.rolling_mean_13 = r13.value;
            f.miss_roll_13 = r13.missing;

            if (auto it = first_seen_upc.find(raw.upc_code); it != first_seen_upc.end())
                f.weeks_since_first_seen_upc = std::max(0, raw.week_id - it->second);
            if (auto it = first_seen_store_upc.find({raw.store_code, raw.upc_code}); it != first_seen_store_upc.end())
                f.weeks_since_first_seen_store_upc = std::max(0, raw.week_id - it->second);
        }
        begin = end;
    }

    // Static assortment counts over the split's weeks.
    std::map<std::pair<std::string, std::string>, std::set<std::string>> store_cat_upcs;
    std::map<std::tuple<std::string, std::string, std::string>, std::set<std::string>> store_cat_brand_upcs;
    for (const auto& r : rows) {
        if (r.synthetic || !split.contains(r.data.raw.week_id)) continue;
        const auto& raw = r.data.raw;
        store_cat_upcs[{raw.store_code, raw.category_code}].insert(raw.upc_code);
        store_cat_brand_upcs[{raw.store_code, raw.category_code, raw.brand_family}].insert(raw.upc_code);
    }

    // Store-week and store-week-category groups of observed rows.
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> store_week;
    std::map<std::tuple<std::string, int, std::string>, std::vector<std::size_t>> store_week_cat;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (grid[k].is_synthetic_row) continue;
        const auto& raw = grid[k].row.raw;
        store_week[{raw.store_code, raw.week_id}].push_back(k);
        store_week_cat[{raw.store_code, raw.week_id, raw.category_code}].push_back(k);
    }
    for (const auto& [_, idx] : store_week) {
        double promo = 0.0;
        for (auto k : idx) promo += grid[k].row.on_promo ? 1.0 : 0.0;
        for (auto k : idx) grid[k].promo_intensity_store_week = promo / static_cast<double>(idx.size());
    }
    for (const auto& [_, idx] : store_week_cat) {
        for (auto k : idx) {
            auto& f = grid[k];
            const auto& brand = f.row.raw.brand_family;
            int n = 0, n_promo = 0, n_brand = 0, n_brand_promo = 0, n_new = 0;
            double lag_sum = 0.0, brand_lag_sum = 0.0, roll_sum = 0.0;
            int lag_n = 0, brand_lag_n = 0, roll_n = 0;
            for (auto o : idx) {
                if (o == k) continue;
                const auto& g = grid[o];
                ++n;
                n_promo += g.row.on_promo ? 1 : 0;
                if (g.weeks_since_first_seen_store_upc <= 13) ++n_new;
                if (!g.miss_lag_1) {
                    lag_sum += g.lag_1;
                    ++lag_n;
                }
                if (!g.miss_roll_4) {
                    roll_sum += g.rolling_mean_4;
                    ++roll_n;
                }
                if (g.row.raw.brand_family == brand) {
                    ++n_brand;
                    n_brand_promo += g.row.on_promo ? 1 : 0;
                    if (!g.miss_lag_1) {
                        brand_lag_sum += g.lag_1;
                        ++brand_lag_n;
                    }
                }
            }
            f.n_neighbors_sw_cat = n;
            f.neighbor_promo_share_sw_cat = n > 0 ? static_cast<double>(n_promo) / n : 0.0;
            f.n_same_brand_neighbors_sw_cat = n_brand;
            f.same_brand_neighbor_promo_share_sw_cat = n_brand > 0 ? static_cast<double>(n_brand_promo) / n_brand : 0.0;
            f.miss_lag1_neighbor_mean = lag_n == 0;
            f.lag1_neighbor_mean = lag_n > 0 ? lag_sum / lag_n : 0.0;
            f.miss_lag1_same_brand_neighbor_mean = brand_lag_n == 0;
            f.lag1_same_brand_neighbor_mean = brand_lag_n > 0 ? brand_lag_sum / brand_lag_n : 0.0;
            f.miss_roll4_neighbor_mean = roll_n == 0;
            f.roll4_neighbor_mean = roll_n > 0 ? roll_sum / roll_n : 0.0;
            f.n_new_neighbors_13w = n_new;
            f.share_new_neighbors_13w = n > 0 ? static_cast<double>(n_new) / n : 0.0;
        }
    }

    std::vector<FeatureRow> out;
    out.reserve(grid.size());
    for (auto& f : grid) {
        if (f.is_synthetic_row) continue;
        const auto& raw = f.row.raw;
        if (auto it = store_cat_upcs.find({raw.store_code, raw.category_code}); it != store_cat_upcs.end())
            f.store_category_upc_count_static = static_cast<double>(it->second.size());
        if (auto it = store_cat_brand_upcs.find({raw.store_code, raw.category_code, raw.brand_family});
            it != store_cat_brand_upcs.end())
            f.same_brand_upc_count_store_cat_static =
                static_cast<double>(it->second.size()) - (it->second.count(raw.upc_code) ? 1.0 : 0.0);
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace icdn::panel
