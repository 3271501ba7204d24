#include "icdn/error.hpp"
#include "icdn/panel.hpp"
#include "icdn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

namespace icdn::panel {

namespace {

bool same_price(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
}

using SeriesKey = std::pair<std::string, std::string>;  // (store, upc)

std::map<SeriesKey, std::vector<std::size_t>> group_series(const std::vector<PanelRow>& panel) {
    std::map<SeriesKey, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < panel.size(); ++k)
        groups[{panel[k].raw.store_code, panel[k].raw.upc_code}].push_back(k);
    for (auto& [_, idx] : groups)
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return panel[a].raw.week_id < panel[b].raw.week_id; });
    return groups;
}

bool row_less(const PanelRow& a, const PanelRow& b) {
    return std::tie(a.raw.store_code, a.raw.upc_code, a.raw.week_id) <
           std::tie(b.raw.store_code, b.raw.upc_code, b.raw.week_id);
}

}  // namespace

const char* to_string(FilterRule rule) {
    switch (rule) {
        case FilterRule::MinStoreWeeks: return "min store weeks";
        case FilterRule::MinWeeks: return "min weeks";
        case FilterRule::Coverage: return "coverage";
        case FilterRule::DistinctPrices: return "distinct prices";
        case FilterRule::PriceChanges: return "price changes";
        case FilterRule::LogPriceRange: return "log-price range";
        case FilterRule::PromoCorrelation: return "promo correlation";
        case FilterRule::PromoSwitchShare: return "promo switch share";
    }
    return "unknown";
}

void FilterConfig::validate() const {
    if (min_price < 0 || min_store_weeks < 0 || min_series_weeks < 0 || min_distinct_prices < 0 ||
        min_price_changes < 0 || min_logprice_range < 0 || max_promo_corr < 0 || max_promo_switch_share < 0 ||
        iqr_multiplier < 0)
        throw ConfigError("filter thresholds must be nonnegative");
    if (min_coverage < 0 || min_coverage > 1) throw ConfigError("min_coverage must lie in [0, 1]");
}

NormalizeResult normalize_units(const std::vector<RawRow>& rows, double min_price) {
    NormalizeResult out;
    out.report.input_rows = rows.size();
    for (const auto& r : rows) {
        if (r.exclude_flag) {
            ++out.report.excluded;
            continue;
        }
        if (r.units_sold == 0.0) {
            ++out.report.zero_units;
            continue;
        }
        if (r.total_price <= min_price) {
            ++out.report.min_price;
            continue;
        }
        PanelRow p;
        p.raw = r;
        p.liters = parse_pack_size(r.pack_size_text);
        const double price_per_upc = r.total_price / static_cast<double>(r.units_per_deal);
        p.liters_sold = r.units_sold * p.liters;
        p.price_per_liter = price_per_upc / p.liters;
        p.log_price = std::log(p.price_per_liter);
        p.log_demand = std::log(p.liters_sold);
        p.on_promo = r.promo_b || r.promo_s || r.promo_c;
        if (!std::isfinite(p.log_price) || !std::isfinite(p.log_demand) || !(p.liters_sold > 0) ||
            !(p.price_per_liter > 0)) {
            ++out.report.nonfinite;
            continue;
        }
        out.rows.push_back(std::move(p));
    }
    out.report.kept_rows = out.rows.size();
    return out;
}

SeriesDiagnostics diagnose_series(const std::vector<const PanelRow*>& s) {
    SeriesDiagnostics d;
    if (s.empty()) return d;
    d.store_code = s.front()->raw.store_code;
    d.upc_code = s.front()->raw.upc_code;
    d.observed_weeks = static_cast<int>(s.size());
    const int span = s.back()->raw.week_id - s.front()->raw.week_id + 1;
    d.coverage = static_cast<double>(s.size()) / static_cast<double>(span);

    std::vector<double> prices;
    std::vector<double> u, promo;
    for (const auto* r : s) {
        prices.push_back(r->price_per_liter);
        u.push_back(r->log_price);
        promo.push_back(r->on_promo ? 1.0 : 0.0);
    }
    std::vector<double> sorted = prices;
    std::sort(sorted.begin(), sorted.end());
    d.distinct_prices = sorted.empty() ? 0 : 1;
    for (std::size_t k = 1; k < sorted.size(); ++k)
        if (!same_price(sorted[k], sorted[k - 1])) ++d.distinct_prices;

    int switches_at_change = 0;
    for (std::size_t k = 1; k < s.size(); ++k) {
        if (!same_price(prices[k], prices[k - 1])) {
            ++d.price_changes;
            if (s[k]->on_promo != s[k - 1]->on_promo) ++switches_at_change;
        }
    }
    d.promo_switch_share =
        d.price_changes > 0 ? static_cast<double>(switches_at_change) / d.price_changes : 0.0;
    const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
    d.logprice_range = *hi - *lo;
    d.promo_corr = stats::pearson(u, promo);
    return d;
}

FilterResult apply_filters(const std::vector<PanelRow>& panel, const FilterConfig& cfg) {
    cfg.validate();
    FilterResult out;
    auto& rep = out.report;
    rep.input_rows = panel.size();

    std::map<std::string, std::set<int>> store_weeks;
    for (const auto& r : panel) store_weeks[r.raw.store_code].insert(r.raw.week_id);
    std::set<std::string> dropped_stores;
    for (const auto& [store, weeks] : store_weeks)
        if (static_cast<int>(weeks.size()) < cfg.min_store_weeks) dropped_stores.insert(store);
    rep.stores_removed = dropped_stores.size();

    const auto groups = group_series(panel);
    rep.input_series = groups.size();
    std::vector<std::size_t> kept;
    for (const auto& [key, idx] : groups) {
        std::vector<const PanelRow*> series;
        for (auto k : idx) series.push_back(&panel[k]);
        auto d = diagnose_series(series);

        auto fail = [&](FilterRule rule) {
            d.removed_by = rule;
            rep.series_removed[static_cast<int>(rule)] += 1;
            rep.rows_removed[static_cast<int>(rule)] += idx.size();
        };
        if (dropped_stores.count(key.first)) fail(FilterRule::MinStoreWeeks);
        else if (d.observed_weeks < cfg.min_series_weeks) fail(FilterRule::MinWeeks);
        else if (d.coverage < cfg.min_coverage) fail(FilterRule::Coverage);
        else if (d.distinct_prices < cfg.min_distinct_prices) fail(FilterRule::DistinctPrices);
        else if (d.price_changes < cfg.min_price_changes) fail(FilterRule::PriceChanges);
        else if (d.logprice_range < cfg.min_logprice_range) fail(FilterRule::LogPriceRange);
        else if (std::abs(d.promo_corr) > cfg.max_promo_corr) fail(FilterRule::PromoCorrelation);
        else if (d.promo_switch_share > cfg.max_promo_switch_share) fail(FilterRule::PromoSwitchShare);
        else kept.insert(kept.end(), idx.begin(), idx.end());
        rep.series.push_back(std::move(d));
    }
    for (auto k : kept) out.rows.push_back(panel[k]);
    std::sort(out.rows.begin(), out.rows.end(), row_less);
    rep.kept_rows = out.rows.size();
    rep.kept_series = rep.input_series;
    for (auto c : rep.series_removed) rep.kept_series -= c;
    rep.empty_warning = out.rows.empty();
    return out;
}

OutlierResult remove_price_outliers(const std::vector<PanelRow>& panel, const FilterConfig& cfg) {
    OutlierResult out;
    out.report.input_rows = panel.size();
    std::map<std::string, std::vector<std::size_t>> by_upc;
    for (std::size_t k = 0; k < panel.size(); ++k) by_upc[panel[k].raw.upc_code].push_back(k);

    std::vector<bool> keep(panel.size(), true);
    for (const auto& [upc, idx] : by_upc) {
        UpcOutliers u;
        u.upc_code = upc;
        u.rows = idx.size();
        if (idx.size() < 4) {
            u.skipped = true;
            u.lower_fence = -std::numeric_limits<double>::infinity();
            u.upper_fence = std::numeric_limits<double>::infinity();
            out.report.per_upc.push_back(u);
            continue;
        }
        std::vector<double> values;
        for (auto k : idx) values.push_back(panel[k].log_price);
        std::sort(values.begin(), values.end());
        const double q1 = stats::quantile_sorted(values, 0.25);
        const double q3 = stats::quantile_sorted(values, 0.75);
        const double iqr = q3 - q1;
        u.lower_fence = q1 - cfg.iqr_multiplier * iqr;
        u.upper_fence = q3 + cfg.iqr_multiplier * iqr;
        for (auto k : idx) {
            const double v = panel[k].log_price;
            if (v < u.lower_fence || v > u.upper_fence) {
                keep[k] = false;
                ++u.dropped;
            }
        }
        out.report.per_upc.push_back(u);
    }
    for (std::size_t k = 0; k < panel.size(); ++k)
        if (keep[k]) out.rows.push_back(panel[k]);
    out.report.kept_rows = out.rows.size();
    return out;
}

CalendarPanel complete_calendar(const std::vector<PanelRow>& panel) {
    CalendarPanel skel;
    skel.rows.reserve(panel.size());
    for (const auto& r : panel) skel.rows.push_back(CalendarRow{r, false});
    return complete_calendar(skel);
}

CalendarPanel complete_calendar(const CalendarPanel& skeleton) {
    auto rows = skeleton.rows;
    std::sort(rows.begin(), rows.end(),
              [](const CalendarRow& a, const CalendarRow& b) { return row_less(a.data, b.data); });
    CalendarPanel out;
    out.inserted = 0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (k > 0) {
            const auto& prev = rows[k - 1].data.raw;
            const auto& cur = rows[k].data.raw;
            if (prev.store_code == cur.store_code && prev.upc_code == cur.upc_code) {
                for (int w = prev.week_id + 1; w < cur.week_id; ++w) {
                    CalendarRow fill;
                    fill.synthetic = true;
                    auto& raw = fill.data.raw;
                    raw.store_code = cur.store_code;
                    raw.upc_code = cur.upc_code;
                    raw.week_id = w;
                    raw.brand_family = cur.brand_family;
                    raw.style_segment = cur.style_segment;
                    raw.category_code = cur.category_code;
                    raw.pack_size_text = cur.pack_size_text;
                    raw.units_sold = nan;
                    raw.total_price = nan;
                    fill.data.liters = rows[k].data.liters;
                    fill.data.liters_sold = nan;
                    fill.data.price_per_liter = nan;
                    fill.data.log_price = nan;
                    fill.data.log_demand = nan;
                    out.rows.push_back(std::move(fill));
                    ++out.inserted;
                }
            }
        }
        out.rows.push_back(rows[k]);
    }
    out.inserted = static_cast<std::size_t>(
        std::count_if(out.rows.begin(), out.rows.end(), [](const CalendarRow& r) { return r.synthetic; }));
    return out;
}

}  // namespace icdn::panel
