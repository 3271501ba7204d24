#include "fixtures.hpp"

#include "icdn/error.hpp"
#include "icdn/panel.hpp"
#include "icdn/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

using namespace icdn;
using namespace icdn::panel;
using icdn::testing::raw_row;

namespace {

std::string to_csv(const std::vector<RawRow>& rows) {
    std::ostringstream out;
    write_raw_panel(out, rows);
    return out.str();
}

std::vector<PanelRow> normalized(const std::vector<RawRow>& rows) { return normalize_units(rows).rows; }

const FeatureRow* find_feature(const std::vector<FeatureRow>& fp, const std::string& upc, int week) {
    for (const auto& f : fp)
        if (f.row.raw.upc_code == upc && f.row.raw.week_id == week) return &f;
    return nullptr;
}

}  // namespace

TEST(ReadPanel, ThreeRowsRoundTrip) {
    std::vector<RawRow> rows = {raw_row("S1", "U1", 1, 2.0), raw_row("S1", "U1", 2, 2.5), raw_row("S1", "U2", 1, 3.0)};
    std::istringstream in(to_csv(rows));
    const auto back = read_panel(in);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[2].upc_code, "U2");
    EXPECT_DOUBLE_EQ(back[1].total_price, 2.5);
}

TEST(ReadPanel, DuplicateKeyNamesKey) {
    std::vector<RawRow> rows = {raw_row("S1", "U1", 4, 2.0), raw_row("S1", "U1", 4, 2.5)};
    std::istringstream in(to_csv(rows));
    try {
        read_panel(in);
        FAIL() << "duplicate accepted";
    } catch (const DuplicateKeyError& e) {
        EXPECT_NE(e.key().find("S1"), std::string::npos);
        EXPECT_NE(e.key().find("U1"), std::string::npos);
    }
}

TEST(ReadPanel, NegativeUnitsIsParseError) {
    std::vector<RawRow> rows = {raw_row("S1", "U1", 1, 2.0, false, -1.0)};
    std::istringstream in(to_csv(rows));
    EXPECT_THROW(read_panel(in), ParseError);
}

TEST(PackSize, Conversions) {
    EXPECT_NEAR(parse_pack_size("750ML"), 0.75, 1e-12);
    EXPECT_NEAR(parse_pack_size("6/12OZ"), 6 * 12 * 0.0295735, 1e-12);
    EXPECT_NEAR(parse_pack_size("6/12OZ"), 2.129292, 1e-6);
    EXPECT_NEAR(parse_pack_size("1GAL"), 3.78541, 1e-12);
    EXPECT_THROW(parse_pack_size("a dozen"), UnitParseError);
}

TEST(NormalizeUnits, PricePerLiter) {
    auto r = raw_row("S1", "U1", 1, 6.0);
    r.units_per_deal = 2;
    r.pack_size_text = "750ML";
    const auto out = normalize_units({r});
    ASSERT_EQ(out.rows.size(), 1u);
    EXPECT_NEAR(out.rows[0].price_per_liter, 4.0, 1e-12);
    EXPECT_NEAR(out.rows[0].log_price, std::log(4.0), 1e-12);
}

TEST(NormalizeUnits, DropsZeroUnitsAndCheapRows) {
    auto zero = raw_row("S1", "U1", 1, 2.0, false, 0.0);
    auto cheap = raw_row("S1", "U1", 2, 0.04);
    auto fine = raw_row("S1", "U1", 3, 2.0);
    const auto out = normalize_units({zero, cheap, fine}, 0.05);
    EXPECT_EQ(out.rows.size(), 1u);
    EXPECT_EQ(out.report.zero_units, 1u);
    EXPECT_EQ(out.report.min_price, 1u);
}

TEST(Filters, FixtureRemovesOnePerRule) {
    const auto fx = icdn::testing::filter_fixture();
    const auto res = apply_filters(normalized(fx.rows), fx.config);
    EXPECT_EQ(res.report.input_series, 12u);
    EXPECT_EQ(res.report.kept_series, 4u);
    for (int r = 0; r < kFilterRuleCount; ++r) EXPECT_EQ(res.report.series_removed[r], 1u) << to_string(FilterRule(r));
    std::set<std::string> kept;
    for (const auto& row : res.rows) kept.insert(row.raw.store_code + "|" + row.raw.upc_code);
    EXPECT_EQ(kept, std::set<std::string>(fx.passing.begin(), fx.passing.end()));
}

TEST(Filters, ShortSeriesRemovedForMinWeeks) {
    std::vector<RawRow> rows;
    for (int w = 1; w <= 40; ++w) rows.push_back(raw_row("S", "U", w, 1.0 + 0.1 * (w % 5)));
    FilterConfig cfg;
    cfg.min_store_weeks = 1;
    const auto res = apply_filters(normalized(rows), cfg);
    ASSERT_EQ(res.report.series.size(), 1u);
    EXPECT_EQ(res.report.series[0].removed_by, FilterRule::MinWeeks);
    EXPECT_TRUE(res.report.empty_warning);
}

TEST(Filters, ConstantPriceRemovedForDistinctPrices) {
    std::vector<RawRow> rows;
    for (int w = 1; w <= 60; ++w) rows.push_back(raw_row("S", "U", w, 1.5));
    FilterConfig cfg;
    cfg.min_store_weeks = 1;
    const auto res = apply_filters(normalized(rows), cfg);
    EXPECT_EQ(res.report.series[0].removed_by, FilterRule::DistinctPrices);
}

TEST(Filters, PromoCorrelatedPriceRemoved) {
    std::vector<RawRow> rows;
    const double prices[] = {1.0, 1.5, 1.0, 1.6};
    for (int w = 1; w <= 60; ++w) rows.push_back(raw_row("S", "U", w, prices[w % 4], w % 2 == 0));
    FilterConfig cfg;
    cfg.min_store_weeks = 1;
    const auto res = apply_filters(normalized(rows), cfg);
    EXPECT_LT(res.report.series[0].promo_corr, -0.9);
    EXPECT_EQ(res.report.series[0].removed_by, FilterRule::PromoCorrelation);
}

TEST(Outliers, IqrFencesDropExtremeValue) {
    std::vector<PanelRow> rows(5);
    for (int k = 0; k < 5; ++k) {
        rows[k].raw = raw_row("S", "U", k + 1, 1.0);
        rows[k].log_price = k == 4 ? 10.0 : 0.0;
    }
    const auto res = remove_price_outliers(rows, FilterConfig{});
    EXPECT_EQ(res.rows.size(), 4u);
    EXPECT_EQ(res.report.per_upc[0].dropped, 1u);
}

TEST(Outliers, IdenticalPricesKept) {
    std::vector<PanelRow> rows(6);
    for (int k = 0; k < 6; ++k) {
        rows[k].raw = raw_row("S", "U", k + 1, 1.0);
        rows[k].log_price = 0.3;
    }
    EXPECT_EQ(remove_price_outliers(rows, FilterConfig{}).rows.size(), 6u);
}

TEST(Outliers, TinyUpcSkipped) {
    std::vector<PanelRow> rows(3);
    for (int k = 0; k < 3; ++k) {
        rows[k].raw = raw_row("S", "U", k + 1, 1.0);
        rows[k].log_price = k * 5.0;
    }
    const auto res = remove_price_outliers(rows, FilterConfig{});
    EXPECT_EQ(res.rows.size(), 3u);
    EXPECT_TRUE(res.report.per_upc[0].skipped);
}

TEST(Calendar, FillsInternalGaps) {
    const auto skel = complete_calendar(normalized({raw_row("S", "U", 1, 1), raw_row("S", "U", 2, 1), raw_row("S", "U", 5, 1)}));
    EXPECT_EQ(skel.inserted, 2u);
    ASSERT_EQ(skel.rows.size(), 5u);
    EXPECT_TRUE(skel.rows[2].synthetic);
    EXPECT_TRUE(skel.rows[3].synthetic);
    EXPECT_EQ(skel.rows[3].data.raw.week_id, 4);
    EXPECT_TRUE(std::isnan(skel.rows[2].data.log_price));
}

TEST(Calendar, ContiguousSeriesUntouched) {
    const auto skel = complete_calendar(normalized({raw_row("S", "U", 1, 1), raw_row("S", "U", 2, 1)}));
    EXPECT_EQ(skel.inserted, 0u);
}

TEST(Calendar, CountsGapsAcrossSeries) {
    std::vector<RawRow> rows;
    for (const char* upc : {"A", "B", "C"})
        for (int w : {1, 3, 5}) rows.push_back(raw_row("S", upc, w, 1));
    EXPECT_EQ(complete_calendar(normalized(rows)).inserted, 6u);
}

TEST(Features, SeasonalityAndFirstWeekLag) {
    std::vector<RawRow> rows;
    for (int w = 1; w <= 20; ++w) rows.push_back(raw_row("S", "U", w, 1.0 + 0.1 * (w % 3)));
    const auto fp = engineer_features(complete_calendar(normalized(rows)), {1, 20});
    const auto* f13 = find_feature(fp, "U", 13);
    ASSERT_NE(f13, nullptr);
    EXPECT_EQ(f13->week_rank, 13);
    EXPECT_NEAR(f13->sin_13, 0.0, 1e-12);
    EXPECT_NEAR(f13->cos_13, 1.0, 1e-12);
    const auto* f1 = find_feature(fp, "U", 1);
    EXPECT_TRUE(f1->miss_lag_1);
    EXPECT_EQ(f1->lag_1, 0.0);
    const auto* f2 = find_feature(fp, "U", 2);
    EXPECT_FALSE(f2->miss_lag_1);
    EXPECT_NEAR(f2->lag_1, f1->row.log_demand, 1e-12);
}

TEST(Features, NeighborPromoShareExcludesFocal) {
    std::vector<RawRow> rows;
    for (int w = 1; w <= 3; ++w)
        for (const char* upc : {"A", "B", "C", "D"}) rows.push_back(raw_row("S", upc, w, 1.0, std::string(upc) == "D"));
    const auto fp = engineer_features(complete_calendar(normalized(rows)), {1, 3});
    const auto* a = find_feature(fp, "A", 2);
    ASSERT_NE(a, nullptr);
    EXPECT_EQ(a->n_neighbors_sw_cat, 3.0);
    EXPECT_NEAR(a->neighbor_promo_share_sw_cat, 1.0 / 3.0, 1e-12);
}

TEST(Wide, ForwardAndBackwardFill) {
    std::vector<RawRow> rows;
    for (int w = 1; w <= 4; ++w) rows.push_back(raw_row("S", "A", w, 1.0 + w));
    for (int w : {1, 2, 3}) rows.push_back(raw_row("S", "B", w, 2.0 + w));
    rows.push_back(raw_row("S", "C", 3, 7.0));
    rows.push_back(raw_row("S", "C", 4, 8.0));
    const auto fp = engineer_features(complete_calendar(normalized(rows)), {1, 4});
    const auto uni = Universe::from_features(fp);
    const auto wide = assemble_wide(fp, uni);
    ASSERT_EQ(wide.size(), 4u);
    const auto b = static_cast<Eigen::Index>(*uni.index_of("B"));
    const auto c = static_cast<Eigen::Index>(*uni.index_of("C"));
    EXPECT_EQ(wide[3].mask[b], 0.0);
    EXPECT_DOUBLE_EQ(wide[3].log_price[b], wide[2].log_price[b]);
    EXPECT_DOUBLE_EQ(wide[0].log_price[c], std::log(7.0));
    EXPECT_DOUBLE_EQ(wide[1].log_price[c], std::log(7.0));
    EXPECT_TRUE(wide[0].tokens.row(c).isZero());
}

TEST(Wide, MaskSumsMatchObservedRows) {
    SynthConfig sc;
    sc.n_products = 4;
    sc.n_stores = 2;
    sc.n_weeks = 60;
    sc.missing_prob = 0.2;
    sc.fill_defaults();
    const auto pre = pipeline::preprocess(generate_synthetic_panel(sc).raw, icdn::testing::loose_filters());
    std::map<std::pair<std::string, int>, int> count;
    for (const auto& f : pre.features)
        if (!f.is_synthetic_row) ++count[{f.row.raw.store_code, f.row.raw.week_id}];
    const auto wide = assemble_wide(pre.features, Universe::from_features(pre.features));
    ASSERT_EQ(wide.size(), count.size());
    for (const auto& inst : wide) {
        EXPECT_EQ(inst.mask.sum(), count.at({inst.store_code, inst.week_id}));
        for (Eigen::Index i = 0; i < inst.mask.size(); ++i) EXPECT_TRUE(std::isfinite(inst.log_price[i]));
    }
}

TEST(Synth, ConstantPricesGiveConstantDemand) {
    SynthConfig sc;
    sc.n_products = 3;
    sc.n_stores = 1;
    sc.n_weeks = 10;
    sc.walk_scale = 0.0;
    sc.promo_prob = 0.0;
    sc.fill_defaults();
    const auto res = generate_synthetic_panel(sc);
    std::map<std::string, std::set<double>> ys;
    for (const auto& r : res.rows) ys[r.raw.upc_code].insert(r.log_demand);
    for (const auto& [upc, s] : ys) EXPECT_EQ(s.size(), 1u) << upc;
}

TEST(Synth, DoublingPriceDropsDemandByOwnElasticity) {
    SynthConfig sc;
    sc.n_products = 2;
    sc.own = {-2.0, -1.5};
    sc.cross = Matrix::Zero(2, 2);
    sc.base_price = {1.0, 1.0};
    sc.base_demand = {50.0, 50.0};
    sc.n_weeks = 400;
    sc.n_stores = 1;
    const auto res = generate_synthetic_panel(sc);
    const double y0 = std::log(50.0);
    for (const auto& r : res.rows)
        if (r.raw.upc_code == res.truth.upcs[0])
            EXPECT_NEAR(r.log_demand - y0, -2.0 * r.log_price, 1e-10);
}

TEST(Synth, OwnRegressionRecoversElasticity) {
    SynthConfig sc;
    sc.n_products = 3;
    sc.n_stores = 2;
    sc.n_weeks = 300;
    sc.cross = Matrix::Zero(3, 3);
    sc.seed = 5;
    sc.fill_defaults();
    const auto res = generate_synthetic_panel(sc);
    for (int i = 0; i < 3; ++i) {
        std::vector<double> u, y;
        for (const auto& r : res.rows)
            if (r.raw.upc_code == res.truth.upcs[static_cast<std::size_t>(i)]) {
                u.push_back(r.log_price);
                y.push_back(r.log_demand);
            }
        const double mu = stats::mean(u), my = stats::mean(y);
        double sxy = 0, sxx = 0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            sxy += (u[k] - mu) * (y[k] - my);
            sxx += (u[k] - mu) * (u[k] - mu);
        }
        EXPECT_NEAR(sxy / sxx, sc.own[static_cast<std::size_t>(i)], 1e-6);
    }
}

TEST(Synth, SeedDeterminism) {
    SynthConfig a;
    a.seed = 9;
    a.n_weeks = 30;
    a.fill_defaults();
    const auto x = generate_synthetic_panel(a), y = generate_synthetic_panel(a);
    EXPECT_EQ(to_csv(x.raw), to_csv(y.raw));
}
