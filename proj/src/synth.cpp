#include "icdn/error.hpp"
#include "icdn/panel.hpp"
#include "icdn/rng.hpp"

#include <cmath>
#include <cstdio>

namespace icdn::panel {

namespace {

const char* kPackSizes[] = {"12/12OZ", "6/12OZ", "750ML", "1GAL", "2L", "24/12OZ", "1L"};

std::string code(const char* prefix, int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%03d", prefix, k);
    return buf;
}

}  // namespace

void SynthConfig::validate() const {
    if (n_products < 1 || n_stores < 1 || n_weeks < 1) throw ConfigError("synthetic panel needs positive sizes");
    const auto n = static_cast<std::size_t>(n_products);
    if (own.size() != n || base_price.size() != n || base_demand.size() != n)
        throw ConfigError("synthetic own elasticities and baselines must have one entry per product");
    if (cross.rows() != n_products || cross.cols() != n_products)
        throw ConfigError("synthetic cross matrix must be n_products x n_products");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(own[i] < 0.0)) throw ConfigError("own elasticities must be negative");
        if (!(base_price[i] > 0.0) || !(base_demand[i] > 0.0)) throw ConfigError("baselines must be positive");
    }
    if (walk_scale < 0 || walk_bound < 0 || noise_sd < 0) throw ConfigError("scales must be nonnegative");
    if (promo_prob < 0 || promo_prob > 1 || missing_prob < 0 || missing_prob >= 1)
        throw ConfigError("probabilities out of range");
    if (promo_discount < 0 || promo_discount >= 1) throw ConfigError("promo_discount must lie in [0, 1)");
    if (n_categories < 1) throw ConfigError("n_categories must be >= 1");
}

void SynthConfig::fill_defaults(double own_min, double own_max, double cross_max) {
    auto rng = make_stream(seed, "truth");
    const auto n = static_cast<std::size_t>(n_products);
    std::uniform_real_distribution<double> own_dist(own_min, own_max);
    std::uniform_real_distribution<double> cross_dist(-cross_max, cross_max);
    std::uniform_real_distribution<double> price_dist(0.8, 1.25);
    std::uniform_real_distribution<double> demand_dist(20.0, 200.0);
    if (own.empty()) {
        own.resize(n);
        for (auto& e : own) e = own_dist(rng);
    }
    if (cross.size() == 0) {
        cross = Matrix::Zero(n_products, n_products);
        for (int i = 0; i < n_products; ++i)
            for (int j = 0; j < n_products; ++j)
                if (i != j) cross(i, j) = cross_dist(rng);
    }
    if (base_price.empty()) {
        base_price.resize(n);
        for (auto& p : base_price) p = price_dist(rng);
    }
    if (base_demand.empty()) {
        base_demand.resize(n);
        for (auto& v : base_demand) v = demand_dist(rng);
    }
}

SynthResult generate_synthetic_panel(const SynthConfig& cfg) {
    cfg.validate();
    const int n = cfg.n_products;
    SynthResult out;
    out.truth.config = cfg;
    out.truth.elasticity = cfg.cross;
    for (int i = 0; i < n; ++i) out.truth.elasticity(i, i) = cfg.own[static_cast<std::size_t>(i)];
    out.truth.base_price = cfg.base_price;
    out.truth.base_demand = cfg.base_demand;

    std::vector<ProductMeta> meta(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& m = meta[static_cast<std::size_t>(i)];
        m.upc_code = code("U", i + 1);
        m.brand_family = code("BR", i % 3);
        m.style_segment = code("STY", i % 2);
        m.category_code = code("CAT", i % cfg.n_categories);
        const char* pack = kPackSizes[static_cast<std::size_t>(i) % (sizeof kPackSizes / sizeof *kPackSizes)];
        m.liters = parse_pack_size(pack);
        out.truth.upcs.push_back(m.upc_code);
    }

    auto rng = make_stream(cfg.seed, "data");
    std::normal_distribution<double> step(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double promo_shift = std::log(1.0 - cfg.promo_discount);

    for (int s = 0; s < cfg.n_stores; ++s) {
        const std::string store = code("ST", s + 1);
        std::vector<double> walk(static_cast<std::size_t>(n), 0.0);
        for (int t = 0; t < cfg.n_weeks; ++t) {
            Vector u(n);
            std::vector<bool> promo(static_cast<std::size_t>(n));
            std::vector<bool> observed(static_cast<std::size_t>(n));
            for (int j = 0; j < n; ++j) {
                auto& x = walk[static_cast<std::size_t>(j)];
                if (t > 0 && cfg.walk_scale > 0) {
                    x += cfg.walk_scale * step(rng);
                    // reflect into [-bound, bound]
                    for (int guard = 0; guard < 8 && std::abs(x) > cfg.walk_bound; ++guard)
                        x = x > 0 ? 2 * cfg.walk_bound - x : -2 * cfg.walk_bound - x;
                }
                const bool on = cfg.promo_prob > 0 && unit(rng) < cfg.promo_prob;
                promo[static_cast<std::size_t>(j)] = on;
                u[j] = std::log(cfg.base_price[static_cast<std::size_t>(j)]) + x + (on ? promo_shift : 0.0);
                observed[static_cast<std::size_t>(j)] = !(cfg.missing_prob > 0 && unit(rng) < cfg.missing_prob);
            }
            for (int i = 0; i < n; ++i) {
                const auto ii = static_cast<std::size_t>(i);
                double y = std::log(cfg.base_demand[ii]);
                for (int j = 0; j < n; ++j)
                    y += out.truth.elasticity(i, j) * (u[j] - std::log(cfg.base_price[static_cast<std::size_t>(j)]));
                if (cfg.noise_sd > 0) y += cfg.noise_sd * step(rng);
                if (!observed[ii]) continue;

                const auto& m = meta[ii];
                RawRow raw;
                raw.store_code = store;
                raw.upc_code = m.upc_code;
                raw.week_id = cfg.first_week + t;
                raw.pack_size_text = kPackSizes[ii % (sizeof kPackSizes / sizeof *kPackSizes)];
                raw.units_per_deal = 1;
                raw.total_price = std::exp(u[i]) * m.liters;
                raw.units_sold = std::exp(y) / m.liters;
                raw.promo_b = promo[ii];
                raw.brand_family = m.brand_family;
                raw.style_segment = m.style_segment;
                raw.category_code = m.category_code;

                PanelRow row;
                row.raw = raw;
                row.liters = m.liters;
                row.price_per_liter = std::exp(u[i]);
                row.liters_sold = std::exp(y);
                row.log_price = u[i];
                row.log_demand = y;
                row.on_promo = promo[ii];
                out.raw.push_back(std::move(raw));
                out.rows.push_back(std::move(row));
            }
        }
    }
    return out;
}

}  // namespace icdn::panel
