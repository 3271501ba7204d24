#include "fixtures.hpp"

#include "icdn/rng.hpp"

#include <fstream>
#include <sstream>
#include <unistd.h>

namespace icdn::testing {

panel::FilterConfig loose_filters() {
    panel::FilterConfig f;
    f.min_store_weeks = 10;
    f.min_series_weeks = 10;
    return f;
}

pipeline::WideData synth_wide(int n_products, int n_stores, int n_weeks, std::uint64_t seed, double noise_sd) {
    panel::SynthConfig sc;
    sc.n_products = n_products;
    sc.n_stores = n_stores;
    sc.n_weeks = n_weeks;
    sc.noise_sd = noise_sd;
    sc.seed = seed;
    sc.fill_defaults();
    const auto syn = panel::generate_synthetic_panel(sc);
    const auto pre = pipeline::preprocess(syn.raw, loose_filters());
    return pipeline::build_wide(pre.features);
}

model::ModelConfig tiny_model_config(int basis_count, int neighbors) {
    model::ModelConfig mc;
    mc.basis_count = basis_count;
    mc.hidden = {6, 4};
    mc.attention_dim = 3;
    mc.embedding_dim = 2;
    mc.neighbors = neighbors;
    mc.dropout = 0.0;
    return mc;
}

void randomize(model::Parameters& p, std::uint64_t seed, double scale) {
    Rng rng = make_stream(seed, "test-params");
    p.visit([&](const std::string&, Matrix& m, const model::BlockInfo&) {
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = uniform(rng, -scale, scale);
    });
}

model::DemandSurface random_surface(int n, int K, std::uint64_t seed, double scale) {
    Rng rng = make_stream(seed, "test-surface");
    std::vector<spline::SplineSpec> splines;
    std::vector<model::OwnHeadOutput> own;
    std::vector<model::EdgeTerms> edges;
    for (int i = 0; i < n; ++i) {
        spline::SplineSpec s;
        for (int k = 0; k < K; ++k) s.knots.push_back(-0.6 + 1.2 * (k + 0.5) / K + uniform(rng, -0.05, 0.05));
        s.mu = uniform(rng, -0.1, 0.1);
        s.sigma = uniform(rng, 0.2, 0.5);
        splines.push_back(s);
        model::OwnHeadOutput o;
        o.intercept = uniform(rng, -1, 1);
        o.slope_raw = uniform(rng, -1, 2);
        o.slope = -model::softplus(o.slope_raw);
        o.spline = Vector(K);
        for (int k = 0; k < K; ++k) o.spline(k) = uniform(rng, -scale, scale);
        own.push_back(o);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            model::EdgeTerms e;
            e.focal = i;
            e.other = j;
            e.weight = uniform(rng, 0.05, 1.0);
            e.head.slope = uniform(rng, -scale, scale);
            e.head.spline = Vector(K);
            e.head.interaction = Matrix(K, K);
            for (int k = 0; k < K; ++k) e.head.spline(k) = uniform(rng, -scale, scale);
            for (Eigen::Index k = 0; k < e.head.interaction.size(); ++k)
                e.head.interaction.data()[k] = uniform(rng, -scale, scale);
            edges.push_back(e);
        }
    return model::DemandSurface(std::move(splines), std::move(own), std::move(edges));
}

panel::RawRow raw_row(const std::string& store, const std::string& upc, int week, double price, bool promo,
                      double units) {
    panel::RawRow r;
    r.store_code = store;
    r.upc_code = upc;
    r.week_id = week;
    r.units_sold = units;
    r.total_price = price;
    r.units_per_deal = 1;
    r.pack_size_text = "1L";
    r.promo_b = promo;
    r.brand_family = "B" + upc;
    r.style_segment = "S";
    r.category_code = "C1";
    return r;
}

FilterFixture filter_fixture() {
    FilterFixture fx;
    fx.config.min_store_weeks = 100;
    auto add_cycle = [&](const std::string& store, const std::string& upc, const std::vector<int>& weeks,
                         const std::vector<double>& prices, const std::vector<bool>& promo) {
        for (std::size_t k = 0; k < weeks.size(); ++k) {
            const std::size_t c = static_cast<std::size_t>(weeks[k]) % prices.size();
            fx.rows.push_back(raw_row(store, upc, weeks[k], prices[c], promo.empty() ? false : promo[c]));
        }
    };
    auto range = [](int a, int b, int step = 1) {
        std::vector<int> w;
        for (int x = a; x <= b; x += step) w.push_back(x);
        return w;
    };
    const std::vector<double> five = {1.0, 1.1, 1.2, 1.3, 1.4};

    add_cycle("A", "P1", range(1, 120), five, {});
    add_cycle("A", "P2", range(1, 120), {1.0, 1.1, 1.2, 1.3, 1.4, 1.5}, {false, true, false, false, false, false});
    add_cycle("A", "P3", range(1, 120), {2.0, 2.3, 2.6, 2.3}, {});
    {
        std::vector<int> w;
        for (int x = 1; x <= 120; ++x)
            if (x % 5 != 0) w.push_back(x);
        add_cycle("A", "P4", w, {1.0, 1.15, 1.3, 1.45, 1.6, 1.75, 1.9}, {});
    }
    fx.passing = {"A|P1", "A|P2", "A|P3", "A|P4"};

    add_cycle("B", "X0", range(1, 60), five, {});                       // store weeks
    add_cycle("A", "X1", range(1, 40), five, {});                       // min weeks
    add_cycle("A", "X2", range(1, 119, 2), {1.0, 1.1, 1.2, 1.3}, {});   // coverage
    add_cycle("A", "X3", range(1, 120), {1.0}, {});                     // distinct prices
    for (int x = 1; x <= 120; ++x)                                      // price changes
        fx.rows.push_back(raw_row("A", "X4", x, x <= 40 ? 1.0 : (x <= 80 ? 1.5 : 2.0)));
    add_cycle("A", "X5", range(1, 120), {1.0, 1.02, 1.04}, {});         // log-price range
    add_cycle("A", "X6", range(1, 120), {1.0, 1.5, 1.0, 1.6}, {true, false, true, false});   // promo correlation
    add_cycle("A", "X7", range(1, 120), {1.0, 1.2, 1.4, 1.2}, {false, true, false, true});   // promo switch share
    return fx;
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("icdn_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace icdn::testing
