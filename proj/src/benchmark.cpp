#include "icdn/csv.hpp"
#include "icdn/error.hpp"
#include "icdn/evaluation.hpp"

#include <Eigen/QR>

#include <cmath>
#include <map>
#include <ostream>
#include <set>

namespace icdn::evaluation {

namespace {

constexpr double kZ975 = 1.959963984540054;

using Getter = double (*)(const panel::FeatureRow&);

struct Control {
    const char* name;
    Getter get;
};

const std::vector<Control>& control_table() {
    using R = const panel::FeatureRow&;
    static const std::vector<Control> table = {
        {"on_promo", [](R r) { return r.row.on_promo ? 1.0 : 0.0; }},
        {"week_rank", [](R r) { return static_cast<double>(r.week_rank); }},
        {"sin_52", [](R r) { return r.sin_52; }},
        {"cos_52", [](R r) { return r.cos_52; }},
        {"sin_13", [](R r) { return r.sin_13; }},
        {"cos_13", [](R r) { return r.cos_13; }},
        {"weeks_since_first_seen_store_upc", [](R r) { return r.weeks_since_first_seen_store_upc; }},
        {"lag_1_log_liters_sold", [](R r) { return r.lag_1; }},
        {"lag_4_log_liters_sold", [](R r) { return r.lag_4; }},
        {"miss_lag_1", [](R r) { return r.miss_lag_1 ? 1.0 : 0.0; }},
        {"miss_lag_4", [](R r) { return r.miss_lag_4 ? 1.0 : 0.0; }},
        {"promo_intensity_store_week", [](R r) { return r.promo_intensity_store_week; }},
        {"n_neighbors_sw_cat", [](R r) { return r.n_neighbors_sw_cat; }},
        {"neighbor_promo_share_sw_cat", [](R r) { return r.neighbor_promo_share_sw_cat; }},
        {"lag1_neighbor_mean_log_liters_sold", [](R r) { return r.lag1_neighbor_mean; }},
        {"share_new_neighbors_13w", [](R r) { return r.share_new_neighbors_13w; }},
    };
    return table;
}

std::size_t distinct_count(const Eigen::Ref<const Vector>& v) {
    std::set<double> s(v.data(), v.data() + v.size());
    return s.size();
}

bool is_constant(const Eigen::Ref<const Vector>& v) {
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) != v(0)) return false;
    return true;
}

bool full_column_rank(const Matrix& X) {
    return Eigen::ColPivHouseholderQR<Matrix>(X).rank() == X.cols();
}

}  // namespace

const std::vector<std::string>& benchmark_controls() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& c : control_table()) v.emplace_back(c.name);
        return v;
    }();
    return names;
}

OlsResult ols_hc1(const Matrix& X, const Vector& y) {
    const Eigen::Index n = X.rows(), k = X.cols();
    if (y.size() != n) throw ShapeError("ols: design and response lengths differ");
    if (n <= k) throw DomainError("ols: need more rows than columns");
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    if (qr.rank() < k) throw DomainError("ols: design matrix is rank deficient");
    OlsResult r;
    r.beta = qr.solve(y);
    r.residual = y - X * r.beta;
    // (X'X)^{-1} = P R^{-1} R^{-T} P' from the pivoted factorization.
    const Matrix R = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
    const Matrix Rinv = R.triangularView<Eigen::Upper>().solve(Matrix::Identity(k, k));
    const Matrix P = qr.colsPermutation();
    const Matrix bread = P * Rinv * Rinv.transpose() * P.transpose();
    const Matrix meat = X.transpose() * r.residual.array().square().matrix().asDiagonal() * X;
    r.hc1 = (static_cast<double>(n) / static_cast<double>(n - k)) * bread * meat * bread;
    return r;
}

BenchmarkOutcome benchmark_fit(const PairwiseGroup& g) {
    BenchmarkOutcome o{g.store, g.upc_i, g.upc_j, std::nullopt, {}};
    const auto n = g.x_train.rows();
    if (g.x_val.rows() == 0) {
        o.skip_reason = "no validation rows";
        return o;
    }
    if (n < kMinBenchmarkRows) {
        o.skip_reason = "min observations";
        return o;
    }
    if (distinct_count(g.x_train.col(0)) < 2) {
        o.skip_reason = "own price variation";
        return o;
    }
    if (distinct_count(g.x_train.col(1)) < 2) {
        o.skip_reason = "cross price variation";
        return o;
    }
    const auto& names = benchmark_controls();
    std::vector<Eigen::Index> cols = {0, 1};
    BenchmarkFit f;
    // Aliased controls are dropped in column order; the price columns never are.
    Matrix kept(g.x_train.rows(), 3);
    kept.col(0).setOnes();
    kept.col(1) = g.x_train.col(0);
    kept.col(2) = g.x_train.col(1);
    for (Eigen::Index c = 2; c < g.x_train.cols(); ++c) {
        if (is_constant(g.x_train.col(c))) continue;
        Matrix trial(kept.rows(), kept.cols() + 1);
        trial << kept, g.x_train.col(c);
        if (full_column_rank(trial)) {
            kept = std::move(trial);
            cols.push_back(c);
            f.control_names.push_back(names[static_cast<std::size_t>(c - 2)]);
        }
    }
    const auto k = static_cast<Eigen::Index>(cols.size()) + 1;
    auto design = [&](const Matrix& raw) {
        Matrix X(raw.rows(), k);
        X.col(0).setOnes();
        for (std::size_t t = 0; t < cols.size(); ++t) X.col(static_cast<Eigen::Index>(t) + 1) = raw.col(cols[t]);
        return X;
    };
    const Matrix Xtr = design(g.x_train);
    OlsResult ols;
    try {
        ols = ols_hc1(Xtr, g.y_train);
    } catch (const DomainError&) {
        o.skip_reason = "rank deficient";
        return o;
    }
    f.store = g.store;
    f.upc_i = g.upc_i;
    f.upc_j = g.upc_j;
    f.b0 = ols.beta(0);
    f.b_own = ols.beta(1);
    f.b_cross = ols.beta(2);
    for (Eigen::Index c = 3; c < k; ++c) f.gamma.push_back(ols.beta(c));
    f.hc1 = ols.hc1;
    f.se_own = std::sqrt(std::max(0.0, ols.hc1(1, 1)));
    f.se_cross = std::sqrt(std::max(0.0, ols.hc1(2, 2)));
    f.own_ci_lo = f.b_own - kZ975 * f.se_own;
    f.own_ci_hi = f.b_own + kZ975 * f.se_own;
    f.cross_ci_lo = f.b_cross - kZ975 * f.se_cross;
    f.cross_ci_hi = f.b_cross + kZ975 * f.se_cross;
    auto pval = [](double b, double se) {
        if (se > 0.0) return std::erfc(std::abs(b / se) / std::sqrt(2.0));
        return b == 0.0 ? 1.0 : 0.0;
    };
    f.p_own = pval(f.b_own, f.se_own);
    f.p_cross = pval(f.b_cross, f.se_cross);
    f.n_train = static_cast<std::size_t>(n);
    f.n_val = static_cast<std::size_t>(g.x_val.rows());
    const Vector pred = design(g.x_val) * ols.beta;
    const Vector ones = Vector::Ones(pred.size());
    const auto err = masked_mae_rmse(pred, g.y_val, ones);
    f.val_mae = err.mae;
    f.val_rmse = err.rmse;
    try {
        f.val_r2 = masked_r2(pred, g.y_val, ones);
    } catch (const EvaluationError&) {
    }
    o.fit = std::move(f);
    return o;
}

std::vector<PairwiseGroup> build_pairwise_groups(const std::vector<panel::FeatureRow>& features, panel::WeekRange train,
                                                 panel::WeekRange val,
                                                 const std::vector<std::pair<std::string, std::string>>* pairs) {
    // store -> upc -> week -> row
    std::map<std::string, std::map<std::string, std::map<int, const panel::FeatureRow*>>> index;
    for (const auto& fr : features) {
        if (fr.is_synthetic_row) continue;
        index[fr.row.raw.store_code][fr.row.raw.upc_code][fr.row.raw.week_id] = &fr;
    }
    std::set<std::pair<std::string, std::string>> allowed;
    if (pairs) allowed.insert(pairs->begin(), pairs->end());
    const auto& ctrl = control_table();
    const auto width = static_cast<Eigen::Index>(2 + ctrl.size());
    std::vector<PairwiseGroup> groups;
    for (const auto& [store, upcs] : index) {
        for (const auto& [ui, rows_i] : upcs) {
            for (const auto& [uj, rows_j] : upcs) {
                if (ui == uj) continue;
                if (pairs && !allowed.count({ui, uj})) continue;
                PairwiseGroup g;
                g.store = store;
                g.upc_i = ui;
                g.upc_j = uj;
                std::vector<std::vector<double>> tr, va;
                std::vector<double> ytr, yva;
                for (const auto& [week, fi] : rows_i) {
                    const bool in_train = train.contains(week), in_val = val.contains(week);
                    if (!in_train && !in_val) continue;
                    auto jt = rows_j.find(week);
                    if (jt == rows_j.end()) continue;
                    if (fi->miss_lag1_neighbor_mean) continue;
                    std::vector<double> x = {fi->row.log_price, jt->second->row.log_price};
                    for (const auto& c : ctrl) x.push_back(c.get(*fi));
                    if (in_train) {
                        tr.push_back(std::move(x));
                        ytr.push_back(fi->row.log_demand);
                        g.weeks_train.push_back(week);
                    } else {
                        va.push_back(std::move(x));
                        yva.push_back(fi->row.log_demand);
                        g.weeks_val.push_back(week);
                    }
                }
                if (tr.empty() && va.empty()) continue;
                auto to_matrix = [width](const std::vector<std::vector<double>>& rows) {
                    Matrix m(static_cast<Eigen::Index>(rows.size()), width);
                    for (std::size_t r = 0; r < rows.size(); ++r)
                        for (Eigen::Index c = 0; c < width; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
                    return m;
                };
                g.x_train = to_matrix(tr);
                g.x_val = to_matrix(va);
                g.y_train = Eigen::Map<Vector>(ytr.data(), static_cast<Eigen::Index>(ytr.size()));
                g.y_val = Eigen::Map<Vector>(yva.data(), static_cast<Eigen::Index>(yva.size()));
                groups.push_back(std::move(g));
            }
        }
    }
    return groups;
}

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkOutcome>& outcomes, int fold, bool header) {
    csv::Writer w(out);
    if (header)
        w.row({"fold", "store", "upc_i", "upc_j", "status", "reason", "n_train", "n_val", "b0", "b_own", "b_cross",
           "se_own", "se_cross", "own_ci_lo", "own_ci_hi", "cross_ci_lo", "cross_ci_hi", "p_own", "p_cross",
           "val_mae", "val_rmse", "val_r2"});
    const auto d = [](double v) { return csv::format_double(v); };
    for (const auto& o : outcomes) {
        if (!o.fit) {
            w.row({std::to_string(fold), o.store, o.upc_i, o.upc_j, "skipped", o.skip_reason, "", "", "", "", "", "", "",
                   "", "", "", "", "", "", "", "", ""});
            continue;
        }
        const auto& f = *o.fit;
        w.row({std::to_string(fold), f.store, f.upc_i, f.upc_j, "fitted", "", std::to_string(f.n_train),
               std::to_string(f.n_val), d(f.b0), d(f.b_own), d(f.b_cross), d(f.se_own), d(f.se_cross), d(f.own_ci_lo),
               d(f.own_ci_hi), d(f.cross_ci_lo), d(f.cross_ci_hi), d(f.p_own), d(f.p_cross), d(f.val_mae),
               d(f.val_rmse), f.val_r2 ? d(*f.val_r2) : std::string()});
    }
}

}  // namespace icdn::evaluation
