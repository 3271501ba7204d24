#include "icdn/error.hpp"
#include "icdn/panel.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <tuple>
#include <unordered_map>

namespace icdn::panel {

std::vector<WideInstance> assemble_wide(const std::vector<FeatureRow>& fp, const Universe& universe) {
    const std::size_t n = universe.size();
    const auto& feats = token_features();
    const auto d_tok = static_cast<Eigen::Index>(feats.size());
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index.emplace(universe.products[i].upc_code, i);

    std::vector<double> col_sum(n, 0.0);
    std::vector<std::size_t> col_count(n, 0);
    std::map<std::string, std::map<int, std::vector<const FeatureRow*>>> by_store_week;
    for (const auto& r : fp) {
        auto it = index.find(r.row.raw.upc_code);
        if (it == index.end() || r.is_synthetic_row || !std::isfinite(r.row.log_price)) continue;
        col_sum[it->second] += r.row.log_price;
        ++col_count[it->second];
        by_store_week[r.row.raw.store_code][r.row.raw.week_id].push_back(&r);
    }
    for (std::size_t i = 0; i < n; ++i)
        if (col_count[i] == 0)
            throw DomainError("UPC '" + universe.products[i].upc_code + "' is never priced; no column mean available");

    std::vector<WideInstance> out;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& [store, weeks] : by_store_week) {
        const std::size_t first = out.size();
        for (const auto& [week, rows] : weeks) {
            WideInstance inst;
            inst.store_code = store;
            inst.week_id = week;
            inst.log_price = Vector::Constant(static_cast<Eigen::Index>(n), nan);
            inst.log_demand = Vector::Zero(static_cast<Eigen::Index>(n));
            inst.mask = Vector::Zero(static_cast<Eigen::Index>(n));
            inst.tokens = Matrix::Zero(static_cast<Eigen::Index>(n), d_tok);
            for (const auto* r : rows) {
                const auto i = static_cast<Eigen::Index>(index.at(r->row.raw.upc_code));
                inst.log_price[i] = r->row.log_price;
                inst.log_demand[i] = r->row.log_demand;
                inst.mask[i] = 1.0;
                for (Eigen::Index c = 0; c < d_tok; ++c) inst.tokens(i, c) = feats[static_cast<std::size_t>(c)].get(*r);
            }
            out.push_back(std::move(inst));
        }
        // forward fill, backward fill, then the UPC's overall column mean
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            double last = nan;
            for (std::size_t k = first; k < out.size(); ++k) {
                if (std::isnan(out[k].log_price[ii])) out[k].log_price[ii] = last;
                else last = out[k].log_price[ii];
            }
            double next = nan;
            for (std::size_t k = out.size(); k-- > first;) {
                if (std::isnan(out[k].log_price[ii])) out[k].log_price[ii] = next;
                else next = out[k].log_price[ii];
            }
            const double mean = col_sum[i] / static_cast<double>(col_count[i]);
            for (std::size_t k = first; k < out.size(); ++k)
                if (std::isnan(out[k].log_price[ii])) out[k].log_price[ii] = mean;
        }
    }
    return out;
}

void attach_smoothed_targets(std::vector<WideInstance>& instances, int window) {
    if (window < 1) throw DomainError("smoothing window must be >= 1");
    std::vector<std::size_t> order(instances.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(instances[a].store_code, instances[a].week_id) <
               std::tie(instances[b].store_code, instances[b].week_id);
    });
    std::map<std::pair<std::string, Eigen::Index>, std::deque<double>> history;
    for (auto k : order) {
        auto& inst = instances[k];
        const auto n = inst.log_demand.size();
        inst.demand_smoothed.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
        for (Eigen::Index i = 0; i < n; ++i) {
            if (inst.mask[i] < 0.5) continue;
            auto& h = history[{inst.store_code, i}];
            h.push_back(inst.log_demand[i]);
            if (static_cast<int>(h.size()) > window) h.pop_front();
            double s = 0.0;
            for (double v : h) s += v;
            inst.demand_smoothed[static_cast<std::size_t>(i)] = s / static_cast<double>(h.size());
        }
    }
}

}  // namespace icdn::panel
