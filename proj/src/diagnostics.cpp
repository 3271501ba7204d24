#include "icdn/error.hpp"
#include "icdn/evaluation.hpp"
#include "icdn/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <tuple>

namespace icdn::evaluation {

namespace {

using Key = std::tuple<std::string, std::string, std::string>;

struct KeyPoints {
    std::map<int, std::vector<double>> folds;
    std::map<int, std::vector<double>> replicates;
};

std::map<Key, KeyPoints> group_records(const std::vector<ElasticityRecord>& records) {
    std::map<Key, KeyPoints> out;
    for (const auto& r : records) {
        auto& kp = out[{r.store, r.upc_i, r.upc_j}];
        if (r.replicate >= 0)
            kp.replicates[r.replicate].push_back(r.estimate);
        else
            kp.folds[r.fold].push_back(r.estimate);
    }
    return out;
}

std::vector<double> medians(const std::map<int, std::vector<double>>& groups) {
    std::vector<double> out;
    for (const auto& [id, xs] : groups) out.push_back(stats::median(xs));
    return out;
}

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

std::optional<double> win(const std::optional<double>& mine, const std::optional<double>& theirs) {
    if (!mine || !theirs) return std::nullopt;
    if (*mine < *theirs) return 1.0;
    if (*mine == *theirs) return 0.5;
    return 0.0;
}

std::optional<double> mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return std::nullopt;
    return stats::mean(xs);
}

std::optional<double> median_of(std::vector<double> xs) {
    if (xs.empty()) return std::nullopt;
    return stats::median(std::move(xs));
}

SourceSummary summarize_source(const std::vector<const KeyStats*>& keys) {
    SourceSummary s;
    std::vector<double> widths, sds, fsds, cov, disp;
    double neg = 0, zero = 0, pos = 0;
    for (const auto* k : keys) {
        const int sg = sign_of(k->point);
        (sg < 0 ? neg : sg > 0 ? pos : zero) += 1.0;
        if (k->ci_width) widths.push_back(*k->ci_width);
        if (k->boot_sd) sds.push_back(*k->boot_sd);
        if (k->fold_sd) fsds.push_back(*k->fold_sd);
        if (k->coverage) cov.push_back(*k->coverage);
        if (k->dispersion_ratio) disp.push_back(*k->dispersion_ratio);
    }
    if (!keys.empty()) {
        const double n = static_cast<double>(keys.size());
        s.signs = {neg / n, zero / n, pos / n};
    }
    s.median_ci_width = median_of(widths);
    s.median_boot_sd = median_of(sds);
    s.median_fold_sd = median_of(fsds);
    s.mean_coverage = mean_of(cov);
    s.median_dispersion_ratio = median_of(disp);
    return s;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json key_json(const KeyStats& k) {
    return {{"folds", k.folds},          {"replicates", k.replicates}, {"point", k.point},
            {"ci_lo", opt(k.ci_lo)},     {"ci_hi", opt(k.ci_hi)},      {"ci_width", opt(k.ci_width)},
            {"boot_sd", opt(k.boot_sd)}, {"fold_sd", opt(k.fold_sd)},  {"coverage", opt(k.coverage)},
            {"dispersion_ratio", opt(k.dispersion_ratio)}};
}

nlohmann::json source_json(const SourceSummary& s) {
    return {{"sign_shares", {{"negative", s.signs.negative}, {"zero", s.signs.zero}, {"positive", s.signs.positive}}},
            {"median_ci_width", opt(s.median_ci_width)},
            {"median_boot_sd", opt(s.median_boot_sd)},
            {"median_fold_sd", opt(s.median_fold_sd)},
            {"mean_coverage", opt(s.mean_coverage)},
            {"median_dispersion_ratio", opt(s.median_dispersion_ratio)}};
}

}  // namespace

BootstrapCi percentile_ci(std::vector<double> estimates, double level) {
    if (estimates.empty()) throw EvaluationError("percentile CI of an empty set");
    if (!(level > 0.0 && level < 1.0)) throw DomainError("CI level must lie in (0, 1)");
    std::sort(estimates.begin(), estimates.end());
    const double a = (1.0 - level) / 2.0;
    return {stats::quantile_sorted(estimates, a), stats::quantile_sorted(estimates, 1.0 - a)};
}

KeyStats summarize_key(const std::map<int, std::vector<double>>& fold_points,
                       const std::map<int, std::vector<double>>& replicate_points) {
    KeyStats k;
    const auto folds = medians(fold_points);
    const auto reps = medians(replicate_points);
    k.folds = folds.size();
    k.replicates = reps.size();
    if (!folds.empty())
        k.point = stats::median(folds);
    else if (!reps.empty())
        k.point = stats::median(reps);
    if (reps.size() >= 2) {
        const auto ci = percentile_ci(reps);
        k.ci_lo = ci.lo;
        k.ci_hi = ci.hi;
        k.ci_width = ci.hi - ci.lo;
        k.boot_sd = stats::sample_sd(reps);
        if (!folds.empty()) {
            std::size_t inside = 0;
            for (double f : folds)
                if (f >= ci.lo && f <= ci.hi) ++inside;
            k.coverage = static_cast<double>(inside) / static_cast<double>(folds.size());
        }
    }
    if (folds.size() >= 3) {
        k.fold_sd = stats::sample_sd(folds);
        if (k.boot_sd && *k.fold_sd > 0.0) k.dispersion_ratio = *k.boot_sd / *k.fold_sd;
    }
    return k;
}

PairedSummary paired_summary(const std::string& metric, std::span<const double> icdn, std::span<const double> bench) {
    if (icdn.size() != bench.size()) throw ShapeError("paired samples differ in length");
    PairedSummary s;
    s.metric = metric;
    s.n = icdn.size();
    if (s.n == 0) return s;
    std::vector<double> d(s.n);
    for (std::size_t t = 0; t < s.n; ++t) d[t] = icdn[t] - bench[t];
    s.mean_delta = stats::mean(d);
    s.sd_delta = stats::sample_sd(d);
    if (s.n >= 2 && s.sd_delta > 0.0) s.t_stat = s.mean_delta / (s.sd_delta / std::sqrt(static_cast<double>(s.n)));
    std::vector<std::pair<double, double>> nz;  // |d|, d
    std::size_t positive = 0;
    for (double x : d) {
        if (x > 0.0) ++positive;
        if (x != 0.0) nz.emplace_back(std::abs(x), x);
    }
    s.share_positive = static_cast<double>(positive) / static_cast<double>(s.n);
    std::sort(nz.begin(), nz.end());
    for (std::size_t a = 0; a < nz.size();) {
        std::size_t b = a;
        while (b < nz.size() && nz[b].first == nz[a].first) ++b;
        const double rank = (static_cast<double>(a + 1) + static_cast<double>(b)) / 2.0;  // average rank of the tie run
        for (std::size_t t = a; t < b; ++t) (nz[t].second > 0.0 ? s.signed_rank_plus : s.signed_rank_minus) += rank;
        a = b;
    }
    return s;
}

DiagnosticsReport stability_diagnostics(const std::vector<ElasticityRecord>& icdn,
                                        const std::vector<ElasticityRecord>& benchmark,
                                        const std::vector<PairedSample>& paired) {
    DiagnosticsReport rep;
    const auto a = group_records(icdn);
    const auto b = group_records(benchmark);
    std::vector<double> narrower, lower, stable;
    std::size_t same = 0;
    for (const auto& [key, kp] : a) {
        auto it = b.find(key);
        if (it == b.end()) continue;
        MatchedKey m;
        std::tie(m.store, m.upc_i, m.upc_j) = key;
        m.icdn = summarize_key(kp.folds, kp.replicates);
        m.benchmark = summarize_key(it->second.folds, it->second.replicates);
        m.same_sign = sign_of(m.icdn.point) == sign_of(m.benchmark.point);
        if (m.same_sign) ++same;
        m.icdn_narrower_ci = win(m.icdn.ci_width, m.benchmark.ci_width);
        m.icdn_lower_sd = win(m.icdn.boot_sd, m.benchmark.boot_sd);
        m.icdn_more_stable = win(m.icdn.fold_sd, m.benchmark.fold_sd);
        if (m.icdn_narrower_ci) narrower.push_back(*m.icdn_narrower_ci);
        if (m.icdn_lower_sd) lower.push_back(*m.icdn_lower_sd);
        if (m.icdn_more_stable) stable.push_back(*m.icdn_more_stable);
        rep.keys.push_back(std::move(m));
    }
    rep.matched = rep.keys.size();
    rep.empty_warning = rep.matched == 0;
    if (rep.matched > 0) rep.same_sign_rate = static_cast<double>(same) / static_cast<double>(rep.matched);
    rep.narrower_ci_rate = mean_of(narrower);
    rep.lower_sd_rate = mean_of(lower);
    rep.more_stable_rate = mean_of(stable);
    std::vector<const KeyStats*> ki, kb;
    for (const auto& m : rep.keys) {
        ki.push_back(&m.icdn);
        kb.push_back(&m.benchmark);
    }
    rep.icdn = summarize_source(ki);
    rep.benchmark = summarize_source(kb);

    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_metric;
    for (const auto& p : paired) {
        auto& slot = by_metric[p.metric];
        slot.first.push_back(p.icdn);
        slot.second.push_back(p.benchmark);
    }
    for (const auto& [metric, xs] : by_metric) rep.paired.push_back(paired_summary(metric, xs.first, xs.second));
    return rep;
}

std::string to_json(const DiagnosticsReport& r) {
    nlohmann::json keys = nlohmann::json::array();
    for (const auto& m : r.keys)
        keys.push_back({{"store", m.store},
                        {"i", m.upc_i},
                        {"j", m.upc_j},
                        {"icdn", key_json(m.icdn)},
                        {"benchmark", key_json(m.benchmark)},
                        {"same_sign", m.same_sign},
                        {"icdn_narrower_ci", opt(m.icdn_narrower_ci)},
                        {"icdn_lower_sd", opt(m.icdn_lower_sd)},
                        {"icdn_more_stable", opt(m.icdn_more_stable)}});
    nlohmann::json paired = nlohmann::json::array();
    for (const auto& p : r.paired)
        paired.push_back({{"metric", p.metric},
                          {"n", p.n},
                          {"mean_delta", p.mean_delta},
                          {"sd_delta", p.sd_delta},
                          {"t_stat", opt(p.t_stat)},
                          {"signed_rank_plus", p.signed_rank_plus},
                          {"signed_rank_minus", p.signed_rank_minus},
                          {"share_positive", p.share_positive}});
    nlohmann::json j{{"matched_keys", r.matched},
                     {"empty_warning", r.empty_warning},
                     {"same_sign_rate", r.same_sign_rate},
                     {"win_rates",
                      {{"narrower_ci", opt(r.narrower_ci_rate)},
                       {"lower_bootstrap_sd", opt(r.lower_sd_rate)},
                       {"more_fold_stable", opt(r.more_stable_rate)}}},
                     {"icdn", source_json(r.icdn)},
                     {"benchmark", source_json(r.benchmark)},
                     {"paired", std::move(paired)},
                     {"keys", std::move(keys)}};
    return j.dump(2);
}

}  // namespace icdn::evaluation
