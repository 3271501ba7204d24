#include "icdn/csv.hpp"
#include "icdn/error.hpp"
#include "icdn/evaluation.hpp"

#include <istream>
#include <ostream>

namespace icdn::evaluation {

std::vector<ElasticityRecord> extract_elasticities(const model::ModelState& st,
                                                   std::span<const panel::WideInstance> split, int fold,
                                                   std::int64_t seed, int replicate) {
    if (!st.frozen_graph) throw GraphError("elasticity extraction needs a frozen graph");
    const auto& graph = *st.frozen_graph;
    const auto& products = st.universe.products;
    std::vector<ElasticityRecord> out;
    for (const auto& inst : split) {
        if (inst.observed() == 0) continue;
        const auto fo = model::forward(st, inst, graph, model::Mode::Eval);
        for (int i = 0; i < static_cast<int>(inst.size()); ++i) {
            if (inst.mask(i) < 0.5) continue;
            const auto& ui = products[static_cast<std::size_t>(i)].upc_code;
            out.push_back({"icdn", inst.store_code, ui, ui, inst.week_id, fold, seed, replicate,
                           model::elasticity_own(fo, i), std::nullopt, std::nullopt});
            for (int j : graph.neighbors[static_cast<std::size_t>(i)]) {
                if (inst.mask(j) < 0.5) continue;
                out.push_back({"icdn", inst.store_code, ui, products[static_cast<std::size_t>(j)].upc_code, inst.week_id,
                               fold, seed, replicate, *model::elasticity_cross(fo, i, j), std::nullopt, std::nullopt});
            }
        }
    }
    return out;
}

std::vector<ElasticityRecord> benchmark_records(const std::vector<BenchmarkOutcome>& outcomes, int fold, int replicate) {
    std::vector<ElasticityRecord> out;
    for (const auto& o : outcomes) {
        if (!o.fit) continue;
        const auto& f = *o.fit;
        ElasticityRecord own{"benchmark", f.store, f.upc_i, f.upc_i, -1, fold, -1, replicate, f.b_own, f.own_ci_lo, f.own_ci_hi};
        ElasticityRecord cross{"benchmark", f.store, f.upc_i, f.upc_j, -1, fold, -1, replicate, f.b_cross, f.cross_ci_lo,
                               f.cross_ci_hi};
        out.push_back(std::move(own));
        out.push_back(std::move(cross));
    }
    return out;
}

namespace {
const std::vector<std::string> kRecordColumns = {"source", "store", "i",         "j",        "week",    "fold",
                                                 "seed",   "replicate", "estimate", "ci_lo", "ci_hi"};
}

void write_records_csv(std::ostream& out, const std::vector<ElasticityRecord>& records) {
    csv::Writer w(out);
    w.row(kRecordColumns);
    const auto o = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
    for (const auto& r : records)
        w.row({r.source, r.store, r.upc_i, r.upc_j, std::to_string(r.week), std::to_string(r.fold),
               std::to_string(r.seed), std::to_string(r.replicate), csv::format_double(r.estimate), o(r.ci_lo),
               o(r.ci_hi)});
}

std::vector<ElasticityRecord> read_records_csv(std::istream& in) {
    const auto t = csv::Table::read_stream(in);
    std::vector<std::size_t> c;
    for (const auto& name : kRecordColumns) c.push_back(t.column(name));
    std::vector<ElasticityRecord> out;
    for (const auto& rec : t.records()) {
        const auto& f = rec.fields;
        if (f.size() != t.header().size()) throw ParseError(rec.line, "wrong number of fields");
        ElasticityRecord r;
        r.source = f[c[0]];
        r.store = f[c[1]];
        r.upc_i = f[c[2]];
        r.upc_j = f[c[3]];
        r.week = static_cast<int>(csv::parse_int(f[c[4]], rec.line, "week"));
        r.fold = static_cast<int>(csv::parse_int(f[c[5]], rec.line, "fold"));
        r.seed = csv::parse_int(f[c[6]], rec.line, "seed");
        r.replicate = static_cast<int>(csv::parse_int(f[c[7]], rec.line, "replicate"));
        r.estimate = csv::parse_double(f[c[8]], rec.line, "estimate");
        if (!f[c[9]].empty()) r.ci_lo = csv::parse_double(f[c[9]], rec.line, "ci_lo");
        if (!f[c[10]].empty()) r.ci_hi = csv::parse_double(f[c[10]], rec.line, "ci_hi");
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace icdn::evaluation
