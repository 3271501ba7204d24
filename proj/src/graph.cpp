#include "icdn/error.hpp"
#include "icdn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace icdn::model {

Vector attention_weights(std::span<const double> logits) {
    if (logits.empty()) throw GraphError("attention over an empty edge set");
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vector w(static_cast<Eigen::Index>(logits.size()));
    double z = 0.0;
    for (std::size_t t = 0; t < logits.size(); ++t) {
        w(static_cast<Eigen::Index>(t)) = std::exp(logits[t] - mx);
        z += w(static_cast<Eigen::Index>(t));
    }
    return w / z;
}

SparseGraph select_graph(const Matrix& s, int k, bool category_priority, std::span<const int> category_of,
                         GraphProvenance provenance) {
    const auto n = static_cast<int>(s.rows());
    if (s.cols() != s.rows()) throw ShapeError("score matrix must be square");
    if (n < 2) throw GraphError("graph selection needs at least two products");
    if (k < 1) throw GraphError("neighbor count must be >= 1");
    if (category_priority && category_of.size() != static_cast<std::size_t>(n))
        throw ShapeError("category table does not cover the score matrix");
    SparseGraph g;
    g.k_eff = std::min(k, n - 1);
    g.provenance = provenance;
    g.neighbors.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<int> cand;
        for (int j = 0; j < n; ++j)
            if (j != i) cand.push_back(j);
        // Lexicographic (same category, score) ranking; identical to adding a
        // large constant to same-category scores but free of rounding.
        auto same = [&](int j) {
            return category_priority && category_of[static_cast<std::size_t>(i)] == category_of[static_cast<std::size_t>(j)];
        };
        std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
            const bool sa = same(a), sb = same(b);
            if (sa != sb) return sa;
            return s(i, a) > s(i, b);
        });
        cand.resize(static_cast<std::size_t>(g.k_eff));
        g.neighbors[static_cast<std::size_t>(i)] = std::move(cand);
    }
    return g;
}

SparseGraph select_online_graph(std::span<const Matrix> batch_scores, int k, bool category_priority,
                                std::span<const int> category_of) {
    if (batch_scores.empty()) throw GraphError("online graph needs at least one score matrix");
    Matrix mean = batch_scores.front();
    for (std::size_t b = 1; b < batch_scores.size(); ++b) {
        if (batch_scores[b].rows() != mean.rows() || batch_scores[b].cols() != mean.cols())
            throw ShapeError("score matrices in a batch differ in shape");
        mean += batch_scores[b];
    }
    mean /= static_cast<double>(batch_scores.size());
    return select_graph(mean, k, category_priority, category_of, GraphProvenance::Online);
}

SparseGraph freeze_graph(const ModelState& st, std::span<const panel::WideInstance> train) {
    if (train.empty()) throw GraphError("cannot freeze a graph on an empty split");
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (train[a].store_code != train[b].store_code) return train[a].store_code < train[b].store_code;
        return train[a].week_id < train[b].week_id;
    });
    const auto n = static_cast<Eigen::Index>(st.products());
    Matrix sum = Matrix::Zero(n, n);
    for (std::size_t idx : order) sum += encode(st, train[idx], Mode::Eval).scores;
    sum /= static_cast<double>(train.size());
    return select_graph(sum, st.config.neighbors, st.config.category_priority, st.category_of, GraphProvenance::Frozen);
}

}  // namespace icdn::model
