#include "icdn/error.hpp"
#include "icdn/training.hpp"

#include <cmath>

namespace icdn::training {

namespace {

using model::Encoded;
using model::ForwardOutput;
using model::Parameters;

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double huber_grad(double r, double delta) {
    if (std::abs(r) <= delta) return r;
    return r > 0.0 ? delta : -delta;
}

double band_grad(const BandEntry& e) {
    return 2.0 * std::max(0.0, e.value - e.hi) - 2.0 * std::max(0.0, e.lo - e.value);
}

Vector targets_of(const panel::WideInstance& inst, bool smoothed) {
    if (!smoothed) return inst.log_demand;
    if (inst.demand_smoothed.size() != inst.size())
        throw ShapeError("smoothed targets missing for store " + inst.store_code + " week " + std::to_string(inst.week_id));
    return Eigen::Map<const Vector>(inst.demand_smoothed.data(), static_cast<Eigen::Index>(inst.demand_smoothed.size()));
}

struct Prepared {
    std::vector<Encoded> enc;
    std::vector<const panel::WideInstance*> inst;
    model::SparseGraph graph;
    std::size_t skipped = 0;
};

Prepared prepare(const model::ModelState& st, std::span<const panel::WideInstance* const> batch, const BatchOptions& o) {
    Prepared p;
    for (const auto* inst : batch) {
        if (inst->observed() == 0) {
            ++p.skipped;
            continue;
        }
        p.enc.push_back(model::encode(st, *inst, o.mode, o.dropout_rng));
        p.inst.push_back(inst);
    }
    if (p.enc.empty()) return p;
    if (o.graph == GraphSource::Frozen) {
        if (o.frozen == nullptr) throw GraphError("frozen graph requested but not supplied");
        p.graph = *o.frozen;
    } else {
        std::vector<Matrix> scores;
        scores.reserve(p.enc.size());
        for (const auto& e : p.enc) scores.push_back(e.scores);
        p.graph = model::select_online_graph(scores, st.config.neighbors, st.config.category_priority, st.category_of);
    }
    return p;
}

// Accumulates d(weight * instance total)/d(params) into `g`.
void backward_instance(const model::ModelState& st, const Encoded& enc, const ForwardOutput& out,
                       const Vector& target, const Vector& mask, const LossConfig& cfg, double weight, Parameters& g) {
    const Parameters& p = st.params;
    const auto n = static_cast<Eigen::Index>(st.products());
    const int K = st.config.basis_count;
    const Eigen::Index dh = enc.latent.cols();
    const auto& surf = out.surface;
    const auto& B = out.basis;
    const Vector& u = out.log_price;

    std::size_t nm = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (mask(i) > 0.5) ++nm;
    const double inv_nm = 1.0 / static_cast<double>(nm);

    // Loss -> surface quantities.
    Vector gy = Vector::Zero(n), gE = Vector::Zero(n), gk = Vector::Zero(n);
    std::vector<double> gX(surf.edges().size(), 0.0);
    const auto entries = band_entries(out, mask, cfg);
    const double band_scale = entries.empty() ? 0.0 : weight * cfg.lambda_elast / static_cast<double>(entries.size());
    std::size_t t = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (mask(i) < 0.5) continue;
        gy(i) = weight * inv_nm * huber_grad(out.prediction(i) - target(i), cfg.delta);
        gk(i) = weight * cfg.lambda_smooth * inv_nm * 2.0 * model::curvature(out, static_cast<int>(i));
        // band_entries emits the own entry, then the observed edges, per focal row.
        gE(i) = band_scale * band_grad(entries[t++]);
        for (int e : surf.edges_of()[static_cast<std::size_t>(i)]) {
            const auto& ed = surf.edges()[static_cast<std::size_t>(e)];
            if (mask(ed.other) < 0.5) continue;
            gX[static_cast<std::size_t>(e)] = band_scale * band_grad(entries[t++]);
        }
    }

    Matrix dH = Matrix::Zero(n, dh);
    Matrix dQ = Matrix::Zero(n, enc.query.cols());
    Matrix dK = Matrix::Zero(n, enc.key.cols());
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(st.config.attention_dim));

    for (Eigen::Index i = 0; i < n; ++i) {
        const auto si = static_cast<std::size_t>(i);
        const auto& own = surf.own()[si];
        const auto& bi = B[si];
        const Vector h = enc.latent.row(i).transpose();

        // Own head.
        const double d_intercept = gy(i);
        const double d_slope = gy(i) * u(i) + gE(i);
        const double d_raw = d_slope * -sigmoid(own.slope_raw);
        const Vector d_w = gy(i) * bi.value + gE(i) * bi.first + gk(i) * bi.second;
        if (d_intercept != 0.0 || d_raw != 0.0 || d_w.squaredNorm() != 0.0) {
            g.intercept_weight.row(0) += d_intercept * h.transpose();
            g.intercept_bias(0, 0) += d_intercept;
            g.own_slope_weight.row(0) += d_raw * h.transpose();
            g.own_slope_bias(0, 0) += d_raw;
            g.own_spline_weight += d_w * h.transpose();
            g.own_spline_bias.col(0) += d_w;
            dH.row(i) += d_intercept * p.intercept_weight.row(0) + d_raw * p.own_slope_weight.row(0) +
                         (p.own_spline_weight.transpose() * d_w).transpose();
        }

        // Edges of focal i.
        const auto& eidx = surf.edges_of()[si];
        if (eidx.empty()) continue;
        std::vector<double> da(eidx.size());
        for (std::size_t q = 0; q < eidx.size(); ++q) {
            const auto e = static_cast<std::size_t>(eidx[q]);
            const auto& ed = surf.edges()[e];
            const auto sj = static_cast<std::size_t>(ed.other);
            const auto& bj = B[sj];
            const Matrix& U = ed.head.interaction;
            const Vector Ub = U * bj.value;
            const Vector Ubp = U * bj.first;
            const double term = ed.head.slope * u(ed.other) + ed.head.spline.dot(bj.value) + bi.value.dot(Ub);
            const double inner = ed.head.slope + ed.head.spline.dot(bj.first) + bi.value.dot(Ubp);
            da[q] = gy(i) * term + gE(i) * bi.first.dot(Ub) + gk(i) * bi.second.dot(Ub) + gX[e] * inner;

            const double a = ed.weight;
            const double d_beta = a * (gy(i) * u(ed.other) + gX[e]);
            const Vector d_spl = a * (gy(i) * bj.value + gX[e] * bj.first);
            const Vector left = gy(i) * bi.value + gE(i) * bi.first + gk(i) * bi.second;
            const Matrix dU = a * (left * bj.value.transpose() + gX[e] * bi.value * bj.first.transpose());
            if (d_beta == 0.0 && d_spl.squaredNorm() == 0.0 && dU.squaredNorm() == 0.0) continue;
            Vector dvec(K * K);
            for (int r = 0; r < K; ++r)
                for (int c = 0; c < K; ++c) dvec(r * K + c) = dU(r, c);
            Vector z(2 * dh);
            z << h, enc.latent.row(ed.other).transpose();
            g.cross_slope_weight.row(0) += d_beta * z.transpose();
            g.cross_slope_bias(0, 0) += d_beta;
            g.cross_spline_weight += d_spl * z.transpose();
            g.cross_spline_bias.col(0) += d_spl;
            g.interaction_weight += dvec * z.transpose();
            g.interaction_bias.col(0) += dvec;
            const Vector dz = d_beta * p.cross_slope_weight.row(0).transpose() +
                              p.cross_spline_weight.transpose() * d_spl + p.interaction_weight.transpose() * dvec;
            dH.row(i) += dz.head(dh).transpose();
            dH.row(ed.other) += dz.tail(dh).transpose();
        }
        // Softmax over the selected logits of focal i.
        double mean_da = 0.0;
        for (std::size_t q = 0; q < eidx.size(); ++q) mean_da += surf.edges()[static_cast<std::size_t>(eidx[q])].weight * da[q];
        for (std::size_t q = 0; q < eidx.size(); ++q) {
            const auto& ed = surf.edges()[static_cast<std::size_t>(eidx[q])];
            const double ds = ed.weight * (da[q] - mean_da) * inv_sqrt;
            if (ds == 0.0) continue;
            dQ.row(i) += ds * enc.key.row(ed.other);
            dK.row(ed.other) += ds * enc.query.row(i);
        }
    }

    // Attention projections.
    g.query += dQ.transpose() * enc.latent;
    g.key += dK.transpose() * enc.latent;
    dH += dQ * p.query + dK * p.key;

    // Encoder stack, last layer first.
    Matrix d_out = dH;
    for (std::size_t l = p.encoder_weight.size(); l-- > 0;) {
        if (!enc.dropout_mask.empty()) d_out = d_out.cwiseProduct(enc.dropout_mask[l]);
        const Matrix& act = enc.activations[l];
        const Matrix dz = d_out.cwiseProduct((1.0 - act.array().square()).matrix());
        Matrix layer_in;
        if (l == 0) {
            layer_in = enc.input;
        } else {
            layer_in = enc.activations[l - 1];
            if (!enc.dropout_mask.empty()) layer_in = layer_in.cwiseProduct(enc.dropout_mask[l - 1]);
        }
        g.encoder_weight[l] += dz.transpose() * layer_in;
        g.encoder_bias[l].col(0) += dz.colwise().sum().transpose();
        d_out = dz * p.encoder_weight[l];
    }

    // Embedding rows.
    const Eigen::Index E = st.config.embedding_dim;
    if (E > 0) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto si = static_cast<std::size_t>(i);
            const Eigen::Index idx[model::kCategoricalFields] = {enc.store, i + 1, st.brand_of[si], st.style_of[si],
                                                                 st.category_of[si]};
            for (int f = 0; f < model::kCategoricalFields; ++f)
                g.embeddings[static_cast<std::size_t>(f)].row(idx[f]) += d_out.block(i, f * E, 1, E);
        }
    }
}

LossBreakdown average(const std::vector<LossBreakdown>& parts, const LossConfig& cfg) {
    LossBreakdown lb;
    if (parts.empty()) return lb;
    for (const auto& q : parts) {
        lb.fit += q.fit;
        lb.smooth += q.smooth;
        lb.band += q.band;
        lb.n_mask += q.n_mask;
        lb.n_elast += q.n_elast;
    }
    const double inv = 1.0 / static_cast<double>(parts.size());
    lb.fit *= inv;
    lb.smooth *= inv;
    lb.band *= inv;
    lb.total = lb.fit + cfg.lambda_smooth * lb.smooth + cfg.lambda_elast * lb.band;
    return lb;
}

}  // namespace

GradientResult compute_gradients(const model::ModelState& st, std::span<const panel::WideInstance* const> batch,
                                 const LossConfig& cfg, const BatchOptions& opts) {
    Prepared prep = prepare(st, batch, opts);
    GradientResult res;
    res.grad = st.params.zeros_like();
    res.skipped = prep.skipped;
    res.used = prep.enc.size();
    if (prep.enc.empty()) return res;
    res.graph = prep.graph;
    const double weight = 1.0 / static_cast<double>(res.used);
    std::vector<LossBreakdown> parts;
    for (std::size_t b = 0; b < prep.enc.size(); ++b) {
        const auto& inst = *prep.inst[b];
        const ForwardOutput out = model::surface_forward(st, prep.enc[b], inst.log_price, prep.graph);
        const Vector target = targets_of(inst, opts.smoothed_targets);
        parts.push_back(instance_loss(out, target, inst.mask, cfg));
        backward_instance(st, prep.enc[b], out, target, inst.mask, cfg, weight, res.grad);
    }
    res.loss = average(parts, cfg);
    if (opts.freeze_nonlinear) {
        res.grad.visit([](const std::string&, Matrix& m, model::BlockInfo info) {
            if (info.nonlinear_head) m.setZero();
        });
    }
    res.grad.visit([](const std::string& name, const Matrix& m, model::BlockInfo) {
        if (!m.allFinite()) throw NanGuardError(name);
    });
    return res;
}

LossBreakdown batch_loss(const model::ModelState& st, std::span<const panel::WideInstance* const> batch,
                         const LossConfig& cfg, const BatchOptions& opts) {
    Prepared prep = prepare(st, batch, opts);
    std::vector<LossBreakdown> parts;
    for (std::size_t b = 0; b < prep.enc.size(); ++b) {
        const auto& inst = *prep.inst[b];
        const ForwardOutput out = model::surface_forward(st, prep.enc[b], inst.log_price, prep.graph);
        parts.push_back(instance_loss(out, targets_of(inst, opts.smoothed_targets), inst.mask, cfg));
    }
    return average(parts, cfg);
}

}  // namespace icdn::training
