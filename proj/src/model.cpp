#include "icdn/model.hpp"

#include "icdn/error.hpp"
#include "icdn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>

namespace icdn::model {

void ModelConfig::validate() const {
    if (basis_count < 1) throw ConfigError("basis_count must be >= 1");
    if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
    for (int h : hidden)
        if (h < 1) throw ConfigError("hidden widths must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (attention_dim < 1) throw ConfigError("attention_dim must be >= 1");
    if (neighbors < 1) throw ConfigError("neighbors must be >= 1");
    if (embedding_dim < 0) throw ConfigError("embedding_dim must be >= 0");
}

Parameters Parameters::zeros_like() const {
    Parameters z = *this;
    z.visit([](const std::string&, Matrix& m, BlockInfo) { m.setZero(); });
    return z;
}

std::size_t Parameters::scalar_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Matrix& m, BlockInfo) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

// --- token scaling ----------------------------------------------------------

TokenScaler TokenScaler::fit(std::span<const panel::WideInstance> train) {
    const auto& feats = panel::token_features();
    const std::size_t d = feats.size();
    TokenScaler s;
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 1.0);
    s.standardize.resize(d);
    for (std::size_t f = 0; f < d; ++f) {
        s.standardize[f] = feats[f].standardize;
        if (!feats[f].standardize) continue;
        std::vector<double> xs;
        for (const auto& inst : train)
            for (Eigen::Index i = 0; i < inst.mask.size(); ++i)
                if (inst.mask(i) > 0.5) xs.push_back(inst.tokens(i, static_cast<Eigen::Index>(f)));
        if (xs.empty()) continue;
        s.mean[f] = stats::mean(xs);
        const double sd = stats::sample_sd(xs);
        s.scale[f] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

Matrix TokenScaler::apply(const panel::WideInstance& inst) const {
    const auto n = static_cast<Eigen::Index>(inst.size());
    const auto d = static_cast<Eigen::Index>(mean.size());
    if (inst.tokens.rows() != n || inst.tokens.cols() != d)
        throw ShapeError("token matrix is " + std::to_string(inst.tokens.rows()) + "x" +
                         std::to_string(inst.tokens.cols()) + ", expected " + std::to_string(n) + "x" +
                         std::to_string(d));
    Matrix out = Matrix::Zero(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (inst.mask(i) < 0.5) continue;
        for (Eigen::Index f = 0; f < d; ++f) {
            const double x = inst.tokens(i, f);
            out(i, f) = standardize[static_cast<std::size_t>(f)] ? (x - mean[f]) / scale[f] : x;
        }
    }
    return out;
}

// --- state ------------------------------------------------------------------

bool SparseGraph::contains(int i, int j) const {
    if (i < 0 || static_cast<std::size_t>(i) >= neighbors.size()) return false;
    const auto& row = neighbors[static_cast<std::size_t>(i)];
    return std::find(row.begin(), row.end(), j) != row.end();
}

std::size_t SparseGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& row : neighbors) n += row.size();
    return n;
}

int ModelState::store_index(const std::string& store) const {
    auto it = std::lower_bound(stores.begin() + (stores.empty() ? 0 : 1), stores.end(), store);
    if (it != stores.end() && *it == store) return static_cast<int>(it - stores.begin());
    return 0;
}

int ModelState::input_dim() const {
    return kCategoricalFields * config.embedding_dim + static_cast<int>(panel::token_features().size());
}

Matrix metadata_bonus(const panel::Universe& universe, const ModelConfig& config) {
    const auto n = static_cast<Eigen::Index>(universe.size());
    Matrix xi = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& a = universe.products[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const auto& b = universe.products[static_cast<std::size_t>(j)];
            double v = 0.0;
            if (a.brand_family == b.brand_family) v += config.bonus_brand;
            if (a.style_segment == b.style_segment) v += config.bonus_style;
            v -= config.bonus_size * std::abs(std::log(a.liters) - std::log(b.liters));
            xi(i, j) = v;
        }
    }
    return xi;
}

namespace {

std::vector<std::string> vocabulary(std::set<std::string> values) {
    std::vector<std::string> v{"<unknown>"};
    v.insert(v.end(), values.begin(), values.end());
    return v;
}

int vocab_index(const std::vector<std::string>& vocab, const std::string& key) {
    auto it = std::lower_bound(vocab.begin() + 1, vocab.end(), key);
    if (it != vocab.end() && *it == key) return static_cast<int>(it - vocab.begin());
    return 0;
}

Matrix glorot(Rng& rng, Eigen::Index out, Eigen::Index in, double gain) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(in + out));
    Matrix m(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) m(r, c) = uniform(rng, -bound, bound);
    return m;
}

constexpr double kHeadGain = 0.1;
constexpr double kEmbeddingBound = 0.1;

}  // namespace

ModelState initialize_model(const ModelConfig& config, const panel::Universe& universe,
                            std::span<const panel::WideInstance> train, std::uint64_t seed) {
    config.validate();
    if (universe.size() == 0) throw InsufficientDataError("empty product universe");
    if (train.empty()) throw InsufficientDataError("empty training split");
    const std::size_t n = universe.size();
    const int K = config.basis_count;

    ModelState st;
    st.config = config;
    st.universe = universe;
    st.seed = seed;

    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> observed, all;
        for (const auto& inst : train) {
            if (inst.size() != n) throw ShapeError("instance width does not match the product universe");
            all.push_back(inst.log_price(static_cast<Eigen::Index>(i)));
            if (inst.mask(static_cast<Eigen::Index>(i)) > 0.5) observed.push_back(all.back());
        }
        // Products seen too rarely in the training weeks fall back to imputed prices.
        st.splines.push_back(spline::fit_spline_spec(observed.size() >= 2 ? observed : all, K));
    }

    std::set<std::string> stores, brands, styles, cats;
    for (const auto& inst : train) stores.insert(inst.store_code);
    for (const auto& p : universe.products) {
        brands.insert(p.brand_family);
        styles.insert(p.style_segment);
        cats.insert(p.category_code);
    }
    st.stores = vocabulary(stores);
    st.brands = vocabulary(brands);
    st.styles = vocabulary(styles);
    st.categories = vocabulary(cats);
    for (const auto& p : universe.products) {
        st.brand_of.push_back(vocab_index(st.brands, p.brand_family));
        st.style_of.push_back(vocab_index(st.styles, p.style_segment));
        st.category_of.push_back(vocab_index(st.categories, p.category_code));
    }
    st.scaler = TokenScaler::fit(train);
    st.metadata_bonus = metadata_bonus(universe, config);

    Rng rng = make_stream(seed, "init");
    Parameters& p = st.params;
    const Eigen::Index E = config.embedding_dim;
    const Eigen::Index vocab_sizes[kCategoricalFields] = {
        static_cast<Eigen::Index>(st.stores.size()), static_cast<Eigen::Index>(n + 1),
        static_cast<Eigen::Index>(st.brands.size()), static_cast<Eigen::Index>(st.styles.size()),
        static_cast<Eigen::Index>(st.categories.size())};
    for (Eigen::Index v : vocab_sizes) {
        Matrix m(v, E);
        for (Eigen::Index r = 0; r < v; ++r)
            for (Eigen::Index c = 0; c < E; ++c) m(r, c) = uniform(rng, -kEmbeddingBound, kEmbeddingBound);
        p.embeddings.push_back(std::move(m));
    }
    Eigen::Index in = st.input_dim();
    for (int width : config.hidden) {
        p.encoder_weight.push_back(glorot(rng, width, in, 1.0));
        p.encoder_bias.push_back(Matrix::Zero(width, 1));
        in = width;
    }
    const Eigen::Index dh = config.latent_dim();
    p.intercept_weight = glorot(rng, 1, dh, kHeadGain);
    double ybar = 0.0;
    std::size_t cnt = 0;
    for (const auto& inst : train)
        for (Eigen::Index i = 0; i < inst.mask.size(); ++i)
            if (inst.mask(i) > 0.5) {
                ybar += inst.log_demand(i);
                ++cnt;
            }
    p.intercept_bias = Matrix::Constant(1, 1, cnt ? ybar / static_cast<double>(cnt) : 0.0);
    p.own_slope_weight = glorot(rng, 1, dh, kHeadGain);
    p.own_slope_bias = Matrix::Constant(1, 1, inverse_softplus(2.0));
    p.own_spline_weight = glorot(rng, K, dh, kHeadGain);
    p.own_spline_bias = Matrix::Zero(K, 1);
    p.cross_slope_weight = glorot(rng, 1, 2 * dh, kHeadGain);
    p.cross_slope_bias = Matrix::Zero(1, 1);
    p.cross_spline_weight = glorot(rng, K, 2 * dh, kHeadGain);
    p.cross_spline_bias = Matrix::Zero(K, 1);
    p.interaction_weight = glorot(rng, K * K, 2 * dh, kHeadGain);
    p.interaction_bias = Matrix::Zero(K * K, 1);
    p.query = glorot(rng, config.attention_dim, dh, 1.0);
    p.key = glorot(rng, config.attention_dim, dh, 1.0);
    return st;
}

// --- stage A ----------------------------------------------------------------

namespace {

void run_encoder(const ModelState& st, Encoded& enc, Mode mode, Rng* rng) {
    const auto& p = st.params;
    if (enc.input.cols() != p.encoder_weight.front().cols())
        throw ShapeError("encoder input has " + std::to_string(enc.input.cols()) + " columns, expected " +
                         std::to_string(p.encoder_weight.front().cols()));
    if (!enc.input.allFinite()) throw DomainError("non-finite token features");
    if (mode == Mode::Train && st.config.dropout > 0.0 && rng == nullptr)
        throw ConfigError("train-mode encoding needs a dropout stream");
    const double keep = 1.0 - st.config.dropout;
    Matrix a = enc.input;
    enc.activations.clear();
    enc.dropout_mask.clear();
    for (std::size_t l = 0; l < p.encoder_weight.size(); ++l) {
        Matrix z = a * p.encoder_weight[l].transpose();
        z.rowwise() += p.encoder_bias[l].col(0).transpose();
        Matrix act = z.array().tanh().matrix();
        enc.activations.push_back(act);
        if (mode == Mode::Train && st.config.dropout > 0.0) {
            Matrix mask(act.rows(), act.cols());
            for (Eigen::Index c = 0; c < mask.cols(); ++c)
                for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = uniform01(*rng) < keep ? 1.0 / keep : 0.0;
            act = act.cwiseProduct(mask);
            enc.dropout_mask.push_back(std::move(mask));
        }
        a = std::move(act);
    }
    enc.latent = std::move(a);
}

Matrix build_input(const ModelState& st, const panel::WideInstance& inst, int store) {
    const auto n = static_cast<Eigen::Index>(st.products());
    if (static_cast<Eigen::Index>(inst.size()) != n)
        throw ShapeError("instance has " + std::to_string(inst.size()) + " products, model has " + std::to_string(n));
    const Eigen::Index E = st.config.embedding_dim;
    const Matrix tok = st.scaler.apply(inst);
    Matrix x(n, st.input_dim());
    const auto& emb = st.params.embeddings;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto si = static_cast<std::size_t>(i);
        const Eigen::Index idx[kCategoricalFields] = {store, i + 1, st.brand_of[si], st.style_of[si], st.category_of[si]};
        for (int f = 0; f < kCategoricalFields; ++f) x.block(i, f * E, 1, E) = emb[static_cast<std::size_t>(f)].row(idx[f]);
        x.block(i, kCategoricalFields * E, 1, tok.cols()) = tok.row(i);
    }
    return x;
}

}  // namespace

Matrix score_pairs(const ModelState& st, const Matrix& latent) {
    const Matrix q = latent * st.params.query.transpose();
    const Matrix k = latent * st.params.key.transpose();
    Matrix s = (q * k.transpose()) / std::sqrt(static_cast<double>(st.config.attention_dim));
    s += st.metadata_bonus;
    s.diagonal().setConstant(kSelfMask);
    return s;
}

Encoded encode(const ModelState& st, const panel::WideInstance& inst, Mode mode, Rng* dropout_rng) {
    Encoded enc;
    enc.store = st.store_index(inst.store_code);
    enc.input = build_input(st, inst, enc.store);
    run_encoder(st, enc, mode, dropout_rng);
    enc.query = enc.latent * st.params.query.transpose();
    enc.key = enc.latent * st.params.key.transpose();
    enc.scores = (enc.query * enc.key.transpose()) / std::sqrt(static_cast<double>(st.config.attention_dim));
    enc.scores += st.metadata_bonus;
    enc.scores.diagonal().setConstant(kSelfMask);
    return enc;
}

Matrix encode_tokens(const ModelState& st, const Matrix& input, Mode mode, Rng* dropout_rng) {
    Encoded enc;
    enc.input = input;
    run_encoder(st, enc, mode, dropout_rng);
    return enc.latent;
}

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
    if (!(y > 0.0)) throw DomainError("inverse softplus needs a positive argument");
    return y + std::log(-std::expm1(-y));
}

OwnHeadOutput own_head(const Parameters& p, const Eigen::Ref<const Vector>& h) {
    OwnHeadOutput o;
    o.intercept = p.intercept_weight.row(0).dot(h) + p.intercept_bias(0, 0);
    o.slope_raw = p.own_slope_weight.row(0).dot(h) + p.own_slope_bias(0, 0);
    o.slope = -softplus(o.slope_raw);
    o.spline = p.own_spline_weight * h + p.own_spline_bias.col(0);
    return o;
}

PairHeadOutput pair_head(const Parameters& p, const Eigen::Ref<const Vector>& focal,
                         const Eigen::Ref<const Vector>& other, int K) {
    const Eigen::Index dh = focal.size();
    Vector z(2 * dh);
    z << focal, other;
    PairHeadOutput o;
    o.slope = p.cross_slope_weight.row(0).dot(z) + p.cross_slope_bias(0, 0);
    o.spline = p.cross_spline_weight * z + p.cross_spline_bias.col(0);
    const Vector u = p.interaction_weight * z + p.interaction_bias.col(0);
    o.interaction.resize(K, K);
    for (int r = 0; r < K; ++r)
        for (int c = 0; c < K; ++c) o.interaction(r, c) = u(r * K + c);
    return o;
}

// --- stage B ----------------------------------------------------------------

namespace {

std::vector<spline::BasisValues> bases_at(const std::vector<spline::SplineSpec>& specs, const Vector& u) {
    if (static_cast<std::size_t>(u.size()) != specs.size()) throw ShapeError("price vector width mismatch");
    std::vector<spline::BasisValues> b;
    b.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) b.push_back(spline::eval_all(specs[i], u(static_cast<Eigen::Index>(i))));
    return b;
}

double value_at(const DemandSurface& s, const std::vector<spline::BasisValues>& b, const Vector& u, std::size_t i) {
    const auto& o = s.own()[i];
    double y = o.intercept + o.slope * u(static_cast<Eigen::Index>(i)) + o.spline.dot(b[i].value);
    for (int e : s.edges_of()[i]) {
        const auto& ed = s.edges()[static_cast<std::size_t>(e)];
        const auto j = static_cast<std::size_t>(ed.other);
        y += ed.weight * (ed.head.slope * u(ed.other) + ed.head.spline.dot(b[j].value) +
                          b[i].value.dot(ed.head.interaction * b[j].value));
    }
    return y;
}

double own_at(const DemandSurface& s, const std::vector<spline::BasisValues>& b, std::size_t i) {
    const auto& o = s.own()[i];
    double e = o.slope + o.spline.dot(b[i].first);
    for (int k : s.edges_of()[i]) {
        const auto& ed = s.edges()[static_cast<std::size_t>(k)];
        e += ed.weight * b[i].first.dot(ed.head.interaction * b[static_cast<std::size_t>(ed.other)].value);
    }
    return e;
}

double cross_at(const EdgeTerms& ed, const std::vector<spline::BasisValues>& b) {
    const auto& bi = b[static_cast<std::size_t>(ed.focal)];
    const auto& bj = b[static_cast<std::size_t>(ed.other)];
    return ed.weight * (ed.head.slope + ed.head.spline.dot(bj.first) + bi.value.dot(ed.head.interaction * bj.first));
}

double curvature_at(const DemandSurface& s, const std::vector<spline::BasisValues>& b, std::size_t i) {
    const auto& o = s.own()[i];
    double k = o.spline.dot(b[i].second);
    for (int e : s.edges_of()[i]) {
        const auto& ed = s.edges()[static_cast<std::size_t>(e)];
        k += ed.weight * b[i].second.dot(ed.head.interaction * b[static_cast<std::size_t>(ed.other)].value);
    }
    return k;
}

}  // namespace

DemandSurface::DemandSurface(std::vector<spline::SplineSpec> splines, std::vector<OwnHeadOutput> own,
                             std::vector<EdgeTerms> edges)
    : splines_(std::move(splines)), own_(std::move(own)), edges_(std::move(edges)) {
    if (splines_.size() != own_.size()) throw ShapeError("spline and own-head counts differ");
    edges_of_.assign(own_.size(), {});
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        const auto& ed = edges_[e];
        if (ed.focal < 0 || ed.other < 0 || static_cast<std::size_t>(ed.focal) >= own_.size() ||
            static_cast<std::size_t>(ed.other) >= own_.size() || ed.focal == ed.other)
            throw GraphError("invalid edge " + std::to_string(ed.focal) + "->" + std::to_string(ed.other));
        edges_of_[static_cast<std::size_t>(ed.focal)].push_back(static_cast<int>(e));
    }
}

Vector DemandSurface::evaluate(const Vector& u) const {
    const auto b = bases_at(splines_, u);
    Vector y(u.size());
    for (std::size_t i = 0; i < own_.size(); ++i) y(static_cast<Eigen::Index>(i)) = value_at(*this, b, u, i);
    return y;
}

Vector DemandSurface::jacobian_row(const Vector& u, std::size_t i) const {
    const auto b = bases_at(splines_, u);
    Vector row = Vector::Zero(u.size());
    row(static_cast<Eigen::Index>(i)) = own_at(*this, b, i);
    for (int e : edges_of_[i]) {
        const auto& ed = edges_[static_cast<std::size_t>(e)];
        row(ed.other) = cross_at(ed, b);
    }
    return row;
}

Matrix DemandSurface::jacobian(const Vector& u) const {
    const auto b = bases_at(splines_, u);
    const auto n = static_cast<Eigen::Index>(own_.size());
    Matrix J = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) J(i, i) = own_at(*this, b, static_cast<std::size_t>(i));
    for (const auto& ed : edges_) J(ed.focal, ed.other) = cross_at(ed, b);
    return J;
}

Vector DemandSurface::curvature(const Vector& u) const {
    const auto b = bases_at(splines_, u);
    Vector k(u.size());
    for (std::size_t i = 0; i < own_.size(); ++i) k(static_cast<Eigen::Index>(i)) = curvature_at(*this, b, i);
    return k;
}

field::ElasticityField DemandSurface::as_field() const {
    auto self = std::make_shared<const DemandSurface>(*this);
    field::ElasticityField f;
    f.dimension = size();
    f.evaluate = [self](const Vector& u) { return self->jacobian(u); };
    f.evaluate_row = [self](const Vector& u, std::size_t i) { return self->jacobian_row(u, i); };
    return f;
}

ForwardOutput surface_forward(const ModelState& st, const Encoded& enc, const Vector& u, const SparseGraph& graph) {
    const std::size_t n = st.products();
    if (static_cast<std::size_t>(u.size()) != n) throw ShapeError("price vector width mismatch");
    if (!u.allFinite()) throw DomainError("non-finite log price");
    if (graph.neighbors.size() != n) throw GraphError("graph does not cover the product universe");
    const int K = st.config.basis_count;
    std::vector<OwnHeadOutput> own;
    own.reserve(n);
    for (std::size_t i = 0; i < n; ++i) own.push_back(own_head(st.params, enc.latent.row(static_cast<Eigen::Index>(i)).transpose()));
    std::vector<EdgeTerms> edges;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& nb = graph.neighbors[i];
        if (nb.empty()) continue;
        std::vector<double> logits;
        for (int j : nb) logits.push_back(enc.scores(static_cast<Eigen::Index>(i), j));
        const Vector a = attention_weights(logits);
        for (std::size_t t = 0; t < nb.size(); ++t) {
            EdgeTerms e;
            e.focal = static_cast<int>(i);
            e.other = nb[t];
            e.logit = logits[t];
            e.weight = a(static_cast<Eigen::Index>(t));
            e.head = pair_head(st.params, enc.latent.row(static_cast<Eigen::Index>(i)).transpose(),
                               enc.latent.row(nb[t]).transpose(), K);
            edges.push_back(std::move(e));
        }
    }
    ForwardOutput out;
    out.surface = DemandSurface(st.splines, std::move(own), std::move(edges));
    out.log_price = u;
    out.basis = bases_at(st.splines, u);
    out.prediction.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) out.prediction(static_cast<Eigen::Index>(i)) = value_at(out.surface, out.basis, u, i);
    return out;
}

ForwardOutput forward(const ModelState& st, const panel::WideInstance& inst, const SparseGraph& graph, Mode mode,
                      Rng* dropout_rng) {
    const Encoded enc = encode(st, inst, mode, dropout_rng);
    return surface_forward(st, enc, inst.log_price, graph);
}

double elasticity_own(const ForwardOutput& out, int i) {
    return own_at(out.surface, out.basis, static_cast<std::size_t>(i));
}

std::optional<double> elasticity_cross(const ForwardOutput& out, int i, int j) {
    if (i < 0 || static_cast<std::size_t>(i) >= out.surface.size()) return std::nullopt;
    for (int e : out.surface.edges_of()[static_cast<std::size_t>(i)]) {
        const auto& ed = out.surface.edges()[static_cast<std::size_t>(e)];
        if (ed.other == j) return cross_at(ed, out.basis);
    }
    return std::nullopt;
}

double curvature(const ForwardOutput& out, int i) {
    return curvature_at(out.surface, out.basis, static_cast<std::size_t>(i));
}

}  // namespace icdn::model
