#pragma once

// Context-conditioned multiproduct log-demand surface with sparse attention
// cross effects. Elasticities and own-price curvature are exact derivatives of
// the surface, computed from cached spline bases and head outputs.

#include "icdn/field.hpp"
#include "icdn/linalg.hpp"
#include "icdn/panel.hpp"
#include "icdn/rng.hpp"
#include "icdn/spline.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace icdn::model {

inline constexpr double kSelfMask = -1e9;          // diagonal score sentinel
inline constexpr int kCategoricalFields = 5;       // store, upc, brand, style, category

struct ModelConfig {
    int basis_count = spline::kDefaultBasisCount;  // K
    std::vector<int> hidden = {256, 128, 64};      // last width is the latent size
    double dropout = 0.2547;
    int attention_dim = 32;
    int neighbors = 4;                             // k
    bool category_priority = false;
    int embedding_dim = 8;
    double bonus_brand = 0.5;
    double bonus_style = 0.5;
    double bonus_size = 1.0;

    [[nodiscard]] int latent_dim() const { return hidden.back(); }
    void validate() const;
};

enum class Mode { Train, Eval };

struct BlockInfo {
    bool decay = false;           // AdamW weight-decay group
    bool nonlinear_head = false;  // frozen during the warm start
};

// All trainable tensors. Biases are stored as single-column matrices so every
// block shares one type. Weights map inputs to outputs as `out x in`.
struct Parameters {
    std::vector<Matrix> embeddings;      // store, upc, brand, style, category: vocab x dim
    std::vector<Matrix> encoder_weight;  // per hidden layer
    std::vector<Matrix> encoder_bias;
    Matrix intercept_weight, intercept_bias;        // b_i
    Matrix own_slope_weight, own_slope_bias;        // raw own slope (before -softplus)
    Matrix own_spline_weight, own_spline_bias;      // w_ii
    Matrix cross_slope_weight, cross_slope_bias;    // beta_ij
    Matrix cross_spline_weight, cross_spline_bias;  // w_ij
    Matrix interaction_weight, interaction_bias;    // U^(ij), row-major K x K
    Matrix query, key;                              // attention projections

    template <class F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <class F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    [[nodiscard]] Parameters zeros_like() const;
    [[nodiscard]] std::size_t scalar_count() const;

private:
    template <class Self, class F>
    static void visit_impl(Self& p, F& f) {
        static const char* emb_names[] = {"embedding.store", "embedding.upc", "embedding.brand",
                                          "embedding.style", "embedding.category"};
        for (std::size_t k = 0; k < p.embeddings.size(); ++k) f(std::string(emb_names[k]), p.embeddings[k], BlockInfo{true, false});
        for (std::size_t l = 0; l < p.encoder_weight.size(); ++l) {
            f("encoder." + std::to_string(l) + ".weight", p.encoder_weight[l], BlockInfo{true, false});
            f("encoder." + std::to_string(l) + ".bias", p.encoder_bias[l], BlockInfo{false, false});
        }
        f(std::string("own_head.intercept.weight"), p.intercept_weight, BlockInfo{true, false});
        f(std::string("own_head.intercept.bias"), p.intercept_bias, BlockInfo{false, false});
        f(std::string("own_head.slope.weight"), p.own_slope_weight, BlockInfo{false, false});
        f(std::string("own_head.slope.bias"), p.own_slope_bias, BlockInfo{false, false});
        f(std::string("own_head.spline.weight"), p.own_spline_weight, BlockInfo{false, true});
        f(std::string("own_head.spline.bias"), p.own_spline_bias, BlockInfo{false, true});
        f(std::string("pair_head.slope.weight"), p.cross_slope_weight, BlockInfo{false, false});
        f(std::string("pair_head.slope.bias"), p.cross_slope_bias, BlockInfo{false, false});
        f(std::string("pair_head.spline.weight"), p.cross_spline_weight, BlockInfo{false, true});
        f(std::string("pair_head.spline.bias"), p.cross_spline_bias, BlockInfo{false, true});
        f(std::string("pair_head.interaction.weight"), p.interaction_weight, BlockInfo{false, true});
        f(std::string("pair_head.interaction.bias"), p.interaction_bias, BlockInfo{false, true});
        f(std::string("attention.query"), p.query, BlockInfo{true, false});
        f(std::string("attention.key"), p.key, BlockInfo{true, false});
    }
};

// Train-split standardization of numeric token features.
struct TokenScaler {
    std::vector<double> mean;
    std::vector<double> scale;
    std::vector<bool> standardize;

    static TokenScaler fit(std::span<const panel::WideInstance> train);
    // Observed rows are standardized; unobserved rows stay zero.
    [[nodiscard]] Matrix apply(const panel::WideInstance& inst) const;
};

enum class GraphProvenance { Online, Frozen };

struct SparseGraph {
    std::vector<std::vector<int>> neighbors;  // per focal product, best first
    int k_eff = 0;
    GraphProvenance provenance = GraphProvenance::Online;

    [[nodiscard]] bool contains(int i, int j) const;
    [[nodiscard]] std::size_t edge_count() const;
    bool operator==(const SparseGraph& other) const {
        return neighbors == other.neighbors && k_eff == other.k_eff;
    }
};

struct ModelState {
    ModelConfig config;
    panel::Universe universe;
    std::vector<spline::SplineSpec> splines;
    std::vector<std::string> stores;        // vocabulary; index 0 is reserved for unknown
    std::vector<std::string> brands;
    std::vector<std::string> styles;
    std::vector<std::string> categories;
    std::vector<int> brand_of, style_of, category_of;  // per product, vocabulary index
    TokenScaler scaler;
    Parameters params;
    Matrix metadata_bonus;                  // xi_ij
    std::optional<SparseGraph> frozen_graph;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t products() const noexcept { return universe.size(); }
    [[nodiscard]] int store_index(const std::string& store) const;
    [[nodiscard]] int input_dim() const;
};

// Builds vocabularies, spline specs, token scaler and initial parameters from
// the training split. Parameter draws use the "init" stream of `seed`.
ModelState initialize_model(const ModelConfig& config, const panel::Universe& universe,
                            std::span<const panel::WideInstance> train, std::uint64_t seed);

Matrix metadata_bonus(const panel::Universe& universe, const ModelConfig& config);

// --- stage A: tokens -> latents -> pair scores --------------------------------

struct Encoded {
    Matrix input;                      // n x d_in
    std::vector<Matrix> activations;   // post-tanh, pre-dropout, per layer
    std::vector<Matrix> dropout_mask;  // scaled keep masks; empty in eval mode
    Matrix latent;                     // n x d_h
    Matrix query, key;                 // n x d_att
    Matrix scores;                     // n x n, xi included, diagonal = kSelfMask
    int store = 0;
};

// Shared encoder applied row-wise. `dropout_rng` is required in Train mode.
Encoded encode(const ModelState& state, const panel::WideInstance& inst, Mode mode, Rng* dropout_rng = nullptr);
Matrix encode_tokens(const ModelState& state, const Matrix& input, Mode mode, Rng* dropout_rng = nullptr);
Matrix score_pairs(const ModelState& state, const Matrix& latent);

struct OwnHeadOutput {
    double intercept = 0.0;
    double slope_raw = 0.0;
    double slope = 0.0;  // -softplus(slope_raw) < 0
    Vector spline;       // w_ii
};
OwnHeadOutput own_head(const Parameters& p, const Eigen::Ref<const Vector>& latent);

struct PairHeadOutput {
    double slope = 0.0;   // beta_ij
    Vector spline;        // w_ij
    Matrix interaction;   // U^(ij)
};
PairHeadOutput pair_head(const Parameters& p, const Eigen::Ref<const Vector>& focal,
                         const Eigen::Ref<const Vector>& other, int basis_count);

double softplus(double x);
double inverse_softplus(double y);

// --- graph selection --------------------------------------------------------

// Mean scores over the batch, then top k_eff = min(k, n-1) non-self candidates
// per focal row. With category priority, same-category candidates rank ahead
// of all others and remaining slots go to the best other candidates.
SparseGraph select_online_graph(std::span<const Matrix> batch_scores, int k, bool category_priority,
                                std::span<const int> category_of);

SparseGraph select_graph(const Matrix& mean_scores, int k, bool category_priority, std::span<const int> category_of,
                         GraphProvenance provenance);

// Mean training-split scores (eval mode), accumulated in a canonical
// (store, week) order so the result is independent of the input ordering.
SparseGraph freeze_graph(const ModelState& state, std::span<const panel::WideInstance> train);

// Max-subtracted softmax over the selected logits.
Vector attention_weights(std::span<const double> logits);

// --- stage B: structured surface -------------------------------------------

struct EdgeTerms {
    int focal = 0;
    int other = 0;
    double logit = 0.0;
    double weight = 0.0;  // a_ij
    PairHeadOutput head;
};

// g(u) for one fixed context: latents, graph and attention weights held fixed.
class DemandSurface {
public:
    DemandSurface() = default;
    DemandSurface(std::vector<spline::SplineSpec> splines, std::vector<OwnHeadOutput> own, std::vector<EdgeTerms> edges);

    [[nodiscard]] std::size_t size() const noexcept { return own_.size(); }
    [[nodiscard]] const std::vector<OwnHeadOutput>& own() const noexcept { return own_; }
    [[nodiscard]] const std::vector<EdgeTerms>& edges() const noexcept { return edges_; }
    [[nodiscard]] const std::vector<std::vector<int>>& edges_of() const noexcept { return edges_of_; }
    [[nodiscard]] const std::vector<spline::SplineSpec>& splines() const noexcept { return splines_; }
    std::vector<OwnHeadOutput>& mutable_own() noexcept { return own_; }
    std::vector<EdgeTerms>& mutable_edges() noexcept { return edges_; }

    [[nodiscard]] Vector evaluate(const Vector& u) const;
    // Dense Jacobian; entries for non-selected pairs are zero.
    [[nodiscard]] Matrix jacobian(const Vector& u) const;
    [[nodiscard]] Vector jacobian_row(const Vector& u, std::size_t i) const;
    [[nodiscard]] Vector curvature(const Vector& u) const;
    [[nodiscard]] field::ElasticityField as_field() const;

private:
    std::vector<spline::SplineSpec> splines_;
    std::vector<OwnHeadOutput> own_;
    std::vector<EdgeTerms> edges_;
    std::vector<std::vector<int>> edges_of_;  // focal -> indices into edges_
};

struct ForwardOutput {
    DemandSurface surface;
    Vector log_price;
    Vector prediction;                        // y_hat
    std::vector<spline::BasisValues> basis;   // per product at log_price
};

ForwardOutput surface_forward(const ModelState& state, const Encoded& enc, const Vector& log_price,
                              const SparseGraph& graph);
ForwardOutput forward(const ModelState& state, const panel::WideInstance& inst, const SparseGraph& graph,
                      Mode mode = Mode::Eval, Rng* dropout_rng = nullptr);

double elasticity_own(const ForwardOutput& out, int i);
// Absent when (i, j) is not a selected edge.
std::optional<double> elasticity_cross(const ForwardOutput& out, int i, int j);
double curvature(const ForwardOutput& out, int i);

// --- checkpoint -------------------------------------------------------------

void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);
std::string checkpoint_json(const ModelState& state);
ModelState checkpoint_from_json(const std::string& text);

}  // namespace icdn::model
