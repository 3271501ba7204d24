#include "icdn/error.hpp"
#include "icdn/model.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace icdn::model {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json matrix_to_json(const Matrix& m) {
    json data = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ShapeError("checkpoint tensor size mismatch");
    Matrix m(rows, cols);
    std::size_t t = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[t++].get<double>();
    return m;
}

json config_to_json(const ModelConfig& c) {
    return json{{"basis_count", c.basis_count},     {"hidden", c.hidden},
                {"dropout", c.dropout},             {"attention_dim", c.attention_dim},
                {"neighbors", c.neighbors},         {"category_priority", c.category_priority},
                {"embedding_dim", c.embedding_dim}, {"bonus_brand", c.bonus_brand},
                {"bonus_style", c.bonus_style},     {"bonus_size", c.bonus_size}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.basis_count = j.at("basis_count").get<int>();
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.dropout = j.at("dropout").get<double>();
    c.attention_dim = j.at("attention_dim").get<int>();
    c.neighbors = j.at("neighbors").get<int>();
    c.category_priority = j.at("category_priority").get<bool>();
    c.embedding_dim = j.at("embedding_dim").get<int>();
    c.bonus_brand = j.at("bonus_brand").get<double>();
    c.bonus_style = j.at("bonus_style").get<double>();
    c.bonus_size = j.at("bonus_size").get<double>();
    c.validate();
    return c;
}

}  // namespace

std::string checkpoint_json(const ModelState& st) {
    json j;
    j["format_version"] = kFormatVersion;
    j["seed"] = st.seed;
    j["config"] = config_to_json(st.config);
    json products = json::array();
    for (const auto& p : st.universe.products)
        products.push_back({{"upc", p.upc_code},
                            {"brand", p.brand_family},
                            {"style", p.style_segment},
                            {"category", p.category_code},
                            {"liters", p.liters}});
    j["universe"] = std::move(products);
    json splines = json::array();
    for (const auto& s : st.splines) splines.push_back({{"knots", s.knots}, {"mu", s.mu}, {"sigma", s.sigma}});
    j["splines"] = std::move(splines);
    j["vocabulary"] = {{"stores", st.stores}, {"brands", st.brands}, {"styles", st.styles}, {"categories", st.categories}};
    j["scaler"] = {{"mean", st.scaler.mean}, {"scale", st.scaler.scale}, {"standardize", st.scaler.standardize}};
    json params = json::object();
    st.params.visit([&](const std::string& name, const Matrix& m, BlockInfo) { params[name] = matrix_to_json(m); });
    j["parameters"] = std::move(params);
    if (st.frozen_graph) {
        j["frozen_graph"] = {{"k_eff", st.frozen_graph->k_eff}, {"neighbors", st.frozen_graph->neighbors}};
    } else {
        j["frozen_graph"] = nullptr;
    }
    return j.dump(1);
}

ModelState checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(0, std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != kFormatVersion) throw ConfigError("unsupported checkpoint version");
        ModelState st;
        st.seed = j.at("seed").get<std::uint64_t>();
        st.config = config_from_json(j.at("config"));
        for (const auto& p : j.at("universe"))
            st.universe.products.push_back({p.at("upc").get<std::string>(), p.at("brand").get<std::string>(),
                                            p.at("style").get<std::string>(), p.at("category").get<std::string>(),
                                            p.at("liters").get<double>()});
        for (const auto& s : j.at("splines")) {
            spline::SplineSpec spec;
            spec.knots = s.at("knots").get<std::vector<double>>();
            spec.mu = s.at("mu").get<double>();
            spec.sigma = s.at("sigma").get<double>();
            st.splines.push_back(std::move(spec));
        }
        if (st.splines.size() != st.universe.size()) throw ShapeError("spline specs do not cover the universe");
        const auto& v = j.at("vocabulary");
        st.stores = v.at("stores").get<std::vector<std::string>>();
        st.brands = v.at("brands").get<std::vector<std::string>>();
        st.styles = v.at("styles").get<std::vector<std::string>>();
        st.categories = v.at("categories").get<std::vector<std::string>>();
        auto index = [](const std::vector<std::string>& vocab, const std::string& key) {
            for (std::size_t t = 1; t < vocab.size(); ++t)
                if (vocab[t] == key) return static_cast<int>(t);
            return 0;
        };
        for (const auto& p : st.universe.products) {
            st.brand_of.push_back(index(st.brands, p.brand_family));
            st.style_of.push_back(index(st.styles, p.style_segment));
            st.category_of.push_back(index(st.categories, p.category_code));
        }
        const auto& sc = j.at("scaler");
        st.scaler.mean = sc.at("mean").get<std::vector<double>>();
        st.scaler.scale = sc.at("scale").get<std::vector<double>>();
        st.scaler.standardize = sc.at("standardize").get<std::vector<bool>>();

        const auto n = st.universe.size();
        const auto& cfg = st.config;
        st.params.embeddings.resize(kCategoricalFields);
        st.params.encoder_weight.resize(cfg.hidden.size());
        st.params.encoder_bias.resize(cfg.hidden.size());
        const auto& params = j.at("parameters");
        st.params.visit([&](const std::string& name, Matrix& m, BlockInfo) {
            if (!params.contains(name)) throw ConfigError("checkpoint is missing parameter block '" + name + "'");
            m = matrix_from_json(params.at(name));
            if (!m.allFinite()) throw DomainError("non-finite values in parameter block '" + name + "'");
        });
        if (st.params.embeddings[1].rows() != static_cast<Eigen::Index>(n + 1))
            throw ShapeError("product embedding table does not match the universe");
        st.metadata_bonus = metadata_bonus(st.universe, st.config);
        if (!j.at("frozen_graph").is_null()) {
            SparseGraph g;
            g.k_eff = j["frozen_graph"].at("k_eff").get<int>();
            g.neighbors = j["frozen_graph"].at("neighbors").get<std::vector<std::vector<int>>>();
            g.provenance = GraphProvenance::Frozen;
            if (g.neighbors.size() != n) throw GraphError("frozen graph does not cover the universe");
            st.frozen_graph = std::move(g);
        }
        return st;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const ModelState& st, const std::string& path) {
    const std::string text = checkpoint_json(st);
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write checkpoint '" + tmp + "'");
        out << text;
        out.flush();
        if (!out) throw Error("failed writing checkpoint '" + tmp + "'");
    }
    std::filesystem::rename(tmp, target);
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

}  // namespace icdn::model
