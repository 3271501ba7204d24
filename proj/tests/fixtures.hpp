#pragma once

// Shared builders for unit and acceptance tests.

#include "icdn/model.hpp"
#include "icdn/panel.hpp"
#include "icdn/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace icdn::testing {

panel::FilterConfig loose_filters();

// synth -> preprocess -> wide with loose filters.
pipeline::WideData synth_wide(int n_products, int n_stores, int n_weeks, std::uint64_t seed, double noise_sd = 0.1);

model::ModelConfig tiny_model_config(int basis_count = 3, int neighbors = 2);

// Every parameter replaced by U(-scale, scale) draws.
void randomize(model::Parameters& p, std::uint64_t seed, double scale);

// Random dense surface with n products, K knots per product, every ordered pair
// an edge. Knots sit on a regular grid inside [-0.6, 0.6].
model::DemandSurface random_surface(int n, int K, std::uint64_t seed, double scale = 0.5);

// Twelve store-UPC series: four pass the default identification rules, the
// others each fail exactly one rule (store weeks included).
struct FilterFixture {
    std::vector<panel::RawRow> rows;
    panel::FilterConfig config;
    std::vector<std::string> passing;  // "store|upc"
};
FilterFixture filter_fixture();

panel::RawRow raw_row(const std::string& store, const std::string& upc, int week, double price, bool promo = false,
                      double units = 10.0);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

std::string read_file(const std::filesystem::path& p);

}  // namespace icdn::testing
