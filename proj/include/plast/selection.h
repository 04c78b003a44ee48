#pragma once

#include <json.hpp>

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace plast {

// Layers are 1-based throughout.
struct LayerSelection {
    size_t boundary_layer = 0;
    std::set<size_t> language_specific; // K = {1, ..., boundary_layer - 1}
    std::map<size_t, double> msd;       // defined on K
    double theta = 0.0;
    std::set<size_t> selected;          // S = {i in K : msd[i] > theta}
};

// Per-language activation ratios plus the averaged non-English overlap
// series, as read from stats.json.
struct SelectionInput {
    std::string english = "en";
    std::vector<std::string> languages;
    std::vector<std::vector<double>> ratio; // [language][layer]
    std::vector<double> avg_overlap;        // [layer]
};

struct SelectionOptions {
    bool exclude_english = false; // drop the English row from the MSD population
    size_t max_layers = 0;        // 0 = no cap; otherwise keep the highest-MSD layers
};

// 1-based index of the maximum; ties go to the earliest layer.
size_t find_boundary(std::span<const double> avg_overlap);

// Population variance across languages (rows) at each layer in k.
std::map<size_t, double> msd_per_layer(const std::vector<std::vector<double>> & ratio, const std::set<size_t> & k);

LayerSelection select_layers(const std::map<size_t, double> & msd, const std::set<size_t> & k, size_t max_layers = 0);

LayerSelection run_selection(const SelectionInput & input, const SelectionOptions & options = {});

SelectionInput selection_input_from_json(const nlohmann::json & stats);
nlohmann::json selection_to_json(const LayerSelection & s);
LayerSelection selection_from_json(const nlohmann::json & j);

} // namespace plast
