#include "plast/selection.h"

#include "plast/error.h"

#include <algorithm>

namespace plast {

size_t find_boundary(std::span<const double> avg_overlap) {
    if (avg_overlap.empty()) throw InvalidArgument("find_boundary: empty overlap series");
    if (avg_overlap.size() < 2) throw InvalidArgument("find_boundary: overlap series needs at least 2 layers");
    size_t best = 0;
    for (size_t i = 1; i < avg_overlap.size(); ++i) {
        if (avg_overlap[i] > avg_overlap[best]) best = i;
    }
    return best + 1;
}

std::map<size_t, double> msd_per_layer(const std::vector<std::vector<double>> & ratio, const std::set<size_t> & k) {
    if (ratio.size() < 2) throw InvalidArgument("msd_per_layer: at least 2 languages are required");
    const size_t n_layers = ratio.front().size();
    for (const auto & row : ratio) {
        if (row.size() != n_layers) throw ShapeError("msd_per_layer: ragged ratio matrix");
    }
    const double n = double(ratio.size());
    std::map<size_t, double> out;
    for (size_t layer : k) {
        if (layer < 1 || layer > n_layers) throw InvalidArgument("msd_per_layer: layer out of range");
        // Shifted by the first value so equal rows give exactly zero.
        const double shift = ratio.front()[layer - 1];
        double mu = 0.0;
        for (const auto & row : ratio) mu += row[layer - 1] - shift;
        mu /= n;
        double acc = 0.0;
        for (const auto & row : ratio) {
            const double d = (row[layer - 1] - shift) - mu;
            acc += d * d;
        }
        out[layer] = acc / n;
    }
    return out;
}

LayerSelection select_layers(const std::map<size_t, double> & msd, const std::set<size_t> & k, size_t max_layers) {
    if (k.empty()) throw EmptySelection("select_layers: no language-specific layers (K is empty)");
    LayerSelection s;
    s.language_specific = k;
    double total = 0.0;
    for (size_t layer : k) {
        auto it = msd.find(layer);
        if (it == msd.end()) throw InvalidArgument("select_layers: MSD missing for layer " + std::to_string(layer));
        s.msd[layer] = it->second;
        total += it->second;
    }
    s.theta = total / double(k.size());
    for (const auto & [layer, v] : s.msd) {
        if (v > s.theta) s.selected.insert(layer);
    }
    if (s.selected.empty()) throw EmptySelection("select_layers: no layer's MSD exceeds theta");
    if (max_layers > 0 && s.selected.size() > max_layers) {
        std::vector<size_t> order(s.selected.begin(), s.selected.end());
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return s.msd[a] > s.msd[b]; });
        s.selected = std::set<size_t>(order.begin(), order.begin() + std::ptrdiff_t(max_layers));
    }
    return s;
}

LayerSelection run_selection(const SelectionInput & input, const SelectionOptions & options) {
    const size_t boundary = find_boundary(input.avg_overlap);
    std::set<size_t> k;
    for (size_t i = 1; i < boundary; ++i) k.insert(i);
    if (k.empty()) throw EmptySelection("run_selection: overlap peaks at layer 1, K is empty");

    std::vector<std::vector<double>> rows;
    for (size_t i = 0; i < input.languages.size(); ++i) {
        if (options.exclude_english && input.languages[i] == input.english) continue;
        rows.push_back(input.ratio[i]);
    }
    for (const auto & r : rows) {
        if (r.size() != input.avg_overlap.size()) throw ShapeError("run_selection: ratio and overlap layer counts differ");
    }
    LayerSelection s = select_layers(msd_per_layer(rows, k), k, options.max_layers);
    s.boundary_layer = boundary;
    return s;
}

SelectionInput selection_input_from_json(const nlohmann::json & stats) {
    try {
        SelectionInput in;
        in.english = stats.value("english", std::string("en"));
        for (const auto & lang : stats.at("languages")) {
            in.languages.push_back(lang.at("language").get<std::string>());
            std::vector<double> row;
            for (const auto & layer : lang.at("layers")) row.push_back(layer.at("R").get<double>());
            in.ratio.push_back(std::move(row));
        }
        in.avg_overlap = stats.at("avg_overlap").get<std::vector<double>>();
        return in;
    } catch (const nlohmann::json::exception & e) {
        throw FormatError(std::string("stats.json: ") + e.what());
    }
}

nlohmann::json selection_to_json(const LayerSelection & s) {
    nlohmann::json msd = nlohmann::json::object();
    for (const auto & [layer, v] : s.msd) msd[std::to_string(layer)] = v;
    return {
        {"boundary_layer", s.boundary_layer},
        {"K", s.language_specific},
        {"msd", std::move(msd)},
        {"theta", s.theta},
        {"selected", s.selected},
    };
}

LayerSelection selection_from_json(const nlohmann::json & j) {
    try {
        LayerSelection s;
        s.boundary_layer = j.at("boundary_layer").get<size_t>();
        s.language_specific = j.at("K").get<std::set<size_t>>();
        for (const auto & [key, v] : j.at("msd").items()) s.msd[std::stoul(key)] = v.get<double>();
        s.theta = j.at("theta").get<double>();
        s.selected = j.at("selected").get<std::set<size_t>>();
        return s;
    } catch (const nlohmann::json::exception & e) {
        throw FormatError(std::string("selection.json: ") + e.what());
    }
}

} // namespace plast
