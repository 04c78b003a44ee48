#include "plast/lens.h"

#include "plast/error.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace plast {

Tensor lens_distribution(const Model & model, const Tensor & hidden) {
    ad::Var logits = model.head(ad::constant(hidden));
    ad::Var probs = ad::softmax_rows(logits);
    return probs.value();
}

double entropy_nats(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::max(h, 0.0);
}

LensCell lens_cell(std::span<const double> probs, size_t k) {
    LensCell cell;
    std::vector<size_t> idx(probs.size());
    std::iota(idx.begin(), idx.end(), 0);
    const size_t kk = std::min(k, probs.size());
    std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(kk), idx.end(), [&](size_t a, size_t b) {
        return probs[a] > probs[b] || (probs[a] == probs[b] && a < b);
    });
    for (size_t i = 0; i < kk; ++i) {
        cell.top_ids.push_back(idx[i]);
        cell.top_probs.push_back(probs[idx[i]]);
    }
    cell.entropy = entropy_nats(probs);
    return cell;
}

LensGrid logit_lens(const Model & model, const ForwardCapture & capture, size_t k) {
    if (capture.layers.size() != model.config().n_layers) {
        throw InvalidArgument("logit_lens: capture does not cover every layer");
    }
    if (k == 0) throw InvalidArgument("logit_lens: k must be positive");
    LensGrid grid;
    grid.n_layers = capture.layers.size();
    grid.vocab_size = model.config().vocab_size;
    grid.k = std::min(k, grid.vocab_size);
    for (const auto & layer : capture.layers) {
        if (layer.hidden.numel() == 0) throw InvalidArgument("logit_lens: capture is missing hidden states");
        Tensor probs = lens_distribution(model, layer.hidden);
        grid.n_positions = probs.rows();
        std::vector<LensCell> row;
        for (size_t p = 0; p < probs.rows(); ++p) row.push_back(lens_cell(probs.row(p), grid.k));
        grid.cells.push_back(std::move(row));
    }
    return grid;
}

std::vector<double> vision_attention_mass(const ForwardCapture & capture) {
    const size_t nv = capture.n_vision_tokens;
    if (nv == 0) throw InvalidArgument("vision_attention_mass: no vision tokens in capture");
    std::vector<double> out;
    for (const auto & layer : capture.layers) {
        if (layer.attention.empty()) throw InvalidArgument("vision_attention_mass: capture has no attention weights");
        const size_t seq = layer.attention.front().rows();
        if (seq <= nv) throw InvalidArgument("vision_attention_mass: no question tokens after the vision tokens");
        double total = 0.0;
        for (const Tensor & att : layer.attention) {
            for (size_t q = nv; q < seq; ++q) {
                double mass = 0.0;
                for (size_t key = 0; key < nv; ++key) mass += att(q, key);
                total += mass;
            }
        }
        const double f = total / double(layer.attention.size() * (seq - nv));
        out.push_back(std::clamp(f, 0.0, 1.0));
    }
    return out;
}

nlohmann::json lens_to_json(const LensGrid & grid) {
    nlohmann::json layers = nlohmann::json::array();
    for (size_t l = 0; l < grid.cells.size(); ++l) {
        nlohmann::json positions = nlohmann::json::array();
        for (const auto & c : grid.cells[l]) {
            positions.push_back({{"top_ids", c.top_ids}, {"top_probs", c.top_probs}, {"entropy", c.entropy}});
        }
        layers.push_back({{"layer", l + 1}, {"positions", std::move(positions)}});
    }
    return {{"format", "plast-lens"},
            {"version", 1},
            {"n_layers", grid.n_layers},
            {"n_positions", grid.n_positions},
            {"vocab_size", grid.vocab_size},
            {"k", grid.k},
            {"layers", std::move(layers)}};
}

nlohmann::json attention_mass_to_json(const std::vector<double> & mass, size_t n_vision_tokens) {
    nlohmann::json layers = nlohmann::json::array();
    for (size_t i = 0; i < mass.size(); ++i) layers.push_back({{"layer", i + 1}, {"vision_fraction", mass[i]}});
    return {{"format", "plast-attn"}, {"version", 1}, {"n_vision_tokens", n_vision_tokens}, {"layers", std::move(layers)}};
}

} // namespace plast
