#pragma once

#include "plast/model.h"
#include "plast/tensor.h"

#include <json.hpp>

#include <vector>

namespace plast {

struct LensCell {
    std::vector<size_t> top_ids;
    std::vector<double> top_probs;
    double entropy = 0.0; // nats, over the full distribution
};

struct LensGrid {
    size_t n_layers = 0;
    size_t n_positions = 0;
    size_t vocab_size = 0;
    size_t k = 0;
    std::vector<std::vector<LensCell>> cells; // [layer - 1][position]
};

// Softmax of final-norm + LM head applied to residual states [seq x d_model].
Tensor lens_distribution(const Model & model, const Tensor & hidden);

double entropy_nats(std::span<const double> probs);
LensCell lens_cell(std::span<const double> probs, size_t k);

LensGrid logit_lens(const Model & model, const ForwardCapture & capture, size_t k);

// Per layer: attention mass from non-vision queries to vision keys, averaged
// over heads and query positions.
std::vector<double> vision_attention_mass(const ForwardCapture & capture);

nlohmann::json lens_to_json(const LensGrid & grid);
nlohmann::json attention_mass_to_json(const std::vector<double> & mass, size_t n_vision_tokens);

} // namespace plast
