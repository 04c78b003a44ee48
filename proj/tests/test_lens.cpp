#include "plast/error.h"
#include "plast/lens.h"

#include <doctest.h>

#include <cmath>

using namespace plast;

namespace {

ModelConfig lens_config() {
    ModelConfig c;
    c.n_layers = 3;
    c.d_model = 8;
    c.d_inter = 16;
    c.n_heads = 2;
    c.vocab_size = 30;
    c.n_vision_tokens = 2;
    c.n_images = 3;
    c.max_seq_len = 12;
    return c;
}

} // namespace

TEST_CASE("last lens row is the model output distribution") {
    Model m(lens_config());
    const std::vector<size_t> ids = {3, 9, 27, 1};
    ForwardResult fr = m.forward(ids, size_t{1}, true);
    LensGrid grid = logit_lens(m, *fr.capture, 5);
    CHECK(grid.n_layers == 3);
    CHECK(grid.n_positions == 6);
    Tensor out = ad::softmax_rows(fr.logits).value();
    Tensor last = lens_distribution(m, fr.capture->layers.back().hidden);
    for (size_t i = 0; i < out.numel(); ++i) CHECK(std::abs(out[i] - last[i]) < 1e-12);
    for (size_t p = 0; p < 6; ++p) CHECK(grid.cells[2][p].top_probs[0] == last(p, grid.cells[2][p].top_ids[0]));
}

TEST_CASE("entropy bounds and top-k view") {
    const std::vector<double> uniform(30, 1.0 / 30.0);
    CHECK(std::abs(entropy_nats(uniform) - std::log(30.0)) < 1e-12);
    const std::vector<double> point = {0.0, 1.0, 0.0};
    CHECK(entropy_nats(point) == 0.0);

    const std::vector<double> probs = {0.1, 0.4, 0.2, 0.3};
    LensCell cell = lens_cell(probs, 2);
    CHECK(cell.top_ids == std::vector<size_t>{1, 3});
    CHECK(cell.top_probs == std::vector<double>{0.4, 0.3});

    Model m(lens_config());
    const std::vector<size_t> ids = {5, 6, 7};
    ForwardResult fr = m.forward(ids, size_t{0}, true);
    LensGrid grid = logit_lens(m, *fr.capture, 4);
    for (const auto & row : grid.cells) {
        for (const auto & c : row) {
            double s = 0.0;
            for (double p : c.top_probs) s += p;
            CHECK(s <= 1.0 + 1e-12);
            CHECK(c.entropy >= 0.0);
            CHECK(c.entropy <= std::log(30.0) + 1e-12);
            CHECK(std::is_sorted(c.top_probs.rbegin(), c.top_probs.rend()));
        }
    }
}

TEST_CASE("lens errors") {
    Model m(lens_config());
    ForwardCapture empty;
    CHECK_THROWS_AS(logit_lens(m, empty, 3), InvalidArgument);
    const std::vector<size_t> ids = {5};
    ForwardResult fr = m.forward(ids, size_t{0}, true);
    CHECK_THROWS_AS(logit_lens(m, *fr.capture, 0), InvalidArgument);
}

TEST_CASE("vision attention mass") {
    ModelConfig no_vision = lens_config();
    no_vision.n_vision_tokens = 0;
    Model plain(no_vision);
    const std::vector<size_t> ids = {1, 2, 3};
    ForwardResult text_only = plain.forward(ids, std::nullopt, true);
    CHECK_THROWS_AS(vision_attention_mass(*text_only.capture), InvalidArgument);

    // Uniform attention rows over T keys with v vision tokens give v/T.
    ForwardCapture uniform;
    uniform.n_vision_tokens = 2;
    const size_t T = 5;
    for (int l = 0; l < 2; ++l) {
        LayerCapture lc;
        lc.attention.assign(2, Tensor::filled(T, T, 1.0 / double(T)));
        uniform.layers.push_back(lc);
    }
    for (double f : vision_attention_mass(uniform)) CHECK(std::abs(f - 2.0 / 5.0) < 1e-15);

    Model m(lens_config());
    ForwardResult fr = m.forward(ids, size_t{2}, true);
    auto mass = vision_attention_mass(*fr.capture);
    CHECK(mass.size() == 3);
    for (const auto & layer : fr.capture->layers) {
        for (const auto & head : layer.attention) {
            for (size_t q = 0; q < head.rows(); ++q) {
                double s = 0.0;
                for (size_t k = 0; k < head.cols(); ++k) s += head(q, k);
                CHECK(std::abs(s - 1.0) < 1e-12);
            }
        }
    }
    for (double f : mass) CHECK((f >= 0.0 && f <= 1.0));
}

TEST_CASE("golden lens grid and attention series") {
    Model m(lens_config());
    const std::vector<size_t> ids = {4, 11, 19, 2};
    ForwardResult fr = m.forward(ids, size_t{1}, true);
    LensGrid grid = logit_lens(m, *fr.capture, 3);
    std::vector<double> flat;
    for (const auto & row : grid.cells)
        for (const auto & c : row) {
            flat.push_back(c.entropy);
            for (size_t i = 0; i < c.top_ids.size(); ++i) {
                flat.push_back(double(c.top_ids[i]));
                flat.push_back(c.top_probs[i]);
            }
        }
    CHECK(hex64(quantized_checksum(flat)) == "0878cdb282a36977");
    auto mass = vision_attention_mass(*fr.capture);
    CHECK(hex64(quantized_checksum(mass)) == "97880b161805ba0d");

    auto j = lens_to_json(grid);
    CHECK(j["format"] == "plast-lens");
    CHECK(j["layers"].size() == 3);
    auto a = attention_mass_to_json(mass, 2);
    CHECK(a["layers"][0]["layer"] == 1);
}
