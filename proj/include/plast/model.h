#pragma once

#include "plast/autodiff.h"
#include "plast/tensor.h"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace plast {

struct ModelConfig {
    size_t n_layers = 4;
    size_t d_model = 32;
    size_t d_inter = 128;
    size_t n_heads = 4;
    size_t vocab_size = 240;
    size_t n_vision_tokens = 4;
    size_t n_images = 16;
    size_t max_seq_len = 64;
    ad::Activation activation = ad::Activation::silu;
    uint64_t seed = 42;
    // Initial mean of each gate pre-activation in units of its spread; a
    // negative value starts the FFN sparse, as in pretrained LLMs.
    double gate_offset = -2.0;

    // Throws ConfigError naming the first violated constraint.
    void validate() const;

    bool operator==(const ModelConfig &) const = default;
};

struct DecoderLayer {
    ad::Var ln1_gain, ln1_bias;
    ad::Var wq, wk, wv, wo;
    ad::Var ln2_gain, ln2_bias;
    ad::Var ffn_gate; // [d_model x d_inter]
    ad::Var ffn_up;   // [d_model x d_inter]
    ad::Var ffn_down; // [d_inter x d_model]
};

struct LayerCapture {
    Tensor gate_preact;             // [seq x d_inter], input to f(.)
    Tensor hidden;                  // [seq x d_model], residual stream after the layer
    std::vector<Tensor> attention;  // per head [seq x seq]
};

struct ForwardCapture {
    size_t n_vision_tokens = 0;
    std::vector<LayerCapture> layers; // index 0 is layer 1
};

struct ForwardResult {
    ad::Var logits; // [seq_total x vocab]
    std::optional<ForwardCapture> capture;
};

struct NamedParam {
    std::string name;
    ad::Var var;
};

// Decoder-only model with pseudo-vision tokens prepended to the text.
// Layer indices in the public interface are 1-based.
class Model {
public:
    explicit Model(const ModelConfig & config);

    // Parameters are graph nodes; a plain copy would alias them.
    Model(const Model &) = delete;
    Model & operator=(const Model &) = delete;
    Model(Model &&) = default;
    Model & operator=(Model &&) = default;

    // Deep copy with independent parameter storage (all frozen).
    Model clone() const;

    const ModelConfig & config() const noexcept { return config_; }

    // image_id == nullopt runs text only (no vision tokens).
    ForwardResult forward(std::span<const size_t> token_ids, std::optional<size_t> image_id, bool capture) const;

    // Gated FFN on an already-normalised input; when capture is non-null the
    // gate pre-activation is stored there.
    ad::Var ffn_forward(const DecoderLayer & layer, const ad::Var & h, Tensor * capture) const;

    // Projected vision tokens are vision_embed(id) * vision.proj.
    Tensor vision_embed(size_t image_id) const;

    // Final norm + LM head applied to residual-stream states.
    ad::Var head(const ad::Var & hidden) const;

    void set_trainable_layers(const std::set<size_t> & selected, bool include_projection = false);
    void set_all_trainable(bool include_projection = true);
    void freeze_all();

    const std::vector<NamedParam> & parameters() const noexcept { return params_; }
    const DecoderLayer & layer(size_t index_1based) const;
    std::vector<std::string> trainable_names() const;
    size_t trainable_count() const;
    // Parameter count of one decoder layer.
    size_t layer_param_count() const;

    std::map<std::string, uint64_t> checksums() const;

    void zero_grad();

private:
    ad::Var add_param(const std::string & name, size_t rows, size_t cols, double stddev, double fill = 0.0);

    ModelConfig config_;
    std::vector<NamedParam> params_;
    ad::Var tok_emb_, pos_emb_, vision_table_, vision_proj_;
    std::vector<DecoderLayer> layers_;
    ad::Var lnf_gain_, lnf_bias_, lm_head_;
};

// Binary checkpoint: "PLCK", little endian, config block, then every
// parameter in declaration order.
void save_checkpoint(const Model & model, const std::filesystem::path & path);
Model load_checkpoint(const std::filesystem::path & path);
std::vector<uint8_t> serialize_checkpoint(const Model & model);
Model deserialize_checkpoint(std::span<const uint8_t> bytes);

} // namespace plast
