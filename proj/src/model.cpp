#include "plast/model.h"

#include "plast/error.h"
#include "plast/rng.h"

#include <cmath>

namespace plast {

using ad::Var;

void ModelConfig::validate() const {
    auto fail = [](const std::string & m) { throw ConfigError("model config: " + m); };
    if (n_layers < 2) fail("n_layers must be >= 2");
    if (d_model == 0 || d_inter == 0 || n_heads == 0 || vocab_size == 0 || max_seq_len == 0) {
        fail("dimensions must be positive");
    }
    if (d_model % n_heads != 0) fail("n_heads must divide d_model");
    if (n_vision_tokens > 0 && n_images == 0) fail("n_images must be positive when vision tokens are used");
    if (n_vision_tokens >= max_seq_len) fail("n_vision_tokens must leave room for text in max_seq_len");
    if (!std::isfinite(gate_offset)) fail("gate_offset must be finite");
}

Model::Model(const ModelConfig & config) : config_(config) {
    config_.validate();
    const size_t d = config_.d_model;
    const double emb_std = 0.5;
    const double w_std = 1.0 / std::sqrt(double(d));

    tok_emb_ = add_param("tok_emb", config_.vocab_size, d, emb_std);
    pos_emb_ = add_param("pos_emb", config_.max_seq_len, d, emb_std);

    // Vision rows are drawn per image id so each id's block is independent of n_images.
    vision_table_ = add_param("vision.table", config_.n_images * config_.n_vision_tokens, d, 0.0);
    for (size_t id = 0; id < config_.n_images; ++id) {
        Tensor block = vision_embed(id);
        std::copy_n(block.data(), block.numel(), vision_table_.mutable_value().data() + id * block.numel());
    }
    vision_proj_ = add_param("vision.proj", d, d, w_std);

    for (size_t i = 1; i <= config_.n_layers; ++i) {
        const std::string p = "layers." + std::to_string(i) + ".";
        DecoderLayer l;
        l.ln1_gain = add_param(p + "ln1.gain", 1, d, 0.0, 1.0);
        l.ln1_bias = add_param(p + "ln1.bias", 1, d, 0.0);
        l.wq = add_param(p + "attn.wq", d, d, w_std);
        l.wk = add_param(p + "attn.wk", d, d, w_std);
        l.wv = add_param(p + "attn.wv", d, d, w_std);
        l.wo = add_param(p + "attn.wo", d, d, w_std / std::sqrt(2.0 * config_.n_layers));
        l.ln2_gain = add_param(p + "ln2.gain", 1, d, 0.0, 1.0);
        // Bias 1 in every feature plus a column mean of offset/d puts the
        // gate pre-activation near offset before any training.
        l.ln2_bias = add_param(p + "ln2.bias", 1, d, 0.0, 1.0);
        l.ffn_gate = add_param(p + "ffn.gate", d, config_.d_inter, w_std, config_.gate_offset / double(d));
        l.ffn_up = add_param(p + "ffn.up", d, config_.d_inter, w_std);
        l.ffn_down = add_param(p + "ffn.down", config_.d_inter, d,
                               1.0 / std::sqrt(double(config_.d_inter) * 2.0 * config_.n_layers));
        layers_.push_back(l);
    }
    lnf_gain_ = add_param("ln_f.gain", 1, d, 0.0, 1.0);
    lnf_bias_ = add_param("ln_f.bias", 1, d, 0.0);
    lm_head_ = add_param("lm_head", d, config_.vocab_size, 0.02);
    freeze_all();
}

Var Model::add_param(const std::string & name, size_t rows, size_t cols, double stddev, double fill) {
    Tensor t = Tensor::filled(rows, cols, fill);
    if (stddev > 0.0) {
        Rng rng(mix_seed(config_.seed, hash_name(name)));
        for (double & v : t.values()) v += stddev * rng.normal();
    }
    Var v = ad::param(std::move(t), false);
    params_.push_back({name, v});
    return v;
}

Tensor Model::vision_embed(size_t image_id) const {
    if (image_id >= config_.n_images) {
        throw InvalidArgument("unknown image id " + std::to_string(image_id));
    }
    Tensor t = Tensor::zeros(config_.n_vision_tokens, config_.d_model);
    Rng rng(mix_seed(mix_seed(config_.seed, hash_name("vision")), image_id));
    for (double & v : t.values()) v = rng.normal();
    return t;
}

const DecoderLayer & Model::layer(size_t index) const {
    if (index < 1 || index > layers_.size()) throw InvalidArgument("layer index out of range: " + std::to_string(index));
    return layers_[index - 1];
}

Var Model::ffn_forward(const DecoderLayer & layer, const Var & h, Tensor * capture) const {
    if (h.value().rank() != 2 || h.cols() != config_.d_model) {
        throw ShapeError("ffn_forward: input width must be d_model=" + std::to_string(config_.d_model));
    }
    Var gate = ad::matmul(h, layer.ffn_gate);
    if (capture) *capture = gate.value();
    Var up = ad::matmul(h, layer.ffn_up);
    return ad::matmul(ad::mul(ad::activate(gate, config_.activation), up), layer.ffn_down);
}

Var Model::head(const Var & hidden) const {
    return ad::matmul(ad::layer_norm(hidden, lnf_gain_, lnf_bias_), lm_head_);
}

ForwardResult Model::forward(std::span<const size_t> token_ids, std::optional<size_t> image_id, bool capture) const {
    const size_t nv = image_id ? config_.n_vision_tokens : 0;
    const size_t total = nv + token_ids.size();
    if (total == 0) throw InvalidArgument("forward: empty input");
    if (total > config_.max_seq_len) {
        throw InvalidArgument("forward: sequence length " + std::to_string(total) + " exceeds max_seq_len " +
                              std::to_string(config_.max_seq_len));
    }
    for (size_t id : token_ids) {
        if (id >= config_.vocab_size) throw InvalidArgument("forward: unknown token id " + std::to_string(id));
    }

    Var x;
    Var text = token_ids.empty() ? Var() : ad::gather_rows(tok_emb_, token_ids);
    if (nv > 0) {
        std::vector<size_t> rows(nv);
        for (size_t i = 0; i < nv; ++i) rows[i] = *image_id * nv + i;
        if (*image_id >= config_.n_images) throw InvalidArgument("unknown image id " + std::to_string(*image_id));
        Var vis = ad::matmul(ad::gather_rows(vision_table_, rows), vision_proj_);
        x = text ? ad::concat_rows(vis, text) : vis;
    } else {
        x = text;
    }
    std::vector<size_t> positions(total);
    for (size_t i = 0; i < total; ++i) positions[i] = i;
    x = ad::add(x, ad::gather_rows(pos_emb_, positions));

    ForwardResult result;
    if (capture) {
        result.capture.emplace();
        result.capture->n_vision_tokens = nv;
        result.capture->layers.resize(layers_.size());
    }

    const size_t dh = config_.d_model / config_.n_heads;
    const double att_scale = 1.0 / std::sqrt(double(dh));
    for (size_t li = 0; li < layers_.size(); ++li) {
        const DecoderLayer & L = layers_[li];
        LayerCapture * cap = capture ? &result.capture->layers[li] : nullptr;

        Var xn = ad::layer_norm(x, L.ln1_gain, L.ln1_bias);
        Var q = ad::matmul(xn, L.wq);
        Var k = ad::matmul(xn, L.wk);
        Var v = ad::matmul(xn, L.wv);
        std::vector<Var> heads;
        heads.reserve(config_.n_heads);
        for (size_t h = 0; h < config_.n_heads; ++h) {
            Var qh = ad::slice_cols(q, h * dh, dh);
            Var kh = ad::slice_cols(k, h * dh, dh);
            Var vh = ad::slice_cols(v, h * dh, dh);
            Var att = ad::causal_softmax(ad::scale(ad::matmul(qh, ad::transpose(kh)), att_scale));
            if (cap) cap->attention.push_back(att.value());
            heads.push_back(ad::matmul(att, vh));
        }
        Var h = ad::add(x, ad::matmul(ad::concat_cols(heads), L.wo));
        Var hn = ad::layer_norm(h, L.ln2_gain, L.ln2_bias);
        x = ad::add(h, ffn_forward(L, hn, cap ? &cap->gate_preact : nullptr));
        if (cap) cap->hidden = x.value();
    }
    result.logits = head(x);
    return result;
}

void Model::freeze_all() {
    for (auto & p : params_) p.var.set_trainable(false);
}

void Model::set_trainable_layers(const std::set<size_t> & selected, bool include_projection) {
    if (selected.empty()) throw InvalidArgument("set_trainable_layers: empty selection");
    for (size_t i : selected) {
        if (i < 1 || i > layers_.size()) {
            throw InvalidArgument("set_trainable_layers: layer " + std::to_string(i) + " out of range 1.." +
                                  std::to_string(layers_.size()));
        }
    }
    freeze_all();
    for (size_t i : selected) {
        const DecoderLayer & L = layers_[i - 1];
        for (Var v : {L.ln1_gain, L.ln1_bias, L.wq, L.wk, L.wv, L.wo, L.ln2_gain, L.ln2_bias, L.ffn_gate, L.ffn_up,
                      L.ffn_down}) {
            v.set_trainable(true);
        }
    }
    if (include_projection) vision_proj_.set_trainable(true);
}

void Model::set_all_trainable(bool include_projection) {
    for (auto & p : params_) p.var.set_trainable(true);
    vision_table_.set_trainable(false);
    vision_proj_.set_trainable(include_projection);
}

std::vector<std::string> Model::trainable_names() const {
    std::vector<std::string> out;
    for (const auto & p : params_) {
        if (p.var.trainable()) out.push_back(p.name);
    }
    return out;
}

size_t Model::trainable_count() const {
    size_t n = 0;
    for (const auto & p : params_) {
        if (p.var.trainable()) n += p.var.value().numel();
    }
    return n;
}

size_t Model::layer_param_count() const {
    const size_t d = config_.d_model;
    return 4 * d + 4 * d * d + 3 * d * config_.d_inter;
}

std::map<std::string, uint64_t> Model::checksums() const {
    std::map<std::string, uint64_t> out;
    for (const auto & p : params_) out[p.name] = checksum(p.var.value());
    return out;
}

void Model::zero_grad() {
    for (auto & p : params_) p.var.zero_grad();
}

} // namespace plast
