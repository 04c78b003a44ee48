#include "binary_io.h"
#include "plast/model.h"

namespace plast {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'C', 'K'};
constexpr uint32_t kVersion = 1;

uint32_t activation_code(ad::Activation a) {
    switch (a) {
        case ad::Activation::silu: return 0;
        case ad::Activation::gelu: return 1;
        case ad::Activation::relu: return 2;
    }
    return 0;
}

ad::Activation activation_from_code(uint32_t c) {
    switch (c) {
        case 0: return ad::Activation::silu;
        case 1: return ad::Activation::gelu;
        case 2: return ad::Activation::relu;
        default: throw FormatError("checkpoint: unknown activation code " + std::to_string(c));
    }
}

} // namespace

std::vector<uint8_t> serialize_checkpoint(const Model & model) {
    detail::ByteWriter w;
    for (char c : kMagic) w.u8(static_cast<uint8_t>(c));
    w.u32(kVersion);
    const ModelConfig & c = model.config();
    for (size_t v : {c.n_layers, c.d_model, c.d_inter, c.n_heads, c.vocab_size, c.n_vision_tokens, c.n_images,
                     c.max_seq_len}) {
        w.u32(static_cast<uint32_t>(v));
    }
    w.u32(activation_code(c.activation));
    w.u64(c.seed);
    w.f64(c.gate_offset);
    w.u32(static_cast<uint32_t>(model.parameters().size()));
    for (const auto & p : model.parameters()) {
        w.u32(static_cast<uint32_t>(p.name.size()));
        w.text(p.name);
        const Tensor & t = p.var.value();
        w.u32(static_cast<uint32_t>(t.rank()));
        for (size_t d : t.shape()) w.u64(d);
        for (double v : t.values()) w.f64(v);
    }
    return std::move(w.buffer());
}

Model deserialize_checkpoint(std::span<const uint8_t> bytes) {
    detail::ByteReader r(bytes, "checkpoint");
    for (char c : kMagic) {
        if (r.u8() != static_cast<uint8_t>(c)) throw FormatError("checkpoint: bad magic (expected PLCK)");
    }
    const uint32_t version = r.u32();
    if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    ModelConfig c;
    c.n_layers = r.u32();
    c.d_model = r.u32();
    c.d_inter = r.u32();
    c.n_heads = r.u32();
    c.vocab_size = r.u32();
    c.n_vision_tokens = r.u32();
    c.n_images = r.u32();
    c.max_seq_len = r.u32();
    c.activation = activation_from_code(r.u32());
    c.seed = r.u64();
    c.gate_offset = r.f64();

    Model model(c);
    const uint32_t count = r.u32();
    if (count != model.parameters().size()) {
        throw FormatError("checkpoint: expected " + std::to_string(model.parameters().size()) + " parameters, found " +
                          std::to_string(count));
    }
    for (const auto & p : model.parameters()) {
        const std::string name = r.text(r.u32());
        if (name != p.name) throw FormatError("checkpoint: expected parameter '" + p.name + "', found '" + name + "'");
        const uint32_t rank = r.u32();
        std::vector<size_t> shape(rank);
        for (auto & d : shape) d = r.u64();
        ad::Var var = p.var;
        Tensor & dst = var.mutable_value();
        if (shape != dst.shape()) {
            throw FormatError("checkpoint: shape mismatch for " + name + ": " + shape_string(shape) + " vs " +
                              shape_string(dst.shape()));
        }
        r.need(dst.numel() * 8);
        for (double & v : dst.values()) v = r.f64();
    }
    if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
    return model;
}

Model Model::clone() const { return deserialize_checkpoint(serialize_checkpoint(*this)); }

void save_checkpoint(const Model & model, const std::filesystem::path & path) {
    detail::write_file_bytes(path, serialize_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path & path) {
    return deserialize_checkpoint(detail::read_file_bytes(path));
}

} // namespace plast
