#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace plast {

// Fixed-width bit set over the neurons of one FFN layer; bit j lives in
// word j / 64 at position j % 64.
class NeuronMask {
public:
    NeuronMask() = default;
    explicit NeuronMask(size_t width) : width_(width), words_(word_count(width), 0) {}
    NeuronMask(size_t width, std::span<const uint64_t> words);

    static size_t word_count(size_t width) { return (width + 63) / 64; }
    static NeuronMask from_indices(size_t width, std::span<const size_t> indices);

    size_t width() const noexcept { return width_; }
    std::span<const uint64_t> words() const noexcept { return words_; }

    void set(size_t j);
    bool test(size_t j) const;
    size_t count() const noexcept;
    bool empty() const noexcept { return count() == 0; }

    // Both masks must have the same width.
    NeuronMask & operator|=(const NeuronMask & o);
    size_t intersect_count(const NeuronMask & o) const;
    bool is_subset_of(const NeuronMask & o) const;
    std::vector<size_t> indices() const;

    bool operator==(const NeuronMask & o) const = default;

private:
    void check_same_width(const NeuronMask & o) const;

    size_t width_ = 0;
    std::vector<uint64_t> words_;
};

// Per-language activation trace: for every sample and layer, the set of
// activated neurons. Payload is sample-major then layer-major.
struct TraceFile {
    uint32_t n_layers = 0;
    uint32_t d_inter = 0;
    std::string language;
    uint32_t n_samples = 0;
    std::vector<uint64_t> payload;

    size_t words_per_mask() const { return NeuronMask::word_count(d_inter); }
    size_t expected_payload_words() const { return size_t(n_samples) * n_layers * words_per_mask(); }

    // layer is 1-based.
    NeuronMask mask(size_t sample, size_t layer) const;
    void append_sample(std::span<const NeuronMask> per_layer);

    bool operator==(const TraceFile &) const = default;
};

inline constexpr uint32_t kTraceVersion = 1;

std::vector<uint8_t> encode_trace(const TraceFile & t);
TraceFile decode_trace(std::span<const uint8_t> bytes);
void write_trace(const TraceFile & t, const std::filesystem::path & path);
TraceFile read_trace(const std::filesystem::path & path);

// Empty result means the trace is well-formed.
std::vector<std::string> validate(const TraceFile & t);

// Reads every *.pltr file in a directory, sorted by file name.
std::vector<TraceFile> read_trace_dir(const std::filesystem::path & dir);

} // namespace plast
