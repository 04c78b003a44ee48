#include "plast/trace.h"

#include "binary_io.h"
#include "plast/error.h"

#include <algorithm>
#include <bit>

namespace plast {

NeuronMask::NeuronMask(size_t width, std::span<const uint64_t> words)
    : width_(width), words_(words.begin(), words.end()) {
    if (words_.size() != word_count(width)) throw InvalidArgument("NeuronMask: word count does not match width");
}

NeuronMask NeuronMask::from_indices(size_t width, std::span<const size_t> indices) {
    NeuronMask m(width);
    for (size_t j : indices) m.set(j);
    return m;
}

void NeuronMask::set(size_t j) {
    if (j >= width_) throw InvalidArgument("NeuronMask: index " + std::to_string(j) + " >= width " + std::to_string(width_));
    words_[j / 64] |= uint64_t{1} << (j % 64);
}

bool NeuronMask::test(size_t j) const {
    if (j >= width_) return false;
    return (words_[j / 64] >> (j % 64)) & 1u;
}

size_t NeuronMask::count() const noexcept {
    size_t n = 0;
    for (uint64_t w : words_) n += size_t(std::popcount(w));
    return n;
}

void NeuronMask::check_same_width(const NeuronMask & o) const {
    if (o.width_ != width_) {
        throw ShapeError("NeuronMask: width mismatch " + std::to_string(width_) + " vs " + std::to_string(o.width_));
    }
}

NeuronMask & NeuronMask::operator|=(const NeuronMask & o) {
    check_same_width(o);
    for (size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
    return *this;
}

size_t NeuronMask::intersect_count(const NeuronMask & o) const {
    check_same_width(o);
    size_t n = 0;
    for (size_t i = 0; i < words_.size(); ++i) n += size_t(std::popcount(words_[i] & o.words_[i]));
    return n;
}

bool NeuronMask::is_subset_of(const NeuronMask & o) const {
    check_same_width(o);
    for (size_t i = 0; i < words_.size(); ++i) {
        if (words_[i] & ~o.words_[i]) return false;
    }
    return true;
}

std::vector<size_t> NeuronMask::indices() const {
    std::vector<size_t> out;
    for (size_t i = 0; i < words_.size(); ++i) {
        uint64_t w = words_[i];
        while (w) {
            out.push_back(i * 64 + size_t(std::countr_zero(w)));
            w &= w - 1;
        }
    }
    return out;
}

NeuronMask TraceFile::mask(size_t sample, size_t layer) const {
    if (sample >= n_samples || layer < 1 || layer > n_layers) throw InvalidArgument("TraceFile::mask: index out of range");
    const size_t wpm = words_per_mask();
    const size_t off = (sample * n_layers + (layer - 1)) * wpm;
    if (off + wpm > payload.size()) throw FormatError("TraceFile::mask: payload too short");
    return NeuronMask(d_inter, std::span<const uint64_t>(payload).subspan(off, wpm));
}

void TraceFile::append_sample(std::span<const NeuronMask> per_layer) {
    if (per_layer.size() != n_layers) throw ShapeError("TraceFile::append_sample: expected one mask per layer");
    for (const auto & m : per_layer) {
        if (m.width() != d_inter) throw ShapeError("TraceFile::append_sample: mask width differs from d_inter");
        payload.insert(payload.end(), m.words().begin(), m.words().end());
    }
    ++n_samples;
}

namespace {

constexpr char kMagic[4] = {'P', 'L', 'T', 'R'};

} // namespace

std::vector<uint8_t> encode_trace(const TraceFile & t) {
    if (t.language.size() > UINT16_MAX) throw InvalidArgument("trace: language tag too long");
    detail::ByteWriter w;
    for (char c : kMagic) w.u8(static_cast<uint8_t>(c));
    w.u32(kTraceVersion);
    w.u32(t.n_layers);
    w.u32(t.d_inter);
    w.u32(t.n_samples);
    w.u16(static_cast<uint16_t>(t.language.size()));
    w.text(t.language);
    for (uint64_t word : t.payload) w.u64(word);
    return std::move(w.buffer());
}

TraceFile decode_trace(std::span<const uint8_t> bytes) {
    detail::ByteReader r(bytes, "trace");
    for (char c : kMagic) {
        if (r.u8() != static_cast<uint8_t>(c)) throw FormatError("trace: bad magic (expected PLTR)");
    }
    const uint32_t version = r.u32();
    if (version != kTraceVersion) {
        throw FormatError("trace: version mismatch (file " + std::to_string(version) + ", supported " +
                          std::to_string(kTraceVersion) + ")");
    }
    TraceFile t;
    t.n_layers = r.u32();
    t.d_inter = r.u32();
    t.n_samples = r.u32();
    t.language = r.text(r.u16());
    const size_t words = t.expected_payload_words();
    if (r.remaining() < words * 8) {
        throw FormatError("trace: truncated payload (expected " + std::to_string(words * 8) + " bytes, found " +
                          std::to_string(r.remaining()) + ")");
    }
    if (r.remaining() > words * 8) throw FormatError("trace: trailing bytes after payload");
    t.payload.resize(words);
    for (auto & w : t.payload) w = r.u64();
    return t;
}

void write_trace(const TraceFile & t, const std::filesystem::path & path) {
    detail::write_file_bytes(path, encode_trace(t));
}

TraceFile read_trace(const std::filesystem::path & path) {
    return decode_trace(detail::read_file_bytes(path));
}

std::vector<std::string> validate(const TraceFile & t) {
    std::vector<std::string> v;
    if (t.language.empty()) v.push_back("language tag is empty");
    if (t.n_samples < 1) v.push_back("n_samples must be >= 1");
    if (t.n_layers < 1) v.push_back("n_layers must be >= 1");
    if (t.d_inter < 1) v.push_back("d_inter must be >= 1");
    const size_t expected = t.expected_payload_words();
    if (t.payload.size() != expected) {
        v.push_back("payload length: expected " + std::to_string(expected * 8) + " bytes, actual " +
                    std::to_string(t.payload.size() * 8));
    } else if (t.d_inter % 64 != 0 && t.d_inter > 0) {
        const uint64_t pad_mask = ~uint64_t{0} << (t.d_inter % 64);
        const size_t wpm = t.words_per_mask();
        for (size_t m = 0; m * wpm < t.payload.size(); ++m) {
            if (t.payload[m * wpm + wpm - 1] & pad_mask) {
                v.push_back("padding bits set beyond d_inter in mask " + std::to_string(m));
                break;
            }
        }
    }
    return v;
}

std::vector<TraceFile> read_trace_dir(const std::filesystem::path & dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto & e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".pltr") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<TraceFile> out;
    for (const auto & f : files) out.push_back(read_trace(f));
    return out;
}

} // namespace plast
