#include "plast/error.h"
#include "plast/rng.h"
#include "plast/trace.h"

#include <doctest.h>

#include <filesystem>

using namespace plast;

namespace {

TraceFile random_trace(Rng & rng, size_t n_layers, size_t d_inter, size_t n_samples, const std::string & lang) {
    TraceFile t;
    t.n_layers = uint32_t(n_layers);
    t.d_inter = uint32_t(d_inter);
    t.language = lang;
    for (size_t s = 0; s < n_samples; ++s) {
        std::vector<NeuronMask> layers;
        for (size_t l = 0; l < n_layers; ++l) {
            NeuronMask m(d_inter);
            for (size_t j = 0; j < d_inter; ++j)
                if (rng.uniform() < 0.4) m.set(j);
            layers.push_back(m);
        }
        t.append_sample(layers);
    }
    return t;
}

std::filesystem::path scratch_dir(const std::string & name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("neuron mask bit layout") {
    NeuronMask m(70);
    m.set(0);
    m.set(63);
    m.set(64);
    m.set(69);
    CHECK(m.words().size() == 2);
    CHECK(m.words()[0] == ((uint64_t{1} << 63) | 1));
    CHECK(m.words()[1] == ((uint64_t{1} << 5) | 1));
    CHECK(m.count() == 4);
    CHECK(m.indices() == std::vector<size_t>{0, 63, 64, 69});
    CHECK_THROWS_AS(m.set(70), InvalidArgument);
}

TEST_CASE("mask set operations") {
    const std::vector<size_t> a_idx = {1, 2, 3}, b_idx = {2, 3, 4, 5};
    NeuronMask a = NeuronMask::from_indices(8, a_idx);
    NeuronMask b = NeuronMask::from_indices(8, b_idx);
    CHECK(a.intersect_count(b) == 2);
    NeuronMask u = a;
    u |= b;
    CHECK(u.count() == 5);
    CHECK(a.is_subset_of(u));
    CHECK_FALSE(u.is_subset_of(a));
    CHECK_THROWS_AS(a.intersect_count(NeuronMask(9)), ShapeError);
}

TEST_CASE("payload size for 3 samples, 2 layers, 70 neurons") {
    Rng rng(1);
    TraceFile t = random_trace(rng, 2, 70, 3, "de");
    CHECK(t.payload.size() * 8 == 96);
    auto bytes = encode_trace(t);
    const size_t header = 4 + 4 * 4 + 2 + 2;
    CHECK(bytes.size() == header + 96);
    CHECK(validate(t).empty());
}

TEST_CASE("header layout is little endian") {
    TraceFile t;
    t.n_layers = 2;
    t.d_inter = 3;
    t.language = "zh";
    t.n_samples = 1;
    t.payload = {0x0102030405060708ULL, 0x1ULL};
    const std::vector<uint8_t> want = {
        'P', 'L', 'T', 'R', 1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 'z', 'h',
        8, 7, 6, 5, 4, 3, 2, 1, 1, 0, 0, 0, 0, 0, 0, 0,
    };
    CHECK(encode_trace(t) == want);
    CHECK(decode_trace(want) == t);
}

TEST_CASE("decode rejects malformed files") {
    Rng rng(2);
    auto good = encode_trace(random_trace(rng, 3, 65, 2, "ru"));

    auto bad_magic = good;
    bad_magic[0] = 'Q';
    CHECK_THROWS_AS(decode_trace(bad_magic), FormatError);

    auto bad_version = good;
    bad_version[4] = 2;
    CHECK_THROWS_WITH_AS(decode_trace(bad_version), doctest::Contains("version"), FormatError);

    auto short_payload = good;
    short_payload.resize(short_payload.size() - 8);
    CHECK_THROWS_WITH_AS(decode_trace(short_payload), doctest::Contains("truncated"), FormatError);

    auto long_payload = good;
    long_payload.push_back(0);
    CHECK_THROWS_AS(decode_trace(long_payload), FormatError);

    CHECK_THROWS_AS(decode_trace(std::vector<uint8_t>{'P', 'L'}), FormatError);
}

TEST_CASE("validate reports violations") {
    Rng rng(3);
    TraceFile t = random_trace(rng, 2, 100, 2, "ar");
    CHECK(validate(t).empty());

    TraceFile no_samples = t;
    no_samples.n_samples = 0;
    no_samples.payload.clear();
    auto v = validate(no_samples);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("n_samples") != std::string::npos);

    TraceFile short_by_one = t;
    short_by_one.payload.pop_back();
    v = validate(short_by_one);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == "payload length: expected 64 bytes, actual 56");

    TraceFile no_lang = t;
    no_lang.language.clear();
    CHECK(validate(no_lang).size() == 1);

    TraceFile padded = t;
    padded.payload[1] |= uint64_t{1} << 40;
    CHECK(validate(padded).size() == 1);
}

TEST_CASE("round trip of 200 random trace files") {
    Rng rng(2025);
    auto dir = scratch_dir("plast_trace_roundtrip");
    for (int i = 0; i < 200; ++i) {
        const size_t d_inter = 1 + rng.below(300);
        TraceFile t = random_trace(rng, 1 + rng.below(6), d_inter, 1 + rng.below(5), "l" + std::to_string(i));
        auto path = dir / ("t" + std::to_string(i) + ".pltr");
        write_trace(t, path);
        TraceFile back = read_trace(path);
        CHECK(back == t);
        CHECK(encode_trace(back) == encode_trace(t));
        for (size_t s = 0; s < t.n_samples; ++s)
            for (size_t l = 1; l <= t.n_layers; ++l) CHECK(back.mask(s, l) == t.mask(s, l));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("trace directory is read in file-name order") {
    Rng rng(4);
    auto dir = scratch_dir("plast_trace_dir");
    write_trace(random_trace(rng, 2, 10, 1, "zh"), dir / "zh.pltr");
    write_trace(random_trace(rng, 2, 10, 1, "en"), dir / "en.pltr");
    auto traces = read_trace_dir(dir);
    REQUIRE(traces.size() == 2);
    CHECK(traces[0].language == "en");
    CHECK(traces[1].language == "zh");
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(read_trace_dir(dir), IoError);
    CHECK_THROWS_AS(read_trace(dir / "missing.pltr"), IoError);
}

TEST_CASE("mask access checks bounds") {
    Rng rng(5);
    TraceFile t = random_trace(rng, 2, 10, 2, "pt");
    CHECK_THROWS(t.mask(2, 1));
    CHECK_THROWS(t.mask(0, 0));
    CHECK_THROWS(t.mask(0, 3));
}
