#include "plast/tensor.h"

#include "plast/error.h"

#include <bit>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>

namespace plast {

namespace {

size_t product(const std::vector<size_t> & shape) {
    return std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
}

} // namespace

Tensor::Tensor(std::vector<size_t> shape) : shape_(std::move(shape)), data_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (product(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::zeros(size_t rows, size_t cols) { return Tensor({rows, cols}); }

Tensor Tensor::filled(size_t rows, size_t cols, double v) {
    Tensor t({rows, cols});
    t.fill(v);
    return t;
}

Tensor Tensor::matrix(size_t rows, size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

Tensor Tensor::identity(size_t n) {
    Tensor t({n, n});
    for (size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

size_t Tensor::rows() const {
    if (shape_.size() != 2) throw ShapeError("expected rank-2 tensor, got " + shape_string(shape_));
    return shape_[0];
}

size_t Tensor::cols() const {
    if (shape_.size() != 2) throw ShapeError("expected rank-2 tensor, got " + shape_string(shape_));
    return shape_[1];
}

std::span<double> Tensor::row(size_t r) {
    const size_t c = cols();
    return {data_.data() + r * c, c};
}

std::span<const double> Tensor::row(size_t r) const {
    const size_t c = cols();
    return {data_.data() + r * c, c};
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string shape_string(const std::vector<size_t> & shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += " x ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

uint64_t checksum_bytes(std::span<const uint8_t> bytes, uint64_t seed) {
    uint64_t h = seed;
    for (uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

uint64_t mix_u64(uint64_t h, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

uint64_t checksum(const Tensor & t) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t d : t.shape()) h = mix_u64(h, d);
    for (double v : t.values()) h = mix_u64(h, std::bit_cast<uint64_t>(v));
    return h;
}

uint64_t quantized_checksum(std::span<const double> values, double grid) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values) {
        const auto q = static_cast<int64_t>(std::llround(v / grid));
        h = mix_u64(h, static_cast<uint64_t>(q));
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace plast
