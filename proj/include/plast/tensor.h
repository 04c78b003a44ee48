#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace plast {

// Dense row-major f64 array. Library code works on rank-2 tensors; a scalar
// is {1, 1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<size_t> shape);
    Tensor(std::vector<size_t> shape, std::vector<double> data);

    static Tensor zeros(size_t rows, size_t cols);
    static Tensor filled(size_t rows, size_t cols, double v);
    static Tensor matrix(size_t rows, size_t cols, std::initializer_list<double> values);
    static Tensor scalar(double v);
    static Tensor identity(size_t n);

    const std::vector<size_t> & shape() const noexcept { return shape_; }
    size_t rank() const noexcept { return shape_.size(); }
    size_t numel() const noexcept { return data_.size(); }
    size_t rows() const;
    size_t cols() const;

    double * data() noexcept { return data_.data(); }
    const double * data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    double & operator()(size_t r, size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(size_t r, size_t c) const { return data_[r * shape_[1] + c]; }
    double & operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    std::span<double> row(size_t r);
    std::span<const double> row(size_t r) const;

    void fill(double v);
    bool all_finite() const noexcept;
    bool same_shape(const Tensor & o) const noexcept { return shape_ == o.shape_; }

    bool operator==(const Tensor & o) const = default;

private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<size_t> & shape);

// 64-bit FNV-1a over the little-endian bytes of the payload.
uint64_t checksum(const Tensor & t);
uint64_t checksum_bytes(std::span<const uint8_t> bytes, uint64_t seed = 0xcbf29ce484222325ULL);

// Checksum of values rounded to a fixed grid; stable under last-ulp libm
// differences, used for golden values in tests.
uint64_t quantized_checksum(std::span<const double> values, double grid = 1e-9);

std::string hex64(uint64_t v);

} // namespace plast
