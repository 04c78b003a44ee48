#pragma once

// Independent reference implementations used only by tests. None of them
// call into the library code paths they are used to check.

#include "plast/rng.h"
#include "plast/tensor.h"

#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const plast::Tensor & t) {
    Matrix m(t.rows(), std::vector<double>(t.cols()));
    for (size_t i = 0; i < t.rows(); ++i)
        for (size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
    return m;
}

inline Matrix matmul(const Matrix & a, const Matrix & b) {
    Matrix out(a.size(), std::vector<double>(b.front().size(), 0.0));
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.front().size(); ++j) {
            double s = 0.0;
            for (size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
            out[i][j] = s;
        }
    return out;
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

// [f(h W_gate) * (h W_up)] W_down, one scalar at a time.
inline Matrix ffn(const Matrix & h, const Matrix & gate, const Matrix & up, const Matrix & down,
                  const std::function<double(double)> & f = silu) {
    const size_t n = h.size(), d = h.front().size(), inter = gate.front().size(), out_w = down.front().size();
    Matrix out(n, std::vector<double>(out_w, 0.0));
    for (size_t r = 0; r < n; ++r) {
        std::vector<double> act(inter);
        for (size_t j = 0; j < inter; ++j) {
            double g = 0.0, u = 0.0;
            for (size_t k = 0; k < d; ++k) {
                g += h[r][k] * gate[k][j];
                u += h[r][k] * up[k][j];
            }
            act[j] = f(g) * u;
        }
        for (size_t c = 0; c < out_w; ++c) {
            double s = 0.0;
            for (size_t j = 0; j < inter; ++j) s += act[j] * down[j][c];
            out[r][c] = s;
        }
    }
    return out;
}

inline plast::Tensor random_tensor(plast::Rng & rng, size_t rows, size_t cols, double scale = 1.0) {
    plast::Tensor t = plast::Tensor::zeros(rows, cols);
    for (double & v : t.values()) v = scale * rng.normal();
    return t;
}

// Central difference of f with respect to *x.
inline double central_difference(const std::function<double()> & f, double * x, double h = 1e-5) {
    const double saved = *x;
    *x = saved + h;
    const double up = f();
    *x = saved - h;
    const double down = f();
    *x = saved;
    return (up - down) / (2.0 * h);
}

// Relative error with an absolute floor for gradients that are ~0.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

// MSD via the pairwise identity Var = 1/(2n^2) sum_{a,b} (x_a - x_b)^2.
inline double pairwise_variance(const std::vector<double> & xs) {
    const double n = double(xs.size());
    double s = 0.0;
    for (double a : xs)
        for (double b : xs) s += (a - b) * (a - b);
    return s / (2.0 * n * n);
}

struct SelectionOutcome {
    bool ok = false;
    std::string failure; // "empty_k" or "empty_s" when !ok
    size_t boundary = 0;
    std::set<size_t> k;
    double theta = 0.0;
    std::set<size_t> selected;
};

// End-to-end layer selection written from the definitions: boundary is the
// first layer no other layer beats, K precedes it, theta is the mean MSD over
// K, S is every layer of K strictly above theta.
inline SelectionOutcome select(const Matrix & ratio, const std::vector<double> & avg) {
    SelectionOutcome o;
    for (size_t i = 0; i < avg.size(); ++i) {
        bool is_max = true;
        for (size_t j = 0; j < avg.size(); ++j) {
            if (j < i && avg[j] >= avg[i]) is_max = false;
            if (j > i && avg[j] > avg[i]) is_max = false;
        }
        if (is_max) {
            o.boundary = i + 1;
            break;
        }
    }
    for (size_t l = 1; l < o.boundary; ++l) o.k.insert(l);
    if (o.k.empty()) {
        o.failure = "empty_k";
        return o;
    }
    std::vector<double> msd;
    for (size_t l : o.k) {
        std::vector<double> col;
        for (const auto & row : ratio) col.push_back(row[l - 1]);
        msd.push_back(pairwise_variance(col));
    }
    double sum = 0.0;
    for (double m : msd) sum += m;
    o.theta = sum / double(msd.size());
    size_t idx = 0;
    for (size_t l : o.k) {
        if (msd[idx++] > o.theta) o.selected.insert(l);
    }
    if (o.selected.empty()) {
        o.failure = "empty_s";
        return o;
    }
    o.ok = true;
    return o;
}

} // namespace oracle
