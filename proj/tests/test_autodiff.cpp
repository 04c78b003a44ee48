#include "oracles.h"

#include "plast/autodiff.h"
#include "plast/error.h"

#include <doctest.h>

#include <cmath>

using namespace plast;
using namespace plast::ad;

TEST_CASE("matmul identity and unit row") {
    Var a = constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    CHECK(matmul(a, constant(Tensor::identity(2))).value() == a.value());

    Var row = constant(Tensor::matrix(1, 2, {1, 0}));
    Var col = constant(Tensor::matrix(2, 1, {2, 5}));
    Var r = matmul(row, col);
    CHECK(r.value().shape() == std::vector<size_t>{1, 1});
    CHECK(r.item() == 2.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = oracle::random_tensor(rng, 3, 4);
        Tensor b = oracle::random_tensor(rng, 4, 2);
        Tensor got = matmul(constant(a), constant(b)).value();
        auto want = oracle::matmul(oracle::to_matrix(a), oracle::to_matrix(b));
        for (size_t i = 0; i < 3; ++i)
            for (size_t j = 0; j < 2; ++j) CHECK(std::abs(got(i, j) - want[i][j]) < 1e-12);
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(matmul(constant(Tensor::zeros(2, 3)), constant(Tensor::zeros(2, 3))), ShapeError);
}

TEST_CASE("silu values") {
    Var x = constant(Tensor::matrix(1, 3, {0.0, 1.0, 40.0}));
    Tensor y = silu(x).value();
    CHECK(y[0] == 0.0);
    // 1 / (1 + e^-1) evaluated with mpmath at 30 digits.
    CHECK(std::abs(y[1] - 0.731058578630004879251159241821) < 1e-15);
    CHECK(std::abs(y[2] - 40.0) < 1e-12);
}

TEST_CASE("non-finite values are rejected") {
    Var x = constant(Tensor::matrix(1, 2, {1.0, NAN}));
    CHECK_THROWS_AS(silu(x), NumericError);
    CHECK_THROWS_AS(scale(constant(Tensor::scalar(1e308)), 1e10), NumericError);
}

TEST_CASE("backward of sum gives ones") {
    Var w = param(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    backward(sum(w));
    for (double g : w.grad().values()) CHECK(g == 1.0);
}

TEST_CASE("frozen-only graph leaves grads zero") {
    Var w = param(Tensor::matrix(2, 2, {1, 2, 3, 4}), false);
    Var loss = sum(matmul(w, w));
    CHECK_FALSE(loss.requires_grad());
    backward(loss);
    for (double g : w.grad().values()) CHECK(g == 0.0);
}

TEST_CASE("backward requires a scalar") {
    Var w = param(Tensor::zeros(2, 2));
    CHECK_THROWS_AS(backward(w), ShapeError);
}

TEST_CASE("freezing one node leaves the other gradients unchanged") {
    Rng rng(5);
    Var a = param(oracle::random_tensor(rng, 3, 4));
    Var b = param(oracle::random_tensor(rng, 4, 2));
    Var c = param(oracle::random_tensor(rng, 3, 2));
    auto loss_fn = [&] { return sum(mul(silu(matmul(a, b)), c)); };

    backward(loss_fn());
    const Tensor ga = a.grad(), gc = c.grad();

    a.zero_grad(); b.zero_grad(); c.zero_grad();
    b.set_trainable(false);
    backward(loss_fn());
    CHECK(a.grad() == ga);
    CHECK(c.grad() == gc);
    for (double g : b.grad().values()) CHECK(g == 0.0);
}

namespace {

// Checks d(loss)/d(p) for `probes` random entries of every parameter.
void check_gradients(const std::vector<Var> & params, const std::function<Var()> & loss_fn, Rng & rng,
                     int probes = 6) {
    for (Var p : params) p.zero_grad();
    backward(loss_fn());
    for (Var p : params) {
        Tensor analytic = p.grad();
        for (int k = 0; k < probes; ++k) {
            const size_t idx = rng.below(p.value().numel());
            double * slot = p.mutable_value().data() + idx;
            const double numeric = oracle::central_difference([&] { return loss_fn().item(); }, slot);
            CHECK(oracle::relative_error(analytic[idx], numeric) < 1e-4);
        }
    }
}

} // namespace

TEST_CASE("finite-difference gradients of every op") {
    Rng rng(2024);
    Var a = param(oracle::random_tensor(rng, 4, 5));
    Var b = param(oracle::random_tensor(rng, 5, 3));
    Var c = param(oracle::random_tensor(rng, 4, 3));
    Var gain = param(oracle::random_tensor(rng, 1, 5));
    Var bias = param(oracle::random_tensor(rng, 1, 5));
    Var bias3 = param(oracle::random_tensor(rng, 1, 3));
    Var table = param(oracle::random_tensor(rng, 6, 3));
    Var sq = param(oracle::random_tensor(rng, 4, 4));
    Var w = param(oracle::random_tensor(rng, 4, 3, 0.3));

    SUBCASE("matmul / mul / add / add_bias / scale") {
        check_gradients({a, b, c, bias3}, [&] {
            return sum(mul(add(add_bias(matmul(a, b), bias3), scale(c, 0.7)), c));
        }, rng);
    }
    SUBCASE("activations") {
        for (Activation act : {Activation::silu, Activation::gelu, Activation::relu}) {
            check_gradients({a, b, c}, [&] { return sum(mul(activate(matmul(a, b), act), c)); }, rng);
        }
    }
    SUBCASE("softmax rows and causal softmax") {
        check_gradients({sq, w}, [&] { return sum(mul(matmul(softmax_rows(sq), w), w)); }, rng);
        check_gradients({sq, w}, [&] { return sum(mul(matmul(causal_softmax(sq), w), w)); }, rng);
    }
    SUBCASE("layer norm") {
        check_gradients({a, gain, bias, b, c}, [&] { return sum(mul(matmul(layer_norm(a, gain, bias), b), c)); }, rng);
    }
    SUBCASE("gather, concat, slice, transpose") {
        const std::vector<size_t> ids = {0, 3, 3, 5};
        check_gradients({table, c, w}, [&] {
            Var g = gather_rows(table, ids);
            Var both = concat_rows(g, c);
            std::vector<Var> parts = {slice_cols(both, 0, 2), transpose(transpose(slice_cols(both, 1, 2)))};
            Var cat = concat_cols(parts);
            return sum(mul(cat, cat));
        }, rng);
    }
    SUBCASE("cross entropy") {
        const std::vector<size_t> targets = {2, 0, 1, 1};
        const std::vector<double> weights = {1.0, 0.0, 1.0, 0.5};
        check_gradients({a, b}, [&] { return cross_entropy(matmul(a, b), targets, weights); }, rng);
    }
}

TEST_CASE("repeat runs are bit-identical") {
    auto run = [] {
        Rng rng(9);
        Var a = param(oracle::random_tensor(rng, 3, 3));
        Var loss = sum(softmax_rows(matmul(a, a)));
        backward(loss);
        return std::make_pair(loss.item(), a.grad());
    };
    auto [l1, g1] = run();
    auto [l2, g2] = run();
    CHECK(l1 == l2);
    CHECK(g1 == g2);
}
