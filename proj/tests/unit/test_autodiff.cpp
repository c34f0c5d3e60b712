#include <doctest.h>

#include <cmath>
#include <functional>

#include "csr/autodiff.hpp"
#include "csr/errors.hpp"
#include "csr/gnn.hpp"
#include "csr/rng.hpp"

using namespace csr;
using Fn = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1, double hi = 1) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(lo, hi);
    return m;
}

// Projects an op's output onto a fixed random direction.
Fn scalarize(std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)> op, std::uint64_t seed) {
    return [op, seed](ad::Tape& t, std::span<const ad::Var> in) {
        ad::Var y = op(t, in);
        Rng rng(seed);
        Matrix w = random_matrix(rng, y.rows(), y.cols());
        return ad::sum(ad::mul(y, t.constant(w)));
    };
}

void check_gradients(const Fn& f, const std::vector<Matrix>& inputs) {
    auto vg = value_and_grad(f, inputs);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            auto at = [&](double d) {
                auto x = inputs;
                x[k][i] += d;
                return value_and_grad(f, x).value;
            };
            const double h = 1e-5;
            const double fd = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
            const double an = vg.grads[k][i];
            INFO("input " << k << " entry " << i << " analytic " << an << " numeric " << fd);
            CHECK(std::abs(an - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

}  // namespace

TEST_CASE("elementwise and linear ops") {
    Rng rng(1);
    auto a = random_matrix(rng, 3, 4), b = random_matrix(rng, 3, 4), c = random_matrix(rng, 4, 2);
    auto bias = random_matrix(rng, 1, 4);
    check_gradients(scalarize([](auto&, auto in) { return ad::matmul(in[0], in[1]); }, 1), {a, c});
    check_gradients(scalarize([](auto&, auto in) { return ad::add(in[0], in[1]); }, 2), {a, b});
    check_gradients(scalarize([](auto&, auto in) { return ad::sub(in[0], in[1]); }, 3), {a, b});
    check_gradients(scalarize([](auto&, auto in) { return ad::mul(in[0], in[1]); }, 4), {a, b});
    check_gradients(scalarize([](auto&, auto in) { return ad::scale(in[0], -2.5); }, 5), {a});
    check_gradients(scalarize([](auto&, auto in) { return ad::add_scalar(in[0], 0.7); }, 6), {a});
    check_gradients(scalarize([](auto&, auto in) { return ad::add_row(in[0], in[1]); }, 7), {a, bias});
    check_gradients(scalarize([](auto&, auto in) { return ad::sigmoid(in[0]); }, 8), {a});
    check_gradients(scalarize([](auto&, auto in) { return ad::relu(in[0]); }, 9), {a});
    check_gradients(scalarize([](auto&, auto in) { return ad::clamp_max(in[0], 0.3); }, 10), {a});
    auto sq = random_matrix(rng, 3, 3);
    check_gradients(scalarize([](auto&, auto in) { return ad::add_identity(in[0]); }, 11), {sq});
}

TEST_CASE("shape ops") {
    Rng rng(2);
    auto a = random_matrix(rng, 4, 3), b = random_matrix(rng, 4, 2);
    check_gradients(scalarize([](auto&, auto in) { return ad::concat_cols({in[0], in[1], in[0]}); }, 1), {a, b});
    check_gradients(scalarize([](auto&, auto in) { return ad::gather_rows(in[0], {3, 0, 0, 2}); }, 2), {a});
    check_gradients(scalarize([](auto&, auto in) { return ad::select_row(in[0], 2); }, 3), {a});
    check_gradients(scalarize([](auto&, auto in) { return ad::gather_entries(in[0], {{0, 1}, {3, 2}, {0, 1}}); }, 4),
                    {a});
    check_gradients(scalarize([](auto&, auto in) { return ad::append_indicators(in[0], 1, 3); }, 5), {a});
}

TEST_CASE("reductions") {
    Rng rng(3);
    auto a = random_matrix(rng, 4, 3), b = random_matrix(rng, 4, 3), r1 = random_matrix(rng, 1, 5),
         r2 = random_matrix(rng, 1, 5);
    check_gradients([](auto&, auto in) { return ad::sum(in[0]); }, {a});
    check_gradients([](auto&, auto in) { return ad::mean(in[0]); }, {a});
    check_gradients(scalarize([](auto&, auto in) { return ad::max_pool_rows(in[0]); }, 1), {a});
    check_gradients(scalarize([](auto&, auto in) { return ad::mean_of({in[0], in[1]}); }, 2), {a, b});
    check_gradients(scalarize([](auto&, auto in) { return ad::min_of({in[0], in[1]}); }, 3), {a, b});
    check_gradients([](auto&, auto in) { return ad::dot(in[0], in[1]); }, {r1, r2});
    check_gradients([](auto&, auto in) { return ad::cosine(in[0], in[1]); }, {r1, r2});
}

TEST_CASE("graph ops") {
    Rng rng(4);
    auto inc = std::make_shared<ad::Incidence>();
    inc->num_nodes = 4;
    inc->edges_of_node = {{0, 2}, {0, 1}, {1, 2, 3}, {3}};
    auto states = random_matrix(rng, 4, 3), mask = random_matrix(rng, 4, 1, 0.1, 0.9);
    check_gradients(scalarize([inc](auto&, auto in) { return ad::masked_mean_aggregate(in[0], in[1], inc); }, 1),
                    {states, mask});
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ends{{0, 1}, {1, 2}, {0, 2}, {2, 3}};
    check_gradients(scalarize([ends](auto&, auto in) { return ad::soft_adjacency(in[0], ends, 4); }, 2), {mask});
}

TEST_CASE("losses") {
    Rng rng(5);
    auto p = random_matrix(rng, 5, 1, 0.05, 0.95);
    Matrix y = Matrix::column({1, 0, 1, 1, 0});
    check_gradients([y](auto&, auto in) { return ad::binary_cross_entropy(in[0], y); }, {p});
    check_gradients([](auto&, auto in) { return ad::binary_entropy(in[0]); }, {p});
    ad::Tape t;
    auto half = t.constant(Matrix(3, 1, 0.5));
    CHECK(ad::binary_cross_entropy(half, Matrix(3, 1, 1.0)).scalar() == doctest::Approx(std::log(2.0)));
    auto perfect = t.constant(Matrix::column({1, 0}));
    CHECK(ad::binary_cross_entropy(perfect, Matrix::column({1, 0})).scalar() <= 1e-3);
}

TEST_CASE("backward requires a scalar and shapes must agree") {
    ad::Tape t;
    auto a = t.leaf(Matrix(2, 2, 1.0), true);
    auto b = t.leaf(Matrix(3, 2, 1.0), true);
    CHECK_THROWS_AS(ad::add(a, b), ArgumentError);
    CHECK_THROWS_AS(ad::matmul(b, b), ArgumentError);
    CHECK_THROWS(t.backward(a));
}

TEST_CASE("constants receive no gradient") {
    ad::Tape t;
    auto a = t.leaf(Matrix(1, 2, 1.0), true);
    auto c = t.constant(Matrix(1, 2, 3.0));
    auto y = ad::sum(ad::mul(a, c));
    t.backward(y);
    CHECK(t.grad(a)[0] == 3.0);
    CHECK(t.grad(c)[0] == 0.0);
}
