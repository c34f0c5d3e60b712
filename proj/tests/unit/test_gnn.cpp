#include <doctest.h>

#include <cmath>

#include "csr/errors.hpp"
#include "csr/gnn.hpp"
#include "helpers.hpp"

using namespace csr;
using testing::edge;
using testing::graph;

namespace {

ModelDims small_dims(std::uint32_t relations = 5) {
    ModelDims d;
    d.num_relations = relations;
    d.relation_dim = 4;
    d.hidden_dim = 3;
    d.num_layers = 2;
    d.classifier_hidden = 4;
    return d;
}

using Vec = std::vector<double>;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straight-line encoder: loops over nodes, edges and weight entries.
Vec oracle_encode(const ModelParams& p, const ContextGraph& g, const Vec& m) {
    const std::size_t E = g.edges.size();
    std::vector<Vec> s(E);
    for (std::size_t e = 0; e < E; ++e) {
        auto row = p.relations.forward.row(g.edges[e].relation.value);
        s[e].assign(row.begin(), row.end());
    }
    auto node_states = [&](const std::vector<Vec>& st) {
        const std::size_t d = st.empty() ? p.dims.hidden_dim : st[0].size();
        std::vector<Vec> out(g.num_nodes, Vec(d + 2, 0.0));
        for (std::uint32_t v = 0; v < g.num_nodes; ++v) {
            double wsum = 0.0;
            Vec acc(d, 0.0);
            for (std::size_t e = 0; e < E; ++e) {
                const auto& ed = g.edges[e];
                if (ed.src != v && ed.dst != v) continue;  // self-loop counted once
                wsum += m[e];
                for (std::size_t j = 0; j < d; ++j) acc[j] += m[e] * st[e][j];
            }
            for (std::size_t j = 0; j < d; ++j) out[v][j] = acc[j] / (1.0 + wsum);
            out[v][d] = v == g.head ? 1.0 : 0.0;
            out[v][d + 1] = v == g.tail ? 1.0 : 0.0;
        }
        return out;
    };
    for (std::size_t l = 0; l < p.encoder.weights.size(); ++l) {
        auto nv = node_states(s);
        const auto& W = p.encoder.weights[l];
        const auto& b = p.encoder.biases[l];
        std::vector<Vec> next(E, Vec(W.cols(), 0.0));
        for (std::size_t e = 0; e < E; ++e) {
            Vec x;
            x.insert(x.end(), nv[g.edges[e].src].begin(), nv[g.edges[e].src].end());
            x.insert(x.end(), nv[g.edges[e].dst].begin(), nv[g.edges[e].dst].end());
            x.insert(x.end(), s[e].begin(), s[e].end());
            REQUIRE(x.size() == W.rows());
            for (std::size_t c = 0; c < W.cols(); ++c) {
                double z = b(0, c);
                for (std::size_t r = 0; r < W.rows(); ++r) z += x[r] * W(r, c);
                next[e][c] = logistic(z);
            }
        }
        s = next;
    }
    auto nv = node_states(s);
    const std::size_t w = nv[0].size();
    Vec pool(w, -INFINITY);
    for (const auto& row : nv)
        for (std::size_t j = 0; j < w; ++j) pool[j] = std::max(pool[j], row[j]);
    Vec out = pool;
    out.insert(out.end(), nv[g.head].begin(), nv[g.head].end());
    out.insert(out.end(), nv[g.tail].begin(), nv[g.tail].end());
    return out;
}

ContextGraph clique_graph(Rng& rng, std::uint32_t relations) {
    // Random simple graph over 6 nodes where every node touches an edge.
    for (;;) {
        auto g = testing::random_graph(rng, 6, 9, relations);
        std::vector<int> deg(6, 0);
        for (auto& e : g.edges) deg[e.src]++, deg[e.dst]++;
        bool ok = true;
        for (int d : deg) ok = ok && d > 0;
        if (ok) return g;
    }
}

}  // namespace

TEST_CASE("encoder matches a hand-unrolled oracle on a two-edge path") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto p = init_model(small_dims(), seed, 2.0);
        auto g = graph(3, {edge(0, 1, 2), edge(2, 3, 1)});
        for (Vec m : {Vec{1.0, 1.0}, Vec{0.3, 0.8}}) {
            auto got = encode(p, g, Matrix::column(m));
            auto want = oracle_encode(p, g, m);
            REQUIRE(got.cols() == want.size());
            for (std::size_t j = 0; j < want.size(); ++j) CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("encoder matches the oracle on random multigraphs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        auto p = init_model(small_dims(), seed, 3.0);
        auto g = testing::random_graph(rng, 5, 8, 5);
        Vec m;
        for (std::size_t e = 0; e < g.edges.size(); ++e) m.push_back(rng.uniform());
        auto got = encode(p, g, Matrix::column(m));
        auto want = oracle_encode(p, g, m);
        for (std::size_t j = 0; j < want.size(); ++j) CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
    }
}

TEST_CASE("zero mask equals deleting every edge") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 100);
        auto p = init_model(small_dims(), seed);
        auto g = clique_graph(rng, 5);
        auto zero = encode(p, g, Matrix(g.num_edges(), 1, 0.0));
        ContextGraph bare = g;
        bare.edges.clear();
        auto none = encode(p, bare, Matrix(0, 1));
        CHECK(zero == none);
    }
}

TEST_CASE("zero-weight edges vanish") {
    Rng rng(9);
    auto p = init_model(small_dims(), 4, 2.0);
    auto g = clique_graph(rng, 5);
    Matrix m(g.num_edges(), 1, 1.0);
    m[2] = 0.0;
    m[5] = 0.0;
    auto a = encode(p, g, m);
    auto h = remove_edges(g, {2, 5});
    auto b = encode(p, h, Matrix(h.num_edges(), 1, 1.0));
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
}

TEST_CASE("encode is invariant to node and edge permutation") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        auto p = init_model(small_dims(), seed, 2.0);
        auto g = clique_graph(rng, 5);
        std::vector<std::uint32_t> perm{0, 1, 2, 3, 4, 5};
        rng.shuffle(perm);
        auto q = permute_nodes(g, perm);
        std::vector<std::size_t> order(q.edges.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        ContextGraph r = q;
        Vec m(g.edges.size()), mr(g.edges.size());
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform();
        for (std::size_t i = 0; i < order.size(); ++i) {
            r.edges[i] = q.edges[order[i]];
            mr[i] = m[order[i]];
        }
        auto a = encode(p, g, Matrix::column(m));
        auto b = encode(p, r, Matrix::column(mr));
        for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
        auto da = decode(p, g, a);
        auto db = decode(p, r, a);
        for (std::size_t i = 0; i < order.size(); ++i) CHECK(db[i] == doctest::Approx(da[order[i]]).epsilon(1e-12));
    }
}

TEST_CASE("decode range and determinism") {
    Rng rng(2);
    auto p = init_model(small_dims(), 8, 5.0);
    auto g = clique_graph(rng, 5);
    Matrix b(1, p.dims.embedding_dim());
    for (std::size_t j = 0; j < b.size(); ++j) b[j] = rng.uniform(-20, 20);
    auto m1 = decode(p, g, b);
    auto m2 = decode(p, g, b);
    CHECK(m1 == m2);
    REQUIRE(m1.rows() == g.num_edges());
    for (std::size_t e = 0; e < m1.size(); ++e) {
        CHECK(m1[e] > 0.0);
        CHECK(m1[e] < 1.0);
    }
}

TEST_CASE("dimension mismatches") {
    auto p = init_model(small_dims(), 1);
    auto g = graph(3, {edge(0, 1, 2), edge(2, 3, 1)});
    CHECK_THROWS_AS(encode(p, g, Matrix(3, 1, 1.0)), ArgumentError);
    CHECK_THROWS_AS(decode(p, g, Matrix(1, 7)), ArgumentError);
    auto bad = graph(3, {edge(0, 9, 2)});
    CHECK_THROWS_AS(encode(p, bad, Matrix(1, 1, 1.0)), ArgumentError);
}

TEST_CASE("edgeless graph encodes to indicators only") {
    auto p = init_model(small_dims(), 1);
    auto g = graph(2, {});
    auto b = encode(p, g, Matrix(0, 1));
    const std::size_t w = p.dims.node_state_dim();
    CHECK(b.size() == 3 * w);
    CHECK(b[w - 2] == 1.0);  // pooled head flag
    CHECK(b[w - 1] == 1.0);
    CHECK(b[2 * w - 2] == 1.0);
    CHECK(b[3 * w - 1] == 1.0);
}

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

// Five-point central difference.
template <class F>
double derivative(F f, double h) {
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h);
}

}  // namespace

TEST_CASE("mask gradient of cosine matches central differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 500);
        auto p = init_model(small_dims(), seed, 2.0);
        auto g = clique_graph(rng, 5);
        Matrix c(1, p.dims.embedding_dim());
        for (std::size_t j = 0; j < c.size(); ++j) c[j] = rng.uniform(-1, 1);
        Matrix m(g.num_edges(), 1);
        for (std::size_t e = 0; e < m.size(); ++e) m[e] = rng.uniform(0.1, 0.9);
        auto plan = plan_graph(g);
        auto f = [&](ad::Tape& tape, std::span<const ad::Var> in) {
            auto model = bind_model(tape, p, false);
            return ad::cosine(encode(tape, model, plan, in[0]), tape.constant(c));
        };
        auto vg = value_and_grad(f, {m});
        for (std::size_t e = 0; e < m.size(); ++e) {
            const double fd = derivative(
                [&](double d) {
                    Matrix x = m;
                    x[e] += d;
                    return cosine(encode(p, g, x), c);
                },
                1e-5);
            INFO("seed " << seed << " edge " << e << " an " << vg.grads[0][e] << " fd " << fd);
            CHECK(rel_err(vg.grads[0][e], fd) < 1e-4);
        }
    }
}

TEST_CASE("parameter gradients of the decoder match central differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(seed + 900);
        auto p = init_model(small_dims(), seed, 2.0);
        auto g = clique_graph(rng, 5);
        Matrix target(g.num_edges(), 1);
        for (std::size_t e = 0; e < target.size(); ++e) target[e] = rng.bernoulli(0.5);
        auto plan = plan_graph(g);
        auto value = [&](const ModelParams& q) {
            ad::Tape tape;
            auto model = bind_model(tape, q, false);
            auto b = encode(tape, model, plan, tape.constant(full_mask(g)));
            return ad::binary_cross_entropy(decode(tape, model, plan, b), target).scalar();
        };
        auto vg = value_and_grad_params(
            [&](ad::Tape& tape, const BoundModel& model) {
                auto b = encode(tape, model, plan, tape.constant(full_mask(g)));
                return ad::binary_cross_entropy(decode(tape, model, plan, b), target);
            },
            p);
        auto mats = p.trainable();
        for (std::size_t k = 0; k < mats.size(); ++k) {
            for (int trial = 0; trial < 3; ++trial) {
                const std::size_t i = rng.uniform_index(mats[k]->size());
                const double fd = derivative(
                    [&](double d) {
                        ModelParams q = p;
                        (*q.trainable()[k])[i] += d;
                        return value(q);
                    },
                    1e-4);
                const double an = vg.grads[k][i];
                
                INFO("matrix " << k << " entry " << i << " an " << an << " fd " << fd);
                CHECK(rel_err(an, fd) < 1e-4);
            }
        }
    }
}
