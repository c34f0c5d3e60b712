#include <doctest.h>

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "csr/errors.hpp"
#include "csr/kg.hpp"
#include "helpers.hpp"

using namespace csr;
using testing::ent;
using testing::kg_from;

TEST_CASE("load two lines") {
    auto kg = kg_from("a\tr1\tb\nb\tr2\tc\n");
    CHECK(kg.num_entities() == 3);
    CHECK(kg.num_relations() == 2);
    CHECK(kg.num_triplets() == 2);
}

TEST_CASE("duplicate lines collapse") {
    auto kg = kg_from("a\tr1\tb\na\tr1\tb\n");
    CHECK(kg.num_triplets() == 1);
}

TEST_CASE("wrong field count names the line") {
    std::istringstream in("a\tr1\tb\n# note\na\tr1\n");
    try {
        parse_triplets(in);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("empty input and comments") {
    auto kg = kg_from("");
    CHECK(kg.num_triplets() == 0);
    auto kg2 = kg_from("# only a comment\n\n");
    CHECK(kg2.num_entities() == 0);
}

TEST_CASE("neighbors carry direction") {
    auto kg = kg_from("a\tr1\tb\nc\tr2\tc\n");
    auto na = kg.neighbors(ent(kg, "a"));
    REQUIRE(na.size() == 1);
    CHECK(kg.relation_name(na[0].relation) == "r1");
    CHECK(na[0].entity == ent(kg, "b"));
    CHECK(na[0].direction == Direction::Forward);
    auto nb = kg.neighbors(ent(kg, "b"));
    REQUIRE(nb.size() == 1);
    CHECK(nb[0].entity == ent(kg, "a"));
    CHECK(nb[0].direction == Direction::Backward);
    CHECK(kg.neighbors(ent(kg, "c")).size() == 2);  // self-loop, both sides
    CHECK_THROWS_AS(kg.neighbors(EntityId{99}), ArgumentError);
}

TEST_CASE("empty graph rejects every id") {
    KnowledgeGraph empty;
    CHECK_THROWS_AS(empty.neighbors(EntityId{0}), ArgumentError);
}

TEST_CASE("k-hop on a path") {
    auto kg = kg_from("a\tr\tb\nb\tr\tc\n");
    auto a = ent(kg, "a"), b = ent(kg, "b"), c = ent(kg, "c");
    std::vector<EntityId> k1{a, b}, k2{a, b, c};
    std::sort(k1.begin(), k1.end());
    std::sort(k2.begin(), k2.end());
    CHECK(kg.k_hop_neighborhood(a, 1) == k1);
    CHECK(kg.k_hop_neighborhood(a, 2) == k2);
    CHECK_THROWS_AS(kg.k_hop_neighborhood(EntityId{7}, 1), ArgumentError);
}

TEST_CASE("k-hop matches an all-pairs BFS oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        std::vector<NamedTriplet> ts;
        for (int i = 0; i < 45; ++i)
            ts.push_back({"n" + std::to_string(rng.uniform_index(30)), "r" + std::to_string(rng.uniform_index(3)),
                          "n" + std::to_string(rng.uniform_index(30))});
        auto kg = KnowledgeGraph::from_triplets(ts);
        const std::size_t n = kg.num_entities();
        std::vector<std::set<std::size_t>> adj(n);
        for (const auto& t : kg.triplets()) {
            adj[t.head.value].insert(t.tail.value);
            adj[t.tail.value].insert(t.head.value);
        }
        for (std::size_t s = 0; s < n; ++s) {
            std::vector<int> d(n, -1);
            std::queue<std::size_t> q;
            d[s] = 0;
            q.push(s);
            while (!q.empty()) {
                auto u = q.front();
                q.pop();
                for (auto v : adj[u])
                    if (d[v] < 0) d[v] = d[u] + 1, q.push(v);
            }
            for (int k = 1; k <= 3; ++k) {
                std::vector<EntityId> want;
                for (std::size_t v = 0; v < n; ++v)
                    if (d[v] >= 0 && d[v] <= k) want.push_back(EntityId{static_cast<std::uint32_t>(v)});
                CHECK(kg.k_hop_neighborhood(EntityId{static_cast<std::uint32_t>(s)}, k) == want);
            }
        }
    }
}

TEST_CASE("merge") {
    auto kg = kg_from("a\tr1\tb\n");
    auto m = kg.merge({{"c", "r1", "d"}});
    CHECK(m.num_entities() == kg.num_entities() + 2);
    CHECK(m.entity_name(ent(kg, "a")) == "a");
    CHECK(kg.merge({{"a", "r1", "b"}}).num_triplets() == 1);
}

TEST_CASE("merge equals a set-union oracle") {
    Rng rng(3);
    auto random_triplets = [&](int n) {
        std::vector<NamedTriplet> ts;
        for (int i = 0; i < n; ++i)
            ts.push_back({"e" + std::to_string(rng.uniform_index(20)), "r" + std::to_string(rng.uniform_index(4)),
                          "e" + std::to_string(rng.uniform_index(20))});
        return ts;
    };
    auto bg = random_triplets(60), test = random_triplets(40);
    auto merged = KnowledgeGraph::from_triplets(bg).merge(test);
    std::set<std::tuple<std::string, std::string, std::string>> u;
    for (const auto& t : bg) u.insert({t.head, t.relation, t.tail});
    for (const auto& t : test) u.insert({t.head, t.relation, t.tail});
    CHECK(merged.num_triplets() == u.size());
    for (const auto& t : merged.named_triplets()) CHECK(u.count({t.head, t.relation, t.tail}) == 1);
}

TEST_CASE("tsv round trip is identical up to renaming") {
    auto kg = kg_from("x\tr2\ty\na\tr1\tb\ny\tr1\ta\n");
    std::ostringstream out;
    kg.write_tsv(out);
    auto again = kg_from(out.str());
    CHECK(again.num_triplets() == kg.num_triplets());
    auto a = kg.named_triplets(), b = again.named_triplets();
    auto key = [](const NamedTriplet& t) { return std::tie(t.head, t.relation, t.tail); };
    auto less = [&](const NamedTriplet& x, const NamedTriplet& y) { return key(x) < key(y); };
    std::sort(a.begin(), a.end(), less);
    std::sort(b.begin(), b.end(), less);
    CHECK(a == b);
}
