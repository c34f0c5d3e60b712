#pragma once
// Small builders shared by the unit tests.

#include <sstream>
#include <string>
#include <vector>

#include "csr/context.hpp"
#include "csr/kg.hpp"
#include "csr/rng.hpp"

namespace testing {

inline csr::KnowledgeGraph kg_from(const std::string& tsv) {
    std::istringstream in(tsv);
    return csr::KnowledgeGraph::from_triplets(csr::parse_triplets(in));
}

inline csr::EntityId ent(const csr::KnowledgeGraph& kg, const std::string& name) { return *kg.find_entity(name); }

// Random multigraph context with forward edges; head 0, tail 1.
inline csr::ContextGraph random_graph(csr::Rng& rng, std::uint32_t nodes, std::uint32_t edges,
                                      std::uint32_t relations) {
    csr::ContextGraph g;
    g.num_nodes = nodes;
    g.head = 0;
    g.tail = 1;
    for (std::uint32_t i = 0; i < edges; ++i) {
        csr::ContextEdge e;
        e.src = static_cast<std::uint32_t>(rng.uniform_index(nodes));
        e.dst = static_cast<std::uint32_t>(rng.uniform_index(nodes));
        e.relation = csr::RelationId{static_cast<std::uint32_t>(rng.uniform_index(relations))};
        g.edges.push_back(e);
    }
    return g;
}

inline csr::ContextEdge edge(std::uint32_t s, std::uint32_t r, std::uint32_t d) {
    csr::ContextEdge e;
    e.src = s;
    e.relation = csr::RelationId{r};
    e.dst = d;
    return e;
}

inline csr::ContextGraph graph(std::uint32_t nodes, std::vector<csr::ContextEdge> edges, std::uint32_t head = 0,
                               std::uint32_t tail = 1) {
    csr::ContextGraph g;
    g.num_nodes = nodes;
    g.edges = std::move(edges);
    g.head = head;
    g.tail = tail;
    return g;
}

}  // namespace testing
