#pragma once
// Contextualized graphs G(h, t): the enclosing subgraph of a pair plus
// sampled one-hop neighbors of its endpoints.

#include <cstdint>
#include <optional>
#include <vector>

#include "csr/kg.hpp"

namespace csr {

struct ContextEdge {
    std::uint32_t src = 0;  // local node index
    RelationId relation;
    std::uint32_t dst = 0;  // local node index
    Direction direction = Direction::Forward;
    friend auto operator<=>(const ContextEdge&, const ContextEdge&) = default;
};

struct ContextGraph {
    std::uint32_t num_nodes = 0;
    // local index -> global entity; empty for synthetic graphs.
    std::vector<EntityId> node_entities;
    std::vector<ContextEdge> edges;
    std::uint32_t head = 0;
    std::uint32_t tail = 1;

    std::size_t num_edges() const { return edges.size(); }
    bool has_entities() const { return !node_entities.empty(); }

    // Per-node incident edge ids in ascending order; a self-loop is listed
    // once.
    std::vector<std::vector<std::uint32_t>> incidence() const;

    // Throws ArgumentError when an invariant is broken.
    void validate() const;
};

// Returns g with its local node indices relabeled: node i becomes perm[i].
ContextGraph permute_nodes(const ContextGraph& g, const std::vector<std::uint32_t>& perm);

// Returns g without the listed edges; node set unchanged.
ContextGraph remove_edges(const ContextGraph& g, const std::vector<std::uint32_t>& edge_ids);

struct ContextConfig {
    int k_hops = 2;
    int max_supplement_neighbors = 50;  // per endpoint
    std::uint64_t rng_seed = 0;
};

// Which target-relation triplets to keep out of a context.
struct LeakExclusion {
    std::optional<RelationId> relation;
    // false: only direct (h, r, t) / (t, r, h) links; true: every triplet
    // of the relation.
    bool all_triplets = false;

    bool excludes(const Triplet& t, EntityId h, EntityId tl) const;
};

ContextGraph enclosing_subgraph(const KnowledgeGraph& kg, EntityId h, EntityId t, int k,
                                const LeakExclusion& exclude = {});

// Adds up to cfg.max_supplement_neighbors incident triplets of the head
// and, separately, of the tail. Sampling is seeded from cfg.rng_seed and
// the (head, tail) identity.
ContextGraph supplement_neighbors(const ContextGraph& ctx, const KnowledgeGraph& kg,
                                  const ContextConfig& cfg, const LeakExclusion& exclude = {});

// enclosing_subgraph followed by supplement_neighbors.
ContextGraph contextualize(const KnowledgeGraph& kg, EntityId h, EntityId t,
                           const ContextConfig& cfg, const LeakExclusion& exclude = {});

}  // namespace csr
