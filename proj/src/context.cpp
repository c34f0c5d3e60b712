#include "csr/context.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <string>
#include <unordered_map>

#include "csr/errors.hpp"
#include "csr/rng.hpp"

namespace csr {

std::vector<std::vector<std::uint32_t>> ContextGraph::incidence() const {
    std::vector<std::vector<std::uint32_t>> inc(num_nodes);
    for (std::uint32_t e = 0; e < edges.size(); ++e) {
        inc[edges[e].src].push_back(e);
        if (edges[e].dst != edges[e].src) inc[edges[e].dst].push_back(e);
    }
    return inc;
}

void ContextGraph::validate() const {
    if (head == tail) throw ArgumentError("context graph: head == tail");
    if (head >= num_nodes || tail >= num_nodes)
        throw ArgumentError("context graph: head/tail index out of range");
    if (!node_entities.empty() && node_entities.size() != num_nodes)
        throw ArgumentError("context graph: node_entities size mismatch");
    std::set<ContextEdge> seen;
    std::vector<int> degree(num_nodes, 0);
    for (const auto& e : edges) {
        if (e.src >= num_nodes || e.dst >= num_nodes)
            throw ArgumentError("context graph: edge endpoint out of range");
        if (!seen.insert(e).second) throw ArgumentError("context graph: duplicate edge");
        ++degree[e.src];
        ++degree[e.dst];
    }
    for (std::uint32_t v = 0; v < num_nodes; ++v)
        if (degree[v] == 0 && v != head && v != tail)
            throw ArgumentError("context graph: isolated node " + std::to_string(v));
}

ContextGraph permute_nodes(const ContextGraph& g, const std::vector<std::uint32_t>& perm) {
    if (perm.size() != g.num_nodes) throw ArgumentError("permute_nodes: size mismatch");
    ContextGraph out;
    out.num_nodes = g.num_nodes;
    if (g.has_entities()) {
        out.node_entities.resize(g.num_nodes);
        for (std::uint32_t i = 0; i < g.num_nodes; ++i) out.node_entities[perm[i]] = g.node_entities[i];
    }
    out.edges = g.edges;
    for (auto& e : out.edges) {
        e.src = perm[e.src];
        e.dst = perm[e.dst];
    }
    out.head = perm[g.head];
    out.tail = perm[g.tail];
    return out;
}

ContextGraph remove_edges(const ContextGraph& g, const std::vector<std::uint32_t>& edge_ids) {
    std::vector<bool> drop(g.edges.size(), false);
    for (auto id : edge_ids) drop.at(id) = true;
    ContextGraph out = g;
    out.edges.clear();
    for (std::size_t e = 0; e < g.edges.size(); ++e)
        if (!drop[e]) out.edges.push_back(g.edges[e]);
    return out;
}

bool LeakExclusion::excludes(const Triplet& t, EntityId h, EntityId tl) const {
    if (!relation || t.relation != *relation) return false;
    if (all_triplets) return true;
    return (t.head == h && t.tail == tl) || (t.head == tl && t.tail == h);
}

namespace {

std::unordered_map<std::uint32_t, int> bounded_bfs(const KnowledgeGraph& kg, EntityId src, int k,
                                                   EntityId h, EntityId t,
                                                   const LeakExclusion& exclude) {
    std::unordered_map<std::uint32_t, int> dist;
    std::deque<std::uint32_t> queue{src.value};
    dist[src.value] = 0;
    while (!queue.empty()) {
        auto u = queue.front();
        queue.pop_front();
        int du = dist[u];
        if (du >= k) continue;
        for (const auto& n : kg.neighbors(EntityId{u})) {
            if (exclude.excludes(kg.triplet(n.triplet_index), h, t)) continue;
            if (dist.emplace(n.entity.value, du + 1).second) queue.push_back(n.entity.value);
        }
    }
    return dist;
}

}  // namespace

ContextGraph enclosing_subgraph(const KnowledgeGraph& kg, EntityId h, EntityId t, int k,
                                const LeakExclusion& exclude) {
    if (!kg.valid(h) || !kg.valid(t)) throw ArgumentError("enclosing_subgraph: invalid entity id");
    if (h == t) throw ArgumentError("enclosing_subgraph: head equals tail");
    if (k < 1) throw ArgumentError("enclosing_subgraph: k must be >= 1");

    auto dh = bounded_bfs(kg, h, k, h, t, exclude);
    auto dt = bounded_bfs(kg, t, k, h, t, exclude);
    std::vector<std::uint32_t> inner;
    for (const auto& [v, d] : dh)
        if (v != h.value && v != t.value && dt.count(v)) inner.push_back(v);
    std::sort(inner.begin(), inner.end());

    ContextGraph g;
    g.node_entities.push_back(h);
    g.node_entities.push_back(t);
    for (auto v : inner) g.node_entities.push_back(EntityId{v});
    g.num_nodes = static_cast<std::uint32_t>(g.node_entities.size());
    g.head = 0;
    g.tail = 1;

    std::unordered_map<std::uint32_t, std::uint32_t> local;
    for (std::uint32_t i = 0; i < g.num_nodes; ++i) local[g.node_entities[i].value] = i;

    std::vector<std::uint32_t> triplet_ids;
    for (std::uint32_t i = 0; i < g.num_nodes; ++i) {
        for (const auto& n : kg.out_edges(g.node_entities[i])) {
            if (!local.count(n.entity.value)) continue;
            if (exclude.excludes(kg.triplet(n.triplet_index), h, t)) continue;
            triplet_ids.push_back(n.triplet_index);
        }
    }
    std::sort(triplet_ids.begin(), triplet_ids.end());
    for (auto idx : triplet_ids) {
        const auto& tr = kg.triplet(idx);
        g.edges.push_back({local[tr.head.value], tr.relation, local[tr.tail.value], Direction::Forward});
    }
    return g;
}

ContextGraph supplement_neighbors(const ContextGraph& ctx, const KnowledgeGraph& kg,
                                  const ContextConfig& cfg, const LeakExclusion& exclude) {
    if (cfg.max_supplement_neighbors < 0)
        throw ArgumentError("supplement_neighbors: negative cap");
    if (cfg.max_supplement_neighbors == 0) return ctx;
    if (!ctx.has_entities()) throw ArgumentError("supplement_neighbors: graph lacks entity ids");

    ContextGraph g = ctx;
    const EntityId h = g.node_entities[g.head];
    const EntityId t = g.node_entities[g.tail];
    std::unordered_map<std::uint32_t, std::uint32_t> local;
    for (std::uint32_t i = 0; i < g.num_nodes; ++i) local[g.node_entities[i].value] = i;
    std::set<Triplet> present;
    for (const auto& e : g.edges)
        present.insert({g.node_entities[e.src], e.relation, g.node_entities[e.dst]});

    auto local_of = [&](EntityId e) {
        auto [it, inserted] = local.emplace(e.value, g.num_nodes);
        if (inserted) {
            g.node_entities.push_back(e);
            ++g.num_nodes;
        }
        return it->second;
    };

    const EntityId endpoints[2] = {h, t};
    for (int side = 0; side < 2; ++side) {
        std::vector<std::uint32_t> candidates;
        for (const auto& n : kg.neighbors(endpoints[side])) {
            const auto& tr = kg.triplet(n.triplet_index);
            if (exclude.excludes(tr, h, t) || present.count(tr)) continue;
            if (!candidates.empty() && candidates.back() == n.triplet_index) continue;  // self-loop
            candidates.push_back(n.triplet_index);
        }
        Rng rng(derive_seed(derive_seed(cfg.rng_seed, "supplement"),
                            (std::uint64_t{h.value} << 32) | t.value, side));
        auto picks = rng.sample_without_replacement(
            candidates.size(), static_cast<std::size_t>(cfg.max_supplement_neighbors));
        std::vector<std::uint32_t> chosen;
        for (auto p : picks) chosen.push_back(candidates[p]);
        std::sort(chosen.begin(), chosen.end());
        for (auto idx : chosen) {
            const auto& tr = kg.triplet(idx);
            if (!present.insert(tr).second) continue;
            auto u = local_of(tr.head);
            auto v = local_of(tr.tail);
            g.edges.push_back({u, tr.relation, v, Direction::Forward});
        }
    }
    return g;
}

ContextGraph contextualize(const KnowledgeGraph& kg, EntityId h, EntityId t,
                           const ContextConfig& cfg, const LeakExclusion& exclude) {
    return supplement_neighbors(enclosing_subgraph(kg, h, t, cfg.k_hops, exclude), kg, cfg, exclude);
}

}  // namespace csr
