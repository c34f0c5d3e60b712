#pragma once
// Background knowledge graph: interned entities/relations and a triplet
// store with per-entity outgoing and incoming adjacency.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace csr {

struct EntityId {
    std::uint32_t value = 0;
    friend auto operator<=>(const EntityId&, const EntityId&) = default;
};

struct RelationId {
    std::uint32_t value = 0;
    friend auto operator<=>(const RelationId&, const RelationId&) = default;
};

struct Triplet {
    EntityId head;
    RelationId relation;
    EntityId tail;
    friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

struct NamedTriplet {
    std::string head;
    std::string relation;
    std::string tail;
    friend bool operator==(const NamedTriplet&, const NamedTriplet&) = default;
};

enum class Direction : std::uint8_t { Forward = 0, Backward = 1 };

struct Neighbor {
    RelationId relation;
    EntityId entity;
    Direction direction;
    std::uint32_t triplet_index;
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Bijective string <-> dense id mapping.
class Interner {
public:
    std::uint32_t intern(std::string_view name);
    std::optional<std::uint32_t> find(std::string_view name) const;
    const std::string& name(std::uint32_t id) const { return names_.at(id); }
    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> ids_;
};

struct TripletHash {
    std::size_t operator()(const Triplet& t) const noexcept {
        std::uint64_t h = (std::uint64_t{t.head.value} << 32) | t.tail.value;
        h ^= std::uint64_t{t.relation.value} * 0x9E3779B97F4A7C15ULL;
        h ^= h >> 29;
        h *= 0xBF58476D1CE4E5B9ULL;
        return static_cast<std::size_t>(h ^ (h >> 32));
    }
};

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    // Builds a graph from named triplets; exact duplicates are dropped and
    // ids follow first-occurrence order.
    static KnowledgeGraph from_triplets(const std::vector<NamedTriplet>& triplets);

    // Returns a new graph with `extra` added. Existing ids are preserved.
    KnowledgeGraph merge(const std::vector<NamedTriplet>& extra) const;

    std::size_t num_entities() const { return entities_.size(); }
    std::size_t num_relations() const { return relations_.size(); }
    std::size_t num_triplets() const { return triplets_.size(); }

    const std::vector<Triplet>& triplets() const { return triplets_; }
    const Triplet& triplet(std::size_t i) const { return triplets_.at(i); }

    const std::string& entity_name(EntityId e) const { return entities_.name(e.value); }
    const std::string& relation_name(RelationId r) const { return relations_.name(r.value); }
    std::optional<EntityId> find_entity(std::string_view name) const;
    std::optional<RelationId> find_relation(std::string_view name) const;
    const std::vector<std::string>& entity_names() const { return entities_.names(); }
    const std::vector<std::string>& relation_names() const { return relations_.names(); }

    bool contains(const Triplet& t) const;
    bool valid(EntityId e) const { return e.value < entities_.size(); }
    bool valid(RelationId r) const { return r.value < relations_.size(); }

    // Outgoing buckets hold (relation, tail, index); incoming hold
    // (relation, head, index). Both sorted by triplet index.
    const std::vector<Neighbor>& out_edges(EntityId e) const;
    const std::vector<Neighbor>& in_edges(EntityId e) const;

    // All incident triplets of e ordered by triplet index; outgoing ones
    // flagged Forward, incoming Backward. A self-loop appears twice.
    std::vector<Neighbor> neighbors(EntityId e) const;

    // Entities within k undirected hops of e, including e. Sorted by id.
    std::vector<EntityId> k_hop_neighborhood(EntityId e, int k) const;

    // BFS distances (undirected) from e, capped at max_depth; entries
    // beyond the cap are -1. Triplets with relation `skip` are ignored.
    std::vector<int> distances(EntityId e, int max_depth,
                               std::optional<RelationId> skip = std::nullopt) const;

    std::vector<NamedTriplet> named_triplets() const;

    void write_tsv(std::ostream& out) const;

private:
    void add(const NamedTriplet& t);
    void check(EntityId e) const;

    Interner entities_;
    Interner relations_;
    std::vector<Triplet> triplets_;
    std::vector<std::vector<Neighbor>> out_;
    std::vector<std::vector<Neighbor>> in_;
    std::unordered_set<Triplet, TripletHash> present_;
};

// Parses TSV triplet text. Empty lines and '#' lines are skipped; every
// other line must have exactly three tab-separated fields.
std::vector<NamedTriplet> parse_triplets(std::istream& in, std::string_view source = {});
std::vector<NamedTriplet> read_triplets(const std::filesystem::path& path);

KnowledgeGraph load_kg(const std::filesystem::path& path);

}  // namespace csr
