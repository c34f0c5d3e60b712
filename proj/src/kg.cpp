#include "csr/kg.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>

#include "csr/errors.hpp"

namespace csr {

std::uint32_t Interner::intern(std::string_view name) {
    auto it = ids_.find(std::string(name));
    if (it != ids_.end()) return it->second;
    auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(name);
    ids_.emplace(names_.back(), id);
    return id;
}

std::optional<std::uint32_t> Interner::find(std::string_view name) const {
    auto it = ids_.find(std::string(name));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

KnowledgeGraph KnowledgeGraph::from_triplets(const std::vector<NamedTriplet>& triplets) {
    KnowledgeGraph kg;
    for (const auto& t : triplets) kg.add(t);
    return kg;
}

KnowledgeGraph KnowledgeGraph::merge(const std::vector<NamedTriplet>& extra) const {
    KnowledgeGraph kg = *this;
    for (const auto& t : extra) kg.add(t);
    return kg;
}

void KnowledgeGraph::add(const NamedTriplet& named) {
    if (named.head.empty() || named.relation.empty() || named.tail.empty())
        throw ParseError("triplet with empty field");
    Triplet t{EntityId{entities_.intern(named.head)}, RelationId{relations_.intern(named.relation)},
              EntityId{entities_.intern(named.tail)}};
    if (out_.size() < entities_.size()) {
        out_.resize(entities_.size());
        in_.resize(entities_.size());
    }
    if (!present_.insert(t).second) return;
    auto idx = static_cast<std::uint32_t>(triplets_.size());
    triplets_.push_back(t);
    out_[t.head.value].push_back({t.relation, t.tail, Direction::Forward, idx});
    in_[t.tail.value].push_back({t.relation, t.head, Direction::Backward, idx});
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view name) const {
    if (auto id = entities_.find(name)) return EntityId{*id};
    return std::nullopt;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view name) const {
    if (auto id = relations_.find(name)) return RelationId{*id};
    return std::nullopt;
}

bool KnowledgeGraph::contains(const Triplet& t) const { return present_.count(t) > 0; }

void KnowledgeGraph::check(EntityId e) const {
    if (!valid(e))
        throw ArgumentError("entity id " + std::to_string(e.value) + " out of range (" +
                            std::to_string(num_entities()) + " entities)");
}

const std::vector<Neighbor>& KnowledgeGraph::out_edges(EntityId e) const {
    check(e);
    return out_[e.value];
}

const std::vector<Neighbor>& KnowledgeGraph::in_edges(EntityId e) const {
    check(e);
    return in_[e.value];
}

std::vector<Neighbor> KnowledgeGraph::neighbors(EntityId e) const {
    check(e);
    const auto& out = out_[e.value];
    const auto& in = in_[e.value];
    std::vector<Neighbor> result;
    result.reserve(out.size() + in.size());
    // Both buckets are sorted by triplet index; merge them. For a
    // self-loop the forward entry comes first.
    std::size_t i = 0, j = 0;
    while (i < out.size() || j < in.size()) {
        if (j == in.size() || (i < out.size() && out[i].triplet_index <= in[j].triplet_index))
            result.push_back(out[i++]);
        else
            result.push_back(in[j++]);
    }
    return result;
}

std::vector<int> KnowledgeGraph::distances(EntityId e, int max_depth,
                                           std::optional<RelationId> skip) const {
    check(e);
    std::vector<int> dist(num_entities(), -1);
    std::deque<std::uint32_t> queue;
    dist[e.value] = 0;
    queue.push_back(e.value);
    while (!queue.empty()) {
        auto u = queue.front();
        queue.pop_front();
        if (dist[u] >= max_depth) continue;
        auto visit = [&](const std::vector<Neighbor>& bucket) {
            for (const auto& n : bucket) {
                if (skip && n.relation == *skip) continue;
                if (dist[n.entity.value] < 0) {
                    dist[n.entity.value] = dist[u] + 1;
                    queue.push_back(n.entity.value);
                }
            }
        };
        visit(out_[u]);
        visit(in_[u]);
    }
    return dist;
}

std::vector<EntityId> KnowledgeGraph::k_hop_neighborhood(EntityId e, int k) const {
    if (k < 1) throw ArgumentError("k_hop_neighborhood: k must be >= 1");
    auto dist = distances(e, k);
    std::vector<EntityId> result;
    for (std::uint32_t v = 0; v < dist.size(); ++v)
        if (dist[v] >= 0) result.push_back(EntityId{v});
    return result;
}

std::vector<NamedTriplet> KnowledgeGraph::named_triplets() const {
    std::vector<NamedTriplet> out;
    out.reserve(triplets_.size());
    for (const auto& t : triplets_)
        out.push_back({entity_name(t.head), relation_name(t.relation), entity_name(t.tail)});
    return out;
}

void KnowledgeGraph::write_tsv(std::ostream& out) const {
    for (const auto& t : triplets_)
        out << entity_name(t.head) << '\t' << relation_name(t.relation) << '\t'
            << entity_name(t.tail) << '\n';
}

std::vector<NamedTriplet> parse_triplets(std::istream& in, std::string_view source) {
    const std::string prefix = source.empty() ? std::string() : std::string(source) + ": ";
    std::vector<NamedTriplet> result;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            auto pos = line.find('\t', start);
            fields.push_back(line.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (fields.size() != 3)
            throw ParseError(prefix + "expected 3 tab-separated fields, got " +
                                 std::to_string(fields.size()),
                             lineno);
        for (const auto& f : fields)
            if (f.empty()) throw ParseError(prefix + "empty field", lineno);
        result.push_back({std::move(fields[0]), std::move(fields[1]), std::move(fields[2])});
    }
    return result;
}

std::vector<NamedTriplet> read_triplets(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open triplet file: " + path.string());
    return parse_triplets(in, path.string());
}

KnowledgeGraph load_kg(const std::filesystem::path& path) {
    return KnowledgeGraph::from_triplets(read_triplets(path));
}

}  // namespace csr
