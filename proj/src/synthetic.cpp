#include "csr/synthetic.hpp"

#include <array>
#include <deque>
#include <fstream>
#include <set>
#include <tuple>

#include "csr/errors.hpp"
#include "csr/parallel.hpp"

namespace csr {

void SynthConfig::validate() const {
    if (n_relations < 5) throw ArgumentError("n_relations must be at least the 5 planted edges");
    if (k_shot < 1) throw ArgumentError("k_shot must be >= 1");
    if (n_graphs < k_shot + n_positive)
        throw ArgumentError("n_graphs must cover k_shot + n_positive graphs");
    if (noise_nodes_min > noise_nodes_max || noise_edges_min > noise_edges_max)
        throw ArgumentError("noise ranges must satisfy min <= max");
    if (prune_hops < 1) throw ArgumentError("prune_hops must be >= 1");
    if (max_retries < 1) throw ArgumentError("max_retries must be >= 1");
}

namespace {

constexpr std::array<std::pair<std::uint32_t, std::uint32_t>, 5> kPatternPairs{{{0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

using EdgeKey = std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>;

Hypothesis sample_hypothesis(const SynthConfig& cfg, Rng& rng) {
    Hypothesis h;
    for (auto [a, b] : kPatternPairs) {
        if (rng.bernoulli(0.5)) std::swap(a, b);
        ContextEdge e;
        e.src = a;
        e.dst = b;
        e.relation = RelationId{static_cast<std::uint32_t>(rng.uniform_index(cfg.n_relations))};
        h.edges.push_back(e);
    }
    return h;
}

std::vector<int> hop_distances(std::uint32_t n, const std::vector<ContextEdge>& edges, std::uint32_t from, int max_d) {
    std::vector<std::vector<std::uint32_t>> adj(n);
    for (const auto& e : edges) {
        adj[e.src].push_back(e.dst);
        adj[e.dst].push_back(e.src);
    }
    std::vector<int> d(n, -1);
    std::deque<std::uint32_t> q{from};
    d[from] = 0;
    while (!q.empty()) {
        auto u = q.front();
        q.pop_front();
        if (d[u] == max_d) continue;
        for (auto v : adj[u])
            if (d[v] < 0) {
                d[v] = d[u] + 1;
                q.push_back(v);
            }
    }
    return d;
}

// Builds one graph around the pattern; `relabel` >= 0 swaps that planted
// edge's relation for a different one. Returns the graph and the planted
// flags per edge.
SyntheticGraph build_graph(const Hypothesis& hyp, const SynthConfig& cfg, Rng& rng, int relabel) {
    const auto n_noise = static_cast<std::uint32_t>(rng.uniform_int(cfg.noise_nodes_min, cfg.noise_nodes_max));
    std::uint32_t n = 4 + n_noise;
    std::vector<ContextEdge> edges = hyp.edges;
    std::vector<bool> planted(edges.size(), true);
    if (relabel >= 0) {
        auto& r = edges[static_cast<std::size_t>(relabel)].relation.value;
        auto other = static_cast<std::uint32_t>(rng.uniform_index(cfg.n_relations - 1));
        r = other >= r ? other + 1 : other;
    }
    std::set<EdgeKey> present;
    for (const auto& e : edges) present.insert({e.src, e.relation.value, e.dst});
    for (const auto& e : hyp.edges) present.insert({e.src, e.relation.value, e.dst});

    const auto n_extra = rng.uniform_int(cfg.noise_edges_min, cfg.noise_edges_max);
    for (long long added = 0, tries = 0; added < n_extra && tries < 50 * (n_extra + 1); ++tries) {
        auto u = static_cast<std::uint32_t>(rng.uniform_index(n));
        auto v = static_cast<std::uint32_t>(rng.uniform_index(n));
        if (u == v || (std::min(u, v) == 0 && std::max(u, v) == 1)) continue;
        auto r = static_cast<std::uint32_t>(rng.uniform_index(cfg.n_relations));
        if (!present.insert({u, r, v}).second) continue;
        edges.push_back({u, RelationId{r}, v, Direction::Forward});
        planted.push_back(false);
        ++added;
    }

    // Drop nodes farther than prune_hops from head or tail until stable.
    std::vector<bool> alive(n, true);
    for (bool changed = true; changed;) {
        changed = false;
        auto dh = hop_distances(n, edges, 0, cfg.prune_hops);
        auto dt = hop_distances(n, edges, 1, cfg.prune_hops);
        for (std::uint32_t v = 2; v < n; ++v)
            if (alive[v] && (dh[v] < 0 || dt[v] < 0)) {
                alive[v] = false;
                changed = true;
            }
        std::vector<ContextEdge> kept;
        std::vector<bool> kept_planted;
        for (std::size_t e = 0; e < edges.size(); ++e)
            if (alive[edges[e].src] && alive[edges[e].dst]) {
                kept.push_back(edges[e]);
                kept_planted.push_back(planted[e]);
            }
        edges = std::move(kept);
        planted = std::move(kept_planted);
    }

    // Compact, then shuffle node labels and edge order.
    std::vector<std::uint32_t> compact(n, 0);
    std::uint32_t live = 0;
    for (std::uint32_t v = 0; v < n; ++v)
        if (alive[v]) compact[v] = live++;
    std::vector<std::uint32_t> perm(live);
    for (std::uint32_t i = 0; i < live; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<std::size_t> order(edges.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    SyntheticGraph out;
    out.graph.num_nodes = live;
    out.graph.head = perm[compact[0]];
    out.graph.tail = perm[compact[1]];
    out.truth = Matrix(edges.size(), 1);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& e = edges[order[k]];
        out.graph.edges.push_back({perm[compact[e.src]], e.relation, perm[compact[e.dst]], Direction::Forward});
        out.truth[k] = (relabel < 0 && planted[order[k]]) ? 1.0 : 0.0;
    }
    out.positive = relabel < 0;
    return out;
}

}  // namespace

SyntheticTask generate_task(const SynthConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::uint64_t seed = rng.next();
    Rng hrng(derive_seed(seed, "hypothesis"));
    SyntheticTask task;
    task.hypothesis = sample_hypothesis(cfg, hrng);

    auto pool = hrng.sample_without_replacement(cfg.n_graphs, cfg.k_shot + cfg.n_positive);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        Rng grng(derive_seed(seed, "graph", pool[i]));
        auto g = build_graph(task.hypothesis, cfg, grng, -1);
        (i < cfg.k_shot ? task.supports : task.queries).push_back(std::move(g));
    }
    for (std::uint32_t q = 0; q < cfg.n_negative; ++q) {
        bool done = false;
        for (int attempt = 0; attempt < cfg.max_retries && !done; ++attempt) {
            Rng nrng(derive_seed(seed, "negative", q, static_cast<std::uint64_t>(attempt)));
            const int edge = static_cast<int>(nrng.uniform_index(kPatternPairs.size()));
            auto g = build_graph(task.hypothesis, cfg, nrng, edge);
            if (contains_hypothesis(g.graph, task.hypothesis)) continue;
            task.queries.push_back(std::move(g));
            done = true;
        }
        if (!done) throw ArgumentError("generate_task: could not build a negative query graph");
    }
    return task;
}

SyntheticTask generate_task(const SynthConfig& cfg, std::uint64_t index) {
    Rng rng(derive_seed(cfg.rng_seed, "synthetic_task", index));
    return generate_task(cfg, rng);
}

std::vector<SyntheticTask> generate_corpus(const SynthConfig& cfg, std::size_t n_tasks, int jobs) {
    cfg.validate();
    std::vector<SyntheticTask> out(n_tasks);
    parallel_for(n_tasks, jobs, [&](std::size_t i) { out[i] = generate_task(cfg, static_cast<std::uint64_t>(i)); });
    return out;
}

namespace {

bool match_pattern(const ContextGraph& g, const std::set<EdgeKey>& edges, const Hypothesis& h) {
    std::array<std::uint32_t, 4> map{g.head, g.tail, 0, 0};
    for (std::uint32_t a = 0; a < g.num_nodes; ++a) {
        if (a == g.head || a == g.tail) continue;
        for (std::uint32_t b = 0; b < g.num_nodes; ++b) {
            if (b == g.head || b == g.tail || b == a) continue;
            map[2] = a;
            map[3] = b;
            bool ok = true;
            for (const auto& e : h.edges)
                if (!edges.count({map[e.src], e.relation.value, map[e.dst]})) {
                    ok = false;
                    break;
                }
            if (ok) return true;
        }
    }
    return false;
}

}  // namespace

bool contains_hypothesis(const ContextGraph& g, const Hypothesis& h) {
    std::set<EdgeKey> edges;
    for (const auto& e : g.edges)
        if (e.direction == Direction::Forward) edges.insert({e.src, e.relation.value, e.dst});
    return match_pattern(g, edges, h);
}

bool mask_matches_hypothesis(const ContextGraph& g, const EdgeMask& mask, const Hypothesis& h) {
    if (mask.size() != g.num_edges()) throw ArgumentError("mask length does not match graph");
    std::set<EdgeKey> edges;
    std::size_t selected = 0;
    for (std::size_t e = 0; e < g.num_edges(); ++e)
        if (mask[e] >= 0.5 && g.edges[e].direction == Direction::Forward) {
            edges.insert({g.edges[e].src, g.edges[e].relation.value, g.edges[e].dst});
            ++selected;
        }
    return selected == h.edges.size() && match_pattern(g, edges, h);
}

double iou(const EdgeMask& pred, const EdgeMask& truth, double threshold) {
    if (pred.size() != truth.size()) throw ArgumentError("iou: length mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] >= threshold, t = truth[i] >= 0.5;
        inter += p && t;
        uni += p || t;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ad::Var supervised_mask_loss(ad::Var pred, const EdgeMask& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw ArgumentError("supervised_mask_loss: length mismatch");
    return ad::binary_cross_entropy(pred, truth);
}

double supervised_mask_loss(const EdgeMask& pred, const EdgeMask& truth) {
    ad::Tape tape;
    return supervised_mask_loss(tape.param(pred, false), truth).scalar();
}

nlohmann::json graph_to_json(const ContextGraph& g) {
    nlohmann::json j;
    j["num_nodes"] = g.num_nodes;
    j["head"] = g.head;
    j["tail"] = g.tail;
    auto& edges = j["edges"] = nlohmann::json::array();
    for (const auto& e : g.edges)
        edges.push_back({e.src, e.relation.value, e.dst, e.direction == Direction::Forward ? "f" : "b"});
    if (g.has_entities()) {
        auto& ents = j["entities"] = nlohmann::json::array();
        for (auto id : g.node_entities) ents.push_back(id.value);
    }
    return j;
}

ContextGraph graph_from_json(const nlohmann::json& j) {
    ContextGraph g;
    try {
        g.num_nodes = j.at("num_nodes").get<std::uint32_t>();
        g.head = j.at("head").get<std::uint32_t>();
        g.tail = j.at("tail").get<std::uint32_t>();
        for (const auto& e : j.at("edges")) {
            const auto dir = e.at(3).get<std::string>();
            if (dir != "f" && dir != "b") throw ParseError("graph: edge direction must be \"f\" or \"b\"");
            g.edges.push_back({e.at(0).get<std::uint32_t>(), RelationId{e.at(1).get<std::uint32_t>()},
                               e.at(2).get<std::uint32_t>(), dir == "f" ? Direction::Forward : Direction::Backward});
        }
        if (j.contains("entities"))
            for (const auto& id : j.at("entities")) g.node_entities.push_back(EntityId{id.get<std::uint32_t>()});
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("graph: ") + ex.what());
    }
    g.validate();
    return g;
}

namespace {

nlohmann::json mask_json(const EdgeMask& m) { return m.values(); }

EdgeMask mask_from(const nlohmann::json& j, std::size_t n) {
    auto v = j.get<std::vector<double>>();
    if (v.size() != n) throw ParseError("mask length does not match graph");
    EdgeMask m(n, 1);
    for (std::size_t i = 0; i < n; ++i) m[i] = v[i];
    return m;
}

nlohmann::json entry_json(const SyntheticGraph& g) {
    return {{"graph", graph_to_json(g.graph)}, {"mask", mask_json(g.truth)}, {"label", g.positive ? 1 : 0}};
}

SyntheticGraph entry_from(const nlohmann::json& j) {
    SyntheticGraph g;
    g.graph = graph_from_json(j.at("graph"));
    g.truth = mask_from(j.at("mask"), g.graph.num_edges());
    g.positive = j.at("label").get<int>() == 1;
    return g;
}

}  // namespace

nlohmann::json task_to_json(const SyntheticTask& task) {
    nlohmann::json j;
    auto& hyp = j["hypothesis"] = nlohmann::json::array();
    for (const auto& e : task.hypothesis.edges) hyp.push_back({e.src, e.relation.value, e.dst});
    auto& sup = j["supports"] = nlohmann::json::array();
    for (const auto& g : task.supports) sup.push_back(entry_json(g));
    auto& qs = j["queries"] = nlohmann::json::array();
    for (const auto& g : task.queries) qs.push_back(entry_json(g));
    return j;
}

SyntheticTask synthetic_task_from_json(const nlohmann::json& j) {
    SyntheticTask t;
    try {
        for (const auto& e : j.at("hypothesis"))
            t.hypothesis.edges.push_back({e.at(0).get<std::uint32_t>(), RelationId{e.at(1).get<std::uint32_t>()},
                                          e.at(2).get<std::uint32_t>(), Direction::Forward});
        for (const auto& s : j.at("supports")) t.supports.push_back(entry_from(s));
        for (const auto& q : j.at("queries")) t.queries.push_back(entry_from(q));
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("synthetic task: ") + ex.what());
    }
    return t;
}

void write_synthetic_task(const std::filesystem::path& path, const SyntheticTask& task) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << task_to_json(task).dump() << '\n';
}

SyntheticTask read_synthetic_task(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    return synthetic_task_from_json(j);
}

}  // namespace csr
