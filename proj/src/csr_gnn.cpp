#include "csr/csr_gnn.hpp"

#include <algorithm>
#include <cmath>

#include "csr/errors.hpp"

namespace csr {

GraphEmbedding GnnMaskModel::encode(const ContextGraph& g, const EdgeMask& m) const {
    return csr::encode(*params_, g, m);
}

EdgeMask GnnMaskModel::decode(const ContextGraph& g, const GraphEmbedding& b) const {
    return csr::decode(*params_, g, b);
}

namespace {

// Value backend for the shared proposal loop.
struct ValueOps {
    const MaskModel& model;
    std::span<const ContextGraph> graphs;
    using Mask = EdgeMask;
    using Emb = GraphEmbedding;

    Mask ones(std::size_t j) const { return full_mask(graphs[j]); }
    Emb encode(std::size_t k, const Mask& m) const { return model.encode(graphs[k], m); }
    Mask decode(std::size_t j, const Emb& b) const { return model.decode(graphs[j], b); }
    Mask min(const std::vector<Mask>& xs) const {
        Mask out = xs.front();
        for (std::size_t i = 1; i < xs.size(); ++i)
            for (std::size_t e = 0; e < out.size(); ++e) out[e] = std::min(out[e], xs[i][e]);
        return out;
    }
    Emb mean(const std::vector<Emb>& xs) const {
        Emb out = xs.front();
        for (std::size_t i = 1; i < xs.size(); ++i)
            for (std::size_t e = 0; e < out.size(); ++e) out[e] += xs[i][e];
        for (auto& v : out.values()) v /= static_cast<double>(xs.size());
        return out;
    }
};

struct TapeOps {
    ad::Tape& tape;
    const BoundModel& model;
    std::span<const GraphPlan> plans;
    using Mask = ad::Var;
    using Emb = ad::Var;

    Mask ones(std::size_t j) const { return tape.constant(full_mask(*plans[j].graph)); }
    Emb encode(std::size_t k, const Mask& m) const { return csr::encode(tape, model, plans[k], m); }
    Mask decode(std::size_t j, const Emb& b) const { return csr::decode(tape, model, plans[j], b); }
    Mask min(const std::vector<Mask>& xs) const { return xs.size() == 1 ? xs.front() : ad::min_of(xs); }
    Emb mean(const std::vector<Emb>& xs) const { return xs.size() == 1 ? xs.front() : ad::mean_of(xs); }
};

template <class Ops>
std::vector<typename Ops::Mask> run_proposal(const Ops& ops, std::size_t n, int iters) {
    if (n == 0) throw ArgumentError("propose_hypothesis: needs at least one support graph");
    if (iters < 1) throw ArgumentError("propose_hypothesis: proposal_iters must be >= 1");
    std::vector<typename Ops::Mask> masks;
    for (std::size_t j = 0; j < n; ++j) masks.push_back(ops.ones(j));
    for (int it = 0; it < iters; ++it) {
        std::vector<typename Ops::Emb> emb;
        for (std::size_t k = 0; k < n; ++k) emb.push_back(ops.encode(k, masks[k]));
        std::vector<typename Ops::Mask> next;
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<typename Ops::Mask> cand;
            for (std::size_t k = 0; k < n; ++k) cand.push_back(ops.decode(j, emb[k]));
            next.push_back(ops.min(cand));
        }
        masks = std::move(next);
    }
    return masks;
}

}  // namespace

std::vector<EdgeMask> propose_hypothesis(const MaskModel& model, std::span<const ContextGraph> supports,
                                         int proposal_iters) {
    return run_proposal(ValueOps{model, supports}, supports.size(), proposal_iters);
}

Proposal propose(const MaskModel& model, std::span<const ContextGraph> supports, int proposal_iters) {
    ValueOps ops{model, supports};
    Proposal p;
    p.masks = run_proposal(ops, supports.size(), proposal_iters);
    std::vector<GraphEmbedding> emb;
    for (std::size_t i = 0; i < supports.size(); ++i) emb.push_back(ops.encode(i, p.masks[i]));
    p.embedding = ops.mean(emb);
    return p;
}

QueryScore score_query(const MaskModel& model, const Proposal& hypothesis, const ContextGraph& query) {
    QueryScore r;
    r.evidence = model.decode(query, hypothesis.embedding);
    r.score = cosine(model.encode(query, r.evidence), hypothesis.embedding);
    if (!std::isfinite(r.score)) throw NumericError("score_query: non-finite score");
    return r;
}

double score_query(const MaskModel& model, std::span<const ContextGraph> supports, const ContextGraph& query,
                   int proposal_iters) {
    return score_query(model, propose(model, supports, proposal_iters), query).score;
}

TapeProposal propose(ad::Tape& tape, const BoundModel& model, std::span<const GraphPlan> supports,
                     int proposal_iters) {
    TapeOps ops{tape, model, supports};
    TapeProposal p;
    p.masks = run_proposal(ops, supports.size(), proposal_iters);
    std::vector<ad::Var> emb;
    for (std::size_t i = 0; i < supports.size(); ++i) emb.push_back(ops.encode(i, p.masks[i]));
    p.embedding = ops.mean(emb);
    return p;
}

ad::Var score_query(ad::Tape& tape, const BoundModel& model, const TapeProposal& hypothesis,
                    const GraphPlan& query, ad::Var* evidence) {
    ad::Var m = decode(tape, model, query, hypothesis.embedding);
    if (evidence) *evidence = m;
    return ad::cosine(encode(tape, model, query, m), hypothesis.embedding);
}

EdgeMask sample_pretrain_mask(const ContextGraph& ctx, Rng& rng, const WalkConfig& cfg) {
    if (ctx.num_edges() == 0) throw ArgumentError("sample_pretrain_mask: graph has no edges");
    if (cfg.min_walks < 1 || cfg.max_walks < cfg.min_walks || cfg.max_length < 1)
        throw ArgumentError("sample_pretrain_mask: invalid walk configuration");
    const auto inc = ctx.incidence();
    std::vector<std::uint32_t> starts;
    for (auto v : {ctx.head, ctx.tail})
        if (!inc[v].empty()) starts.push_back(v);
    EdgeMask mask(ctx.num_edges(), 1);
    if (starts.empty()) return mask;
    const auto walks = rng.uniform_int(cfg.min_walks, cfg.max_walks);
    for (long long w = 0; w < walks; ++w) {
        std::uint32_t v = starts[rng.uniform_index(starts.size())];
        const auto len = rng.uniform_int(1, cfg.max_length);
        for (long long s = 0; s < len; ++s) {
            const auto& edges = inc[v];
            if (edges.empty()) break;
            const auto e = edges[rng.uniform_index(edges.size())];
            mask[e] = 1.0;
            const auto& edge = ctx.edges[e];
            v = edge.src == v ? edge.dst : edge.src;
        }
    }
    return mask;
}

TapePretrainLosses pretrain_losses(ad::Tape& tape, const BoundModel& model, const GraphPlan& graph,
                                   const GraphPlan& contrast, const EdgeMask& mask, double gamma) {
    ad::Var m = tape.constant(mask);
    ad::Var g = encode(tape, model, graph, m);
    ad::Var rec = decode(tape, model, graph, g);
    ad::Var g_pos = encode(tape, model, graph, rec);
    ad::Var g_neg = encode(tape, model, contrast, decode(tape, model, contrast, g));
    TapePretrainLosses out;
    out.recon = ad::binary_cross_entropy(rec, mask);
    out.contrast = ad::relu(ad::add_scalar(ad::sub(ad::cosine(g_neg, g), ad::cosine(g_pos, g)), gamma));
    return out;
}

PretrainLosses pretrain_losses(const ModelParams& params, const PretrainSample& sample, double gamma) {
    ad::Tape tape;
    auto model = bind_model(tape, params, false);
    auto gp = plan_graph(sample.graph), cp = plan_graph(sample.contrast);
    auto l = pretrain_losses(tape, model, gp, cp, sample.mask, gamma);
    PretrainLosses r{l.recon.scalar(), l.contrast.scalar()};
    if (!std::isfinite(r.recon) || !std::isfinite(r.contrast)) throw NumericError("pretrain_losses: non-finite loss");
    return r;
}

FewShotTask sample_training_task(const KnowledgeGraph& kg, Rng& rng, std::size_t K, std::size_t n_queries) {
    if (K < 1 || n_queries < 1) throw ArgumentError("sample_training_task: K and n_queries must be >= 1");
    std::vector<std::vector<std::size_t>> by_rel(kg.num_relations());
    for (std::size_t i = 0; i < kg.num_triplets(); ++i) by_rel[kg.triplet(i).relation.value].push_back(i);
    std::vector<std::uint32_t> eligible;
    for (std::uint32_t r = 0; r < by_rel.size(); ++r)
        if (by_rel[r].size() >= K + n_queries) eligible.push_back(r);
    if (eligible.empty())
        throw ArgumentError("sample_training_task: no relation has " + std::to_string(K + n_queries) + " triplets");
    const auto r = eligible[rng.uniform_index(eligible.size())];
    const auto& pool = by_rel[r];
    auto pick = rng.sample_without_replacement(pool.size(), K + n_queries);
    FewShotTask task;
    task.relation = RelationId{r};
    task.relation_name = kg.relation_name(RelationId{r});
    for (std::size_t i = 0; i < pick.size(); ++i) {
        const auto& t = kg.triplet(pool[pick[i]]);
        if (i < K)
            task.support.emplace_back(t.head, t.tail);
        else
            task.queries.push_back({t.head, t.tail, {}});
    }
    return task;
}

}  // namespace csr
