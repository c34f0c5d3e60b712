#pragma once
// Learned hypothesis/evidence proposal with an encoder/decoder pair:
// iterative pairwise decode-and-min proposal, cosine query scoring,
// and the self-supervised pretraining losses.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "csr/gnn.hpp"
#include "csr/kg.hpp"
#include "csr/rng.hpp"
#include "csr/task.hpp"

namespace csr {

// Encoder/decoder pair seen by the proposal and scoring procedures.
class MaskModel {
public:
    virtual ~MaskModel() = default;
    virtual GraphEmbedding encode(const ContextGraph& g, const EdgeMask& m) const = 0;
    virtual EdgeMask decode(const ContextGraph& g, const GraphEmbedding& b) const = 0;
};

class GnnMaskModel final : public MaskModel {
public:
    explicit GnnMaskModel(const ModelParams& params) : params_(&params) {}
    GraphEmbedding encode(const ContextGraph& g, const EdgeMask& m) const override;
    EdgeMask decode(const ContextGraph& g, const GraphEmbedding& b) const override;

private:
    const ModelParams* params_;
};

struct Proposal {
    std::vector<EdgeMask> masks;
    GraphEmbedding embedding;  // mean of encode(G_i, m_i)
};

// Starting from all-ones masks, each iteration sets
//   m_j <- min_k decode(G_j, encode(G_k, m_k))   (k ranges over all graphs)
// using the masks of the previous iteration for every k.
std::vector<EdgeMask> propose_hypothesis(const MaskModel& model, std::span<const ContextGraph> supports,
                                         int proposal_iters = 2);
Proposal propose(const MaskModel& model, std::span<const ContextGraph> supports, int proposal_iters = 2);

struct QueryScore {
    double score = 0.0;
    EdgeMask evidence;
};

// Scores a query against a proposal: m_q = decode(G_q, b), returns
// cosine(encode(G_q, m_q), b).
QueryScore score_query(const MaskModel& model, const Proposal& hypothesis, const ContextGraph& query);
double score_query(const MaskModel& model, std::span<const ContextGraph> supports, const ContextGraph& query,
                   int proposal_iters = 2);

// Differentiable counterparts over a tape.
struct TapeProposal {
    std::vector<ad::Var> masks;
    ad::Var embedding;
};
TapeProposal propose(ad::Tape& tape, const BoundModel& model, std::span<const GraphPlan> supports,
                     int proposal_iters);
ad::Var score_query(ad::Tape& tape, const BoundModel& model, const TapeProposal& hypothesis,
                    const GraphPlan& query, ad::Var* evidence = nullptr);

struct WalkConfig {
    int min_walks = 1;
    int max_walks = 4;
    int max_length = 3;
};

// Union of the edges traversed by random walks starting at head or tail.
EdgeMask sample_pretrain_mask(const ContextGraph& ctx, Rng& rng, const WalkConfig& cfg = {});

struct PretrainSample {
    ContextGraph graph;
    ContextGraph contrast;  // context of a different relation
    EdgeMask mask;          // binary, over graph
};

struct PretrainLosses {
    double recon = 0.0;
    double contrast = 0.0;
};

// recon    = BCE(m, decode(G, encode(G, m)))
// contrast = max(s(g_neg, g) - s(g_pos, g) + gamma, 0)
// with g = encode(G, m), g_pos = encode(G, decode(G, g)),
// g_neg = encode(G', decode(G', g)).
PretrainLosses pretrain_losses(const ModelParams& params, const PretrainSample& sample, double gamma);

struct TapePretrainLosses {
    ad::Var recon;
    ad::Var contrast;
};
TapePretrainLosses pretrain_losses(ad::Tape& tape, const BoundModel& model, const GraphPlan& graph,
                                   const GraphPlan& contrast, const EdgeMask& mask, double gamma);

// K support triplets and n_queries disjoint query triplets of one relation
// chosen uniformly among relations with at least K + n_queries triplets.
// Query candidate lists are left empty.
FewShotTask sample_training_task(const KnowledgeGraph& kg, Rng& rng, std::size_t K, std::size_t n_queries = 1);

}  // namespace csr
