#pragma once
// Mask-weighted relational message passing: the graph encoder, the
// embedding-conditioned edge-mask decoder, and gradient evaluation.
//
// Per layer, with edge states s_e and mask m:
//   a_v     = (1 / (1 + sum_{e in N(v)} m_e)) * sum_{e in N(v)} m_e * s_e
//   s_v     = a_v || 1(v = head) || 1(v = tail)
//   s_e'    = logistic([s_src(e), s_dst(e), s_e] W + b)
// After the last layer the node states are aggregated once more and the
// encoder returns max_pool_v(s_v) || s_head || s_tail.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "csr/autodiff.hpp"
#include "csr/context.hpp"
#include "csr/model.hpp"

namespace csr {

using EdgeMask = Matrix;        // E x 1, entries in [0, 1]
using GraphEmbedding = Matrix;  // 1 x embedding_dim

// Model parameters registered on a tape.
struct BoundModel {
    const ModelParams* params = nullptr;
    ad::Var rel_forward;
    ad::Var rel_backward;
    std::vector<ad::Var> enc_w, enc_b;
    std::vector<ad::Var> dec_w, dec_b;
    ad::Var cls_w1, cls_b1, cls_w2, cls_b2;

    // Tape variables for params->trainable(), in the same order.
    std::vector<ad::Var> trainable() const;
};

BoundModel bind_model(ad::Tape& tape, const ModelParams& params, bool requires_grad);

// Graph structure shared by every pass over one context graph.
struct GraphPlan {
    const ContextGraph* graph = nullptr;
    std::shared_ptr<const ad::Incidence> incidence;
    std::vector<std::uint32_t> src, dst, relation_rows;
    bool any_backward = false;
};

GraphPlan plan_graph(const ContextGraph& g);

ad::Var encode(ad::Tape& tape, const BoundModel& model, const GraphPlan& plan, ad::Var mask);
// Returns per-edge mask probabilities (E x 1).
ad::Var decode(ad::Tape& tape, const BoundModel& model, const GraphPlan& plan, ad::Var embedding);

// Value-only evaluation.
GraphEmbedding encode(const ModelParams& params, const ContextGraph& g, const EdgeMask& mask);
EdgeMask decode(const ModelParams& params, const ContextGraph& g, const GraphEmbedding& b);

EdgeMask full_mask(const ContextGraph& g);

// Cosine similarity; 0 when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);
inline double cosine(const Matrix& a, const Matrix& b) { return cosine(a.values(), b.values()); }

struct ValueAndGrad {
    double value = 0.0;
    std::vector<Matrix> grads;
};

// Evaluates f over fresh leaves holding `inputs` and returns d f / d input.
ValueAndGrad value_and_grad(const std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>& f,
                            const std::vector<Matrix>& inputs);

// Evaluates f with every trainable model matrix as a leaf; gradients are
// aligned with params.trainable().
ValueAndGrad value_and_grad_params(const std::function<ad::Var(ad::Tape&, const BoundModel&)>& f,
                                   const ModelParams& params);

}  // namespace csr
