#pragma once
// Learning-free hypothesis and evidence proposal: masks are optimized
// directly through a fixed (untrained) encoder.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "csr/gnn.hpp"

namespace csr {

enum class MaskOptimizer { GradientDescent, Adam };

MaskOptimizer parse_mask_optimizer(const std::string& name);
std::string to_string(MaskOptimizer opt);

struct OptConfig {
    double lambda_entropy = 0.01;
    double epsilon = 5e-4;
    int max_steps = 300;
    double step_size = 0.1;
    double bdmm_multiplier_rate = 1e5;
    double momentum = 0.0;  // gradient descent only
    MaskOptimizer optimizer = MaskOptimizer::Adam;
    double init_logit = 0.0;
    double init_noise = 0.0;  // uniform jitter added to the initial logits
    // The penalty targets g >= margin * epsilon so iterates settle on the
    // feasible side; feasibility itself is judged at g >= 0.
    double constraint_margin = 0.0;
    // The entropy weight ramps linearly from 0 over this fraction of steps.
    double entropy_ramp = 0.5;
    std::uint64_t rng_seed = 0;
    bool record_trace = false;

    void validate() const;
};

struct ConstraintViolation {
    std::string name;  // "similarity(i,j)" or "connectivity(i)"
    double value = 0.0;
    double threshold = 0.0;
};

struct OptStep {
    int step = 0;
    double objective = 0.0;
    double lagrangian = 0.0;
    double min_similarity = 0.0;
    double min_connectivity = 0.0;
    std::vector<double> multipliers;
};

struct HypothesisResult {
    std::vector<EdgeMask> masks;
    GraphEmbedding embedding;
    std::vector<double> objective_trace;
    std::vector<OptStep> steps;  // populated when record_trace is set
    bool feasible = false;
    int best_step = -1;
    std::vector<ConstraintViolation> violations;
};

struct EvidenceResult {
    EdgeMask mask;
    double score = 0.0;
    std::vector<double> objective_trace;
};

// Soft 2-hop connectivity of a mask; 1 for an edgeless graph.
double connectivity(const ContextGraph& ctx, const EdgeMask& m);
ad::Var connectivity(ad::Tape& tape, const GraphPlan& plan, ad::Var mask);

// Mean binary entropy, natural log.
double entropy(const EdgeMask& m);

HypothesisResult propose_hypothesis_opt(const ModelParams& params, std::span<const ContextGraph> supports,
                                        const OptConfig& cfg);

EvidenceResult propose_evidence_opt(const ModelParams& params, const GraphEmbedding& b, const ContextGraph& query,
                                    const OptConfig& cfg);

// Mean of masked encodings.
GraphEmbedding mean_embedding(const ModelParams& params, std::span<const ContextGraph> graphs,
                              std::span<const EdgeMask> masks);

void write_opt_trace_json(std::ostream& out, const HypothesisResult& r);

}  // namespace csr
