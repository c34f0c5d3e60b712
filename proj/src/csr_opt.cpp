#include "csr/csr_opt.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "csr/errors.hpp"
#include "csr/optim.hpp"
#include "csr/rng.hpp"

namespace csr {

MaskOptimizer parse_mask_optimizer(const std::string& name) {
    if (name == "gd" || name == "sgd" || name == "momentum") return MaskOptimizer::GradientDescent;
    if (name == "adam") return MaskOptimizer::Adam;
    throw ArgumentError("unknown mask optimizer '" + name + "' (expected gd or adam)");
}

std::string to_string(MaskOptimizer opt) { return opt == MaskOptimizer::Adam ? "adam" : "gd"; }

void OptConfig::validate() const {
    if (!(lambda_entropy >= 0.0)) throw ArgumentError("lambda_entropy must be >= 0");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ArgumentError("epsilon must lie in (0, 1)");
    if (max_steps < 0) throw ArgumentError("max_steps must be >= 0");
    if (!(step_size > 0.0)) throw ArgumentError("step_size must be > 0");
    if (!(bdmm_multiplier_rate > 0.0)) throw ArgumentError("bdmm_multiplier_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must lie in [0, 1)");
    if (!(init_noise >= 0.0)) throw ArgumentError("init_noise must be >= 0");
    if (!(constraint_margin >= 0.0)) throw ArgumentError("constraint_margin must be >= 0");
    if (!(entropy_ramp >= 0.0 && entropy_ramp <= 1.0)) throw ArgumentError("entropy_ramp must lie in [0, 1]");
}

ad::Var connectivity(ad::Tape& tape, const GraphPlan& plan, ad::Var mask) {
    const auto& g = *plan.graph;
    const std::size_t E = g.num_edges();
    if (mask.rows() != E || mask.cols() != 1) throw ArgumentError("connectivity: mask length mismatch");
    if (E == 0) return tape.constant(Matrix(1, 1, 1.0));
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ends;
    ends.reserve(E);
    for (std::size_t e = 0; e < E; ++e) ends.emplace_back(plan.src[e], plan.dst[e]);
    ad::Var A = ad::soft_adjacency(mask, ends, g.num_nodes);
    ad::Var R = ad::clamp_max(ad::add_identity(ad::add(A, ad::matmul(A, A))), 1.0);
    auto column = [&](bool use_src, std::uint32_t target) {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> idx;
        idx.reserve(E);
        for (std::size_t e = 0; e < E; ++e) idx.emplace_back(use_src ? plan.src[e] : plan.dst[e], target);
        return ad::gather_entries(R, std::move(idx));
    };
    ad::Var reach = ad::add(ad::add(column(true, g.head), column(true, g.tail)),
                            ad::add(column(false, g.head), column(false, g.tail)));
    return ad::scale(ad::dot(mask, ad::clamp_max(reach, 1.0)), 1.0 / static_cast<double>(E));
}

double connectivity(const ContextGraph& ctx, const EdgeMask& m) {
    ad::Tape tape;
    auto plan = plan_graph(ctx);
    return connectivity(tape, plan, tape.param(m, false)).scalar();
}

double entropy(const EdgeMask& m) {
    ad::Tape tape;
    return ad::binary_entropy(tape.param(m, false)).scalar();
}

GraphEmbedding mean_embedding(const ModelParams& params, std::span<const ContextGraph> graphs,
                              std::span<const EdgeMask> masks) {
    if (graphs.empty() || graphs.size() != masks.size()) throw ArgumentError("mean_embedding: size mismatch");
    GraphEmbedding b;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        GraphEmbedding e = encode(params, graphs[i], masks[i]);
        if (i == 0) {
            b = std::move(e);
        } else {
            for (std::size_t k = 0; k < b.size(); ++k) b[k] += e[k];
        }
    }
    for (std::size_t k = 0; k < b.size(); ++k) b[k] /= static_cast<double>(graphs.size());
    return b;
}

namespace {

// Dispatches to the configured update rule.
class LogitStepper {
public:
    explicit LogitStepper(const OptConfig& cfg) : cfg_(cfg), gd_(cfg.momentum) {}
    void step(const std::vector<Matrix*>& x, const std::vector<Matrix>& g) {
        if (cfg_.optimizer == MaskOptimizer::Adam)
            adam_.step(x, g, cfg_.step_size);
        else
            gd_.step(x, g, cfg_.step_size);
    }

private:
    const OptConfig& cfg_;
    MomentumDescent gd_;
    AdamW adam_;
};

std::vector<Matrix> initial_logits(std::span<const ContextGraph> graphs, const OptConfig& cfg,
                                   std::string_view label) {
    std::vector<Matrix> out;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        Matrix l(graphs[i].num_edges(), 1, cfg.init_logit);
        if (cfg.init_noise > 0.0) {
            Rng rng(derive_seed(derive_seed(cfg.rng_seed, label), i));
            for (std::size_t k = 0; k < l.size(); ++k) l[k] += rng.uniform(-cfg.init_noise, cfg.init_noise);
        }
        out.push_back(std::move(l));
    }
    return out;
}

double entropy_weight(const OptConfig& cfg, int step) {
    const double ramp = cfg.entropy_ramp * cfg.max_steps;
    if (ramp <= 0.0 || step >= ramp) return cfg.lambda_entropy;
    return cfg.lambda_entropy * step / ramp;
}

EdgeMask logistic(const Matrix& logits) {
    EdgeMask m(logits.rows(), 1);
    for (std::size_t k = 0; k < logits.size(); ++k) {
        const double x = logits[k];
        m[k] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return m;
}

}  // namespace

HypothesisResult propose_hypothesis_opt(const ModelParams& params, std::span<const ContextGraph> supports,
                                        const OptConfig& cfg) {
    cfg.validate();
    const std::size_t K = supports.size();
    if (K < 2) throw ArgumentError("propose_hypothesis_opt: needs at least 2 support graphs");

    std::vector<GraphPlan> plans;
    for (const auto& g : supports) plans.push_back(plan_graph(g));
    std::vector<Matrix> logits = initial_logits(supports, cfg, "hypothesis_init");
    std::vector<Matrix*> logit_ptrs;
    for (auto& l : logits) logit_ptrs.push_back(&l);

    const std::size_t n_pairs = K * (K - 1) / 2;
    std::vector<double> mu(n_pairs + K, 0.0);
    LogitStepper stepper(cfg);
    const double floor = 1.0 - cfg.epsilon;
    const double margin = cfg.constraint_margin * cfg.epsilon;

    HypothesisResult result;
    double best_objective = -std::numeric_limits<double>::infinity();
    std::vector<Matrix> best_logits;
    std::vector<double> last_g(mu.size(), 0.0);

    for (int step = 0; step <= cfg.max_steps; ++step) {
        ad::Tape tape;
        auto model = bind_model(tape, params, false);
        std::vector<ad::Var> leaves, masks, embs;
        for (std::size_t i = 0; i < K; ++i) {
            leaves.push_back(tape.param(logits[i], true));
            masks.push_back(ad::sigmoid(leaves.back()));
            embs.push_back(encode(tape, model, plans[i], masks.back()));
        }
        std::vector<ad::Var> mass_terms, ent_terms;
        for (std::size_t i = 0; i < K; ++i) {
            mass_terms.push_back(ad::sum(masks[i]));
            ent_terms.push_back(ad::binary_entropy(masks[i]));
        }
        ad::Var mass = mass_terms[0], ent = ent_terms[0];
        for (std::size_t i = 1; i < K; ++i) {
            mass = ad::add(mass, mass_terms[i]);
            ent = ad::add(ent, ent_terms[i]);
        }
        ad::Var objective = ad::sub(mass, ad::scale(ent, entropy_weight(cfg, step)));

        // g_c >= 0 for every constraint.
        std::vector<ad::Var> gs;
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = i + 1; j < K; ++j) gs.push_back(ad::add_scalar(ad::cosine(embs[i], embs[j]), -floor));
        for (std::size_t i = 0; i < K; ++i) {
            ad::Var conn = connectivity(tape, plans[i], masks[i]);
            gs.push_back(ad::sub(conn, ad::scale(ad::mean(masks[i]), floor)));
        }

        bool feasible = true;
        double min_sim = std::numeric_limits<double>::infinity(), min_conn = min_sim;
        for (std::size_t c = 0; c < gs.size(); ++c) {
            last_g[c] = gs[c].scalar();
            feasible = feasible && last_g[c] >= 0.0;
            if (c < n_pairs)
                min_sim = std::min(min_sim, last_g[c] + floor);
            else
                min_conn = std::min(min_conn, last_g[c]);
        }

        ad::Var lagrangian = ad::scale(objective, -1.0);
        for (std::size_t c = 0; c < gs.size(); ++c)
            if (mu[c] > 0.0)
                lagrangian =
                    ad::add(lagrangian, ad::scale(ad::relu(ad::add_scalar(ad::scale(gs[c], -1.0), margin)), mu[c]));

        const double obj = objective.scalar();
        if (!std::isfinite(obj) || !std::isfinite(lagrangian.scalar()))
            throw NumericError("propose_hypothesis_opt: non-finite objective at step " + std::to_string(step));
        result.objective_trace.push_back(obj);
        if (cfg.record_trace) result.steps.push_back({step, obj, lagrangian.scalar(), min_sim, min_conn, mu});
        if (feasible && obj > best_objective) {
            best_objective = obj;
            best_logits = logits;
            result.best_step = step;
        }
        if (step == cfg.max_steps) break;

        tape.backward(lagrangian);
        std::vector<Matrix> grads;
        for (const auto& leaf : leaves) grads.push_back(tape.grad(leaf));
        stepper.step(logit_ptrs, grads);
        for (std::size_t c = 0; c < mu.size(); ++c)
            mu[c] += cfg.bdmm_multiplier_rate * std::max(margin - last_g[c], 0.0);
    }

    result.feasible = !best_logits.empty();
    const std::vector<Matrix>& chosen = result.feasible ? best_logits : logits;
    for (const auto& l : chosen) result.masks.push_back(logistic(l));
    if (!result.feasible) {
        std::size_t c = 0;
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = i + 1; j < K; ++j, ++c)
                if (last_g[c] < 0.0)
                    result.violations.push_back({"similarity(" + std::to_string(i) + "," + std::to_string(j) + ")",
                                                 last_g[c] + floor, floor});
        for (std::size_t i = 0; i < K; ++i, ++c)
            if (last_g[c] < 0.0)
                result.violations.push_back({"connectivity(" + std::to_string(i) + ")", last_g[c], 0.0});
    }
    result.embedding = mean_embedding(params, supports, result.masks);
    return result;
}

EvidenceResult propose_evidence_opt(const ModelParams& params, const GraphEmbedding& b, const ContextGraph& query,
                                    const OptConfig& cfg) {
    cfg.validate();
    if (b.rows() != 1 || b.cols() != params.dims.embedding_dim())
        throw ArgumentError("propose_evidence_opt: embedding width does not match model");
    auto plan = plan_graph(query);
    std::vector<Matrix> logits = initial_logits(std::span(&query, 1), cfg, "evidence_init");
    std::vector<Matrix*> ptrs{&logits[0]};
    LogitStepper stepper(cfg);
    EvidenceResult r;
    for (int step = 0; step < cfg.max_steps; ++step) {
        ad::Tape tape;
        auto model = bind_model(tape, params, false);
        ad::Var leaf = tape.param(logits[0], true);
        ad::Var m = ad::sigmoid(leaf);
        ad::Var sim = ad::cosine(tape.param(b, false), encode(tape, model, plan, m));
        ad::Var objective = ad::sub(sim, ad::scale(ad::binary_entropy(m), entropy_weight(cfg, step)));
        const double obj = objective.scalar();
        if (!std::isfinite(obj))
            throw NumericError("propose_evidence_opt: non-finite objective at step " + std::to_string(step));
        r.objective_trace.push_back(obj);
        ad::Var loss = ad::scale(objective, -1.0);
        tape.backward(loss);
        stepper.step(ptrs, {tape.grad(leaf)});
    }
    r.mask = logistic(logits[0]);
    r.score = cosine(b, encode(params, query, r.mask));
    if (!std::isfinite(r.score)) throw NumericError("propose_evidence_opt: non-finite score");
    return r;
}

void write_opt_trace_json(std::ostream& out, const HypothesisResult& r) {
    nlohmann::json j;
    j["feasible"] = r.feasible;
    j["best_step"] = r.best_step;
    j["objective"] = r.objective_trace;
    auto& steps = j["steps"] = nlohmann::json::array();
    for (const auto& s : r.steps)
        steps.push_back({{"step", s.step},
                         {"objective", s.objective},
                         {"lagrangian", s.lagrangian},
                         {"min_similarity", s.min_similarity},
                         {"min_connectivity_slack", s.min_connectivity},
                         {"multipliers", s.multipliers}});
    auto& v = j["violations"] = nlohmann::json::array();
    for (const auto& x : r.violations) v.push_back({{"name", x.name}, {"value", x.value}, {"threshold", x.threshold}});
    out << j.dump(1) << '\n';
}

}  // namespace csr
