#include "csr/gnn.hpp"

#include <cmath>
#include <string>

#include "csr/errors.hpp"

namespace csr {

std::vector<ad::Var> BoundModel::trainable() const {
    std::vector<ad::Var> out{rel_forward, rel_backward};
    for (std::size_t l = 0; l < enc_w.size(); ++l) {
        out.push_back(enc_w[l]);
        out.push_back(enc_b[l]);
    }
    for (std::size_t l = 0; l < dec_w.size(); ++l) {
        out.push_back(dec_w[l]);
        out.push_back(dec_b[l]);
    }
    out.insert(out.end(), {cls_w1, cls_b1, cls_w2, cls_b2});
    return out;
}

BoundModel bind_model(ad::Tape& tape, const ModelParams& params, bool requires_grad) {
    BoundModel m;
    m.params = &params;
    m.rel_forward = tape.param(params.relations.forward, requires_grad);
    m.rel_backward = tape.param(params.relations.backward, requires_grad);
    for (std::size_t l = 0; l < params.encoder.weights.size(); ++l) {
        m.enc_w.push_back(tape.param(params.encoder.weights[l], requires_grad));
        m.enc_b.push_back(tape.param(params.encoder.biases[l], requires_grad));
    }
    for (std::size_t l = 0; l < params.decoder.layers.weights.size(); ++l) {
        m.dec_w.push_back(tape.param(params.decoder.layers.weights[l], requires_grad));
        m.dec_b.push_back(tape.param(params.decoder.layers.biases[l], requires_grad));
    }
    m.cls_w1 = tape.param(params.decoder.classifier_w1, requires_grad);
    m.cls_b1 = tape.param(params.decoder.classifier_b1, requires_grad);
    m.cls_w2 = tape.param(params.decoder.classifier_w2, requires_grad);
    m.cls_b2 = tape.param(params.decoder.classifier_b2, requires_grad);
    return m;
}

GraphPlan plan_graph(const ContextGraph& g) {
    GraphPlan plan;
    plan.graph = &g;
    auto inc = std::make_shared<ad::Incidence>();
    inc->num_nodes = g.num_nodes;
    inc->edges_of_node = g.incidence();
    plan.incidence = std::move(inc);
    for (const auto& e : g.edges) {
        plan.src.push_back(e.src);
        plan.dst.push_back(e.dst);
        plan.relation_rows.push_back(e.relation.value);
        plan.any_backward = plan.any_backward || e.direction == Direction::Backward;
    }
    return plan;
}

namespace {

ad::Var initial_edge_states(ad::Tape& tape, const BoundModel& model, const GraphPlan& plan) {
    const auto& dims = model.params->dims;
    for (auto r : plan.relation_rows)
        if (r >= dims.num_relations)
            throw ArgumentError("relation id " + std::to_string(r) + " has no embedding (table has " +
                                std::to_string(dims.num_relations) + ")");
    ad::Var fwd = ad::gather_rows(model.rel_forward, plan.relation_rows);
    if (!plan.any_backward) return fwd;
    ad::Var bwd = ad::gather_rows(model.rel_backward, plan.relation_rows);
    const auto& edges = plan.graph->edges;
    Matrix sel_f(edges.size(), dims.relation_dim), sel_b(edges.size(), dims.relation_dim);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const bool forward = edges[e].direction == Direction::Forward;
        for (std::size_t j = 0; j < dims.relation_dim; ++j) {
            sel_f(e, j) = forward ? 1.0 : 0.0;
            sel_b(e, j) = forward ? 0.0 : 1.0;
        }
    }
    return ad::add(ad::mul(fwd, tape.constant(std::move(sel_f))), ad::mul(bwd, tape.constant(std::move(sel_b))));
}

struct PassResult {
    ad::Var edge_states;  // E x hidden
    ad::Var node_states;  // N x (hidden + 2), from the final aggregation
};

PassResult message_passing(const GraphPlan& plan, ad::Var edge_states, ad::Var mask,
                           const std::vector<ad::Var>& weights, const std::vector<ad::Var>& biases,
                           bool final_aggregate) {
    const auto& g = *plan.graph;
    ad::Var s = edge_states;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        ad::Var a = ad::masked_mean_aggregate(s, mask, plan.incidence);
        ad::Var sv = ad::append_indicators(a, g.head, g.tail);
        ad::Var x = ad::concat_cols({ad::gather_rows(sv, plan.src), ad::gather_rows(sv, plan.dst), s});
        if (x.cols() != weights[l].rows())
            throw ArgumentError("layer " + std::to_string(l) + ": input width " + std::to_string(x.cols()) +
                                " does not match weight rows " + std::to_string(weights[l].rows()));
        s = ad::sigmoid(ad::add_row(ad::matmul(x, weights[l]), biases[l]));
    }
    PassResult r{s, {}};
    if (final_aggregate)
        r.node_states = ad::append_indicators(ad::masked_mean_aggregate(s, mask, plan.incidence), g.head, g.tail);
    return r;
}

}  // namespace

ad::Var encode(ad::Tape& tape, const BoundModel& model, const GraphPlan& plan, ad::Var mask) {
    const auto& g = *plan.graph;
    if (mask.rows() != g.num_edges() || mask.cols() != 1)
        throw ArgumentError("encode: mask length " + std::to_string(mask.rows()) + " does not match " +
                            std::to_string(g.num_edges()) + " edges");
    if (g.num_nodes < 2) throw ArgumentError("encode: graph needs head and tail nodes");
    ad::Var s0 = initial_edge_states(tape, model, plan);
    auto pass = message_passing(plan, s0, mask, model.enc_w, model.enc_b, true);
    std::vector<ad::Var> parts{ad::max_pool_rows(pass.node_states), ad::select_row(pass.node_states, g.head),
                               ad::select_row(pass.node_states, g.tail)};
    const auto* params = model.params;
    if (params->entities) {
        if (!g.has_entities()) throw ArgumentError("encode: entity table attached but graph has no entity ids");
        const auto& ent = params->entities->vectors;
        Matrix he(1, ent.cols()), te(1, ent.cols());
        const auto h = g.node_entities[g.head].value, t = g.node_entities[g.tail].value;
        if (h >= ent.rows() || t >= ent.rows()) throw ArgumentError("encode: entity without embedding");
        std::copy(ent.row(h).begin(), ent.row(h).end(), he.row(0).begin());
        std::copy(ent.row(t).begin(), ent.row(t).end(), te.row(0).begin());
        parts.push_back(tape.constant(std::move(he)));
        parts.push_back(tape.constant(std::move(te)));
    }
    return ad::concat_cols(parts);
}

ad::Var decode(ad::Tape& tape, const BoundModel& model, const GraphPlan& plan, ad::Var embedding) {
    const auto& g = *plan.graph;
    const auto& dims = model.params->dims;
    if (embedding.rows() != 1 || embedding.cols() != dims.embedding_dim())
        throw ArgumentError("decode: embedding width " + std::to_string(embedding.cols()) + " does not match " +
                            std::to_string(dims.embedding_dim()));
    ad::Var rel = initial_edge_states(tape, model, plan);
    ad::Var broadcast = ad::gather_rows(embedding, std::vector<std::uint32_t>(g.num_edges(), 0));
    ad::Var s0 = ad::concat_cols({rel, broadcast});
    ad::Var ones = tape.constant(Matrix(g.num_edges(), 1, 1.0));
    auto pass = message_passing(plan, s0, ones, model.dec_w, model.dec_b, false);
    ad::Var hidden = ad::relu(ad::add_row(ad::matmul(pass.edge_states, model.cls_w1), model.cls_b1));
    ad::Var logits = ad::add_row(ad::matmul(hidden, model.cls_w2), model.cls_b2);
    return ad::sigmoid(logits);
}

GraphEmbedding encode(const ModelParams& params, const ContextGraph& g, const EdgeMask& mask) {
    ad::Tape tape;
    auto model = bind_model(tape, params, false);
    auto plan = plan_graph(g);
    return encode(tape, model, plan, tape.param(mask, false)).value();
}

EdgeMask decode(const ModelParams& params, const ContextGraph& g, const GraphEmbedding& b) {
    ad::Tape tape;
    auto model = bind_model(tape, params, false);
    auto plan = plan_graph(g);
    return decode(tape, model, plan, tape.param(b, false)).value();
}

EdgeMask full_mask(const ContextGraph& g) { return Matrix(g.num_edges(), 1, 1.0); }

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ArgumentError("cosine: dimension mismatch");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

ValueAndGrad value_and_grad(const std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>& f,
                            const std::vector<Matrix>& inputs) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& m : inputs) leaves.push_back(tape.param(m, true));
    ad::Var out = f(tape, leaves);
    if (out.rows() != 1 || out.cols() != 1) throw ArgumentError("value_and_grad: target is not a scalar");
    tape.backward(out);
    ValueAndGrad r;
    r.value = out.scalar();
    for (const auto& leaf : leaves) r.grads.push_back(tape.grad(leaf));
    return r;
}

ValueAndGrad value_and_grad_params(const std::function<ad::Var(ad::Tape&, const BoundModel&)>& f,
                                   const ModelParams& params) {
    ad::Tape tape;
    auto model = bind_model(tape, params, true);
    ad::Var out = f(tape, model);
    if (out.rows() != 1 || out.cols() != 1) throw ArgumentError("value_and_grad: target is not a scalar");
    tape.backward(out);
    ValueAndGrad r;
    r.value = out.scalar();
    for (const auto& v : model.trainable()) r.grads.push_back(tape.grad(v));
    return r;
}

}  // namespace csr
