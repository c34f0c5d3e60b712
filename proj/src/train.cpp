#include "csr/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "csr/errors.hpp"
#include "csr/eval.hpp"
#include "csr/optim.hpp"
#include "csr/parallel.hpp"

namespace csr {

void TrainConfig::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || supervised_weight < 0) throw ArgumentError("loss weights must be >= 0");
    if (!(gamma > 0)) throw ArgumentError("gamma must be > 0");
    if (!(learning_rate > 0)) throw ArgumentError("learning_rate must be > 0");
    if (epochs < 1) throw ArgumentError("epochs must be >= 1");
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (weight_decay < 0) throw ArgumentError("weight_decay must be >= 0");
    if (proposal_iters < 1) throw ArgumentError("proposal_iters must be >= 1");
    if (checkpoint_every < 0) throw ArgumentError("checkpoint_every must be >= 0");
}

namespace {

struct Built {
    ad::Var total;
    LossBreakdown parts;
};

// Builds the loss on `tape`; plans must outlive the tape's backward pass.
Built build_losses(ad::Tape& tape, const BoundModel& model, const TrainingExample& ex, const TrainConfig& cfg,
                   std::vector<GraphPlan>& plans) {
    Built b;
    std::vector<ad::Var> terms;
    plans.reserve(2 + ex.supports.size() + ex.positives.size() + ex.negatives.size());
    if (ex.pretrain && (cfg.lambda1 > 0 || cfg.lambda2 > 0)) {
        plans.push_back(plan_graph(ex.pretrain->graph));
        plans.push_back(plan_graph(ex.pretrain->contrast));
        auto l = pretrain_losses(tape, model, plans[plans.size() - 2], plans.back(), ex.pretrain->mask, cfg.gamma);
        b.parts.recon = l.recon.scalar();
        b.parts.contrast = l.contrast.scalar();
        if (cfg.lambda1 > 0) terms.push_back(ad::scale(l.recon, cfg.lambda1));
        if (cfg.lambda2 > 0) terms.push_back(ad::scale(l.contrast, cfg.lambda2));
    }
    const bool supervise = cfg.supervised_weight > 0 && !ex.support_truth.empty();
    const bool finetune = cfg.finetune && !ex.positives.empty() && !ex.negatives.empty();
    if (!ex.supports.empty() && (supervise || finetune)) {
        const std::size_t first = plans.size();
        for (const auto& g : ex.supports) plans.push_back(plan_graph(g));
        const std::size_t first_pos = plans.size();
        for (const auto& g : ex.positives) plans.push_back(plan_graph(g));
        const std::size_t first_neg = plans.size();
        for (const auto& g : ex.negatives) plans.push_back(plan_graph(g));
        std::span<const GraphPlan> sup(plans.data() + first, ex.supports.size());
        auto prop = propose(tape, model, sup, cfg.proposal_iters);

        std::vector<ad::Var> pos_scores, evidence(ex.positives.size());
        for (std::size_t q = 0; q < ex.positives.size(); ++q)
            pos_scores.push_back(score_query(tape, model, prop, plans[first_pos + q], &evidence[q]));

        if (supervise) {
            std::vector<ad::Var> bce;
            for (std::size_t i = 0; i < ex.supports.size(); ++i)
                bce.push_back(ad::binary_cross_entropy(prop.masks[i], ex.support_truth[i]));
            for (std::size_t q = 0; q < ex.positive_truth.size(); ++q)
                bce.push_back(ad::binary_cross_entropy(evidence[q], ex.positive_truth[q]));
            ad::Var s = ad::mean_of(bce);
            b.parts.supervised = s.scalar();
            terms.push_back(ad::scale(s, cfg.supervised_weight));
        }
        if (finetune) {
            std::vector<ad::Var> margins;
            for (std::size_t n = 0; n < ex.negatives.size(); ++n) {
                ad::Var sn = score_query(tape, model, prop, plans[first_neg + n]);
                for (const auto& sp : pos_scores) margins.push_back(ad::relu(ad::add_scalar(ad::sub(sn, sp), cfg.gamma)));
            }
            ad::Var m = ad::mean_of(margins);
            b.parts.finetune = m.scalar();
            terms.push_back(m);
        }
    }
    if (terms.empty()) {
        b.total = tape.constant(Matrix(1, 1, 0.0));
    } else {
        b.total = terms[0];
        for (std::size_t i = 1; i < terms.size(); ++i) b.total = ad::add(b.total, terms[i]);
    }
    b.parts.total = b.total.scalar();
    return b;
}

}  // namespace

LossBreakdown example_losses(const ModelParams& params, const TrainingExample& ex, const TrainConfig& cfg) {
    ad::Tape tape;
    auto model = bind_model(tape, params, false);
    std::vector<GraphPlan> plans;
    return build_losses(tape, model, ex, cfg, plans).parts;
}

LossBreakdown example_gradients(const ModelParams& params, const TrainingExample& ex, const TrainConfig& cfg,
                                std::vector<Matrix>& grads) {
    ad::Tape tape;
    auto model = bind_model(tape, params, true);
    std::vector<GraphPlan> plans;
    auto built = build_losses(tape, model, ex, cfg, plans);
    grads.clear();
    if (built.total.requires_grad()) {
        tape.backward(built.total);
        for (const auto& v : model.trainable()) grads.push_back(tape.grad(v));
    } else {
        for (const Matrix* m : params.trainable()) grads.emplace_back(m->rows(), m->cols());
    }
    return built.parts;
}

double scheduled_lr(const TrainConfig& cfg, int epoch) {
    return cfg.learning_rate * (1.0 - static_cast<double>(epoch) / static_cast<double>(cfg.epochs));
}

std::string epoch_record_json(const EpochRecord& r) {
    nlohmann::json j{{"epoch", r.epoch},
                     {"loss", r.loss.total},
                     {"recon", r.loss.recon},
                     {"contrast", r.loss.contrast},
                     {"finetune", r.loss.finetune},
                     {"supervised", r.loss.supervised},
                     {"lr", r.learning_rate}};
    return j.dump();
}

TrainResult train(ModelParams& params, const ExampleSource& source, const TrainConfig& cfg, const TrainOptions& opts) {
    cfg.validate();
    AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
    int start = 0;
    const auto trainable = params.trainable();
    if (opts.resume) {
        const auto& st = *opts.resume;
        if (st.first_moment.size() != trainable.size() && !st.first_moment.empty())
            throw ArgumentError("resume state does not match the model");
        if (!st.first_moment.empty()) opt.restore(st.step, st.first_moment, st.second_moment);
        start = static_cast<int>(st.epoch);
    }
    if (opts.checkpoint_dir) std::filesystem::create_directories(*opts.checkpoint_dir);

    TrainResult result;
    std::string last_good = "none";
    double best = std::numeric_limits<double>::infinity();
    auto state_now = [&](int next_epoch) {
        TrainerState s;
        s.epoch = static_cast<std::uint64_t>(next_epoch);
        s.step = opt.steps();
        s.first_moment = opt.first_moment();
        s.second_moment = opt.second_moment();
        return s;
    };

    const int stop = opts.until_epoch ? std::min(*opts.until_epoch, cfg.epochs) : cfg.epochs;
    for (int epoch = start; epoch < stop; ++epoch) {
        Rng rng(derive_seed(cfg.rng_seed, "batch", static_cast<std::uint64_t>(epoch)));
        std::vector<TrainingExample> batch;
        for (int i = 0; i < cfg.batch_size; ++i) batch.push_back(source(rng));
        std::vector<std::vector<Matrix>> grads(batch.size());
        std::vector<LossBreakdown> losses(batch.size());
        parallel_for(batch.size(), cfg.jobs,
                     [&](std::size_t i) { losses[i] = example_gradients(params, batch[i], cfg, grads[i]); });

        EpochRecord rec;
        rec.epoch = epoch;
        rec.learning_rate = scheduled_lr(cfg, epoch);
        std::vector<Matrix> sum = grads[0];
        for (std::size_t i = 1; i < grads.size(); ++i)
            for (std::size_t k = 0; k < sum.size(); ++k)
                for (std::size_t e = 0; e < sum[k].size(); ++e) sum[k][e] += grads[i][k][e];
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (auto& g : sum)
            for (auto& v : g.values()) v *= inv;
        for (const auto& l : losses) {
            rec.loss.total += l.total * inv;
            rec.loss.recon += l.recon * inv;
            rec.loss.contrast += l.contrast * inv;
            rec.loss.finetune += l.finetune * inv;
            rec.loss.supervised += l.supervised * inv;
        }
        bool finite = std::isfinite(rec.loss.total);
        for (const auto& g : sum) finite = finite && g.all_finite();
        if (!finite)
            throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                               "; last good checkpoint: " + last_good);

        opt.step(params.trainable(), sum, rec.learning_rate);
        result.history.push_back(rec);
        if (opts.log) *opts.log << epoch_record_json(rec) << '\n';

        if (rec.loss.total < best) {
            best = rec.loss.total;
            result.best_epoch = epoch;
            if (opts.checkpoint_dir) save_checkpoint(*opts.checkpoint_dir / "best.ckpt", params);
        }
        if (opts.checkpoint_dir && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
            auto st = state_now(epoch + 1);
            const auto path = *opts.checkpoint_dir / "last.ckpt";
            save_checkpoint(path, params, &st);
            last_good = path.string();
        }
    }
    result.state = state_now(std::max(start, stop));
    if (opts.checkpoint_dir) {
        save_checkpoint(*opts.checkpoint_dir / "final.ckpt", params, &result.state);
        save_checkpoint(*opts.checkpoint_dir / "last.ckpt", params, &result.state);
    }
    return result;
}

ExampleSource kg_example_source(const KnowledgeGraph& kg, const ContextConfig& ctx, const TrainConfig& cfg,
                                std::size_t k_shot) {
    std::vector<std::vector<std::size_t>> by_rel(kg.num_relations());
    for (std::size_t i = 0; i < kg.num_triplets(); ++i) by_rel[kg.triplet(i).relation.value].push_back(i);
    std::vector<std::uint32_t> rels;
    for (std::uint32_t r = 0; r < by_rel.size(); ++r)
        if (!by_rel[r].empty()) rels.push_back(r);
    if (rels.size() < 2) throw ArgumentError("pretraining needs at least two relations with triplets");

    return [&kg, ctx, cfg, k_shot, by_rel = std::move(by_rel), rels = std::move(rels)](Rng& rng) {
        TrainingExample ex;
        auto context_of = [&](const Triplet& t) {
            LeakExclusion ex_direct{t.relation, false};
            ContextConfig c = ctx;
            c.rng_seed = derive_seed(ctx.rng_seed, "pretrain", rng.next());
            return contextualize(kg, t.head, t.tail, c, ex_direct);
        };
        for (int attempt = 0; attempt < 20 && !ex.pretrain; ++attempt) {
            const auto ri = rng.uniform_index(rels.size());
            auto rj = rng.uniform_index(rels.size() - 1);
            if (rj >= ri) ++rj;
            const auto& a = by_rel[rels[ri]];
            const auto& b = by_rel[rels[rj]];
            const Triplet& ta = kg.triplet(a[rng.uniform_index(a.size())]);
            const Triplet& tb = kg.triplet(b[rng.uniform_index(b.size())]);
            if (ta.head == ta.tail || tb.head == tb.tail) continue;
            PretrainSample s;
            s.graph = context_of(ta);
            s.contrast = context_of(tb);
            if (s.graph.num_edges() == 0) continue;
            s.mask = sample_pretrain_mask(s.graph, rng, cfg.walks);
            ex.pretrain = std::move(s);
        }
        if (cfg.finetune) {
            FewShotTask task = sample_training_task(kg, rng, k_shot, 1);
            std::set<std::pair<EntityId, EntityId>> known(task.support.begin(), task.support.end());
            for (const auto& q : task.queries) known.insert({q.head, q.positive});
            for (auto& q : task.queries)
                q.candidates = sample_negatives(kg, q.head, task.relation, q.positive, 1, rng, known);
            ContextConfig c = ctx;
            c.rng_seed = derive_seed(ctx.rng_seed, "finetune", rng.next());
            try {
                auto graphs = contextualize_task(kg, task, c);
                ex.supports = std::move(graphs.support);
                for (auto& qg : graphs.query_graphs) {
                    ex.positives.push_back(std::move(qg[0]));
                    for (std::size_t k = 1; k < qg.size(); ++k) ex.negatives.push_back(std::move(qg[k]));
                }
            } catch (const ArgumentError&) {
                // Degenerate pair (e.g. a self-loop triplet); this draw trains the pretraining terms only.
                ex.supports.clear();
            }
        }
        return ex;
    };
}

ExampleSource synthetic_example_source(std::span<const SyntheticTask> tasks, const TrainConfig& cfg, bool supervised) {
    if (tasks.empty()) throw ArgumentError("synthetic_example_source: empty corpus");
    return [tasks, cfg, supervised](Rng& rng) {
        const auto ti = rng.uniform_index(tasks.size());
        const SyntheticTask& t = tasks[ti];
        TrainingExample ex;
        std::vector<const SyntheticGraph*> positives;
        for (const auto& g : t.supports) positives.push_back(&g);
        for (const auto& g : t.queries)
            if (g.positive) positives.push_back(&g);
        PretrainSample s;
        s.graph = positives[rng.uniform_index(positives.size())]->graph;
        if (tasks.size() > 1) {
            auto tj = rng.uniform_index(tasks.size() - 1);
            if (tj >= ti) ++tj;
            const auto& other = tasks[tj].supports;
            s.contrast = other[rng.uniform_index(other.size())].graph;
        } else {
            s.contrast = t.queries.back().graph;
        }
        if (s.graph.num_edges() > 0) {
            s.mask = sample_pretrain_mask(s.graph, rng, cfg.walks);
            ex.pretrain = std::move(s);
        }
        for (const auto& g : t.supports) {
            ex.supports.push_back(g.graph);
            if (supervised) ex.support_truth.push_back(g.truth);
        }
        for (const auto& q : t.queries) {
            if (q.positive) {
                ex.positives.push_back(q.graph);
                if (supervised) ex.positive_truth.push_back(q.truth);
            } else {
                ex.negatives.push_back(q.graph);
            }
        }
        return ex;
    };
}

}  // namespace csr
