#include "csr/eval.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>

#include <nlohmann/json.hpp>

#include "csr/csr_gnn.hpp"
#include "csr/errors.hpp"
#include "csr/parallel.hpp"

namespace csr {

std::vector<EntityId> sample_negatives(const KnowledgeGraph& kg, EntityId head, std::optional<RelationId> relation,
                                       EntityId positive, std::size_t n, Rng& rng,
                                       const std::set<std::pair<EntityId, EntityId>>& known) {
    if (!kg.valid(head) || !kg.valid(positive)) throw ArgumentError("sample_negatives: invalid entity id");
    std::set<EntityId> excluded{positive, head};
    if (relation)
        for (const auto& nb : kg.out_edges(head))
            if (nb.relation == *relation) excluded.insert(nb.entity);
    for (const auto& [h, t] : known)
        if (h == head) excluded.insert(t);
    std::vector<EntityId> eligible;
    for (std::uint32_t e = 0; e < kg.num_entities(); ++e)
        if (!excluded.count(EntityId{e})) eligible.push_back(EntityId{e});
    if (eligible.size() < n)
        throw ArgumentError("sample_negatives: only " + std::to_string(eligible.size()) + " eligible entities for " +
                            std::to_string(n) + " negatives");
    std::vector<EntityId> out;
    for (auto i : rng.sample_without_replacement(eligible.size(), n)) out.push_back(eligible[i]);
    return out;
}

RankResult rank_metrics(std::span<const double> scores, std::size_t positive_index) {
    if (scores.size() < 2) throw ArgumentError("rank_metrics: needs at least 2 scores");
    if (positive_index >= scores.size()) throw ArgumentError("rank_metrics: positive index out of range");
    for (double s : scores)
        if (!std::isfinite(s)) throw NumericError("rank_metrics: non-finite score");
    const double p = scores[positive_index];
    std::size_t greater = 0, ties = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (i == positive_index) continue;
        greater += scores[i] > p;
        ties += scores[i] == p;
    }
    RankResult r;
    r.rank = 1.0 + static_cast<double>(greater) + 0.5 * static_cast<double>(ties);
    r.rr = 1.0 / r.rank;
    r.hits1 = r.rank <= 1.0;
    r.hits5 = r.rank <= 5.0;
    r.hits10 = r.rank <= 10.0;
    return r;
}

double roc_auc(std::span<const double> positive, std::span<const double> negative) {
    if (positive.empty() || negative.empty()) throw ArgumentError("roc_auc: needs both classes");
    double wins = 0.0;
    for (double p : positive)
        for (double n : negative) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    return wins / (static_cast<double>(positive.size()) * static_cast<double>(negative.size()));
}

namespace {

std::pair<EntityId, EntityId> endpoints(const ContextGraph& g) {
    if (!g.has_entities()) return {EntityId{g.head}, EntityId{g.tail}};
    return {g.node_entities[g.head], g.node_entities[g.tail]};
}

class OracleQuery final : public QueryScorer {
public:
    explicit OracleQuery(const std::set<std::pair<EntityId, EntityId>>* t) : truths_(t) {}
    double score(const ContextGraph& q) const override { return truths_->count(endpoints(q)) ? 1.0 : 0.0; }

private:
    const std::set<std::pair<EntityId, EntityId>>* truths_;
};

class RandomQuery final : public QueryScorer {
public:
    explicit RandomQuery(std::uint64_t seed) : seed_(seed) {}
    double score(const ContextGraph& q) const override {
        auto [h, t] = endpoints(q);
        Rng rng(derive_seed(seed_, h.value, t.value));
        return rng.uniform();
    }

private:
    std::uint64_t seed_;
};

class GnnQuery final : public QueryScorer {
public:
    GnnQuery(const ModelParams* p, Proposal prop) : model_(*p), prop_(std::move(prop)) {}
    double score(const ContextGraph& q) const override { return score_query(model_, prop_, q).score; }

private:
    GnnMaskModel model_;
    Proposal prop_;
};

}  // namespace

std::unique_ptr<QueryScorer> OracleScorer::prepare(std::span<const ContextGraph>) const {
    return std::make_unique<OracleQuery>(&truths_);
}

std::unique_ptr<QueryScorer> RandomScorer::prepare(std::span<const ContextGraph>) const {
    return std::make_unique<RandomQuery>(seed_);
}

EvidenceResult CsrOptQuery::evidence(const ContextGraph& q) const {
    return propose_evidence_opt(*params_, hyp_.embedding, q, cfg_);
}

double CsrOptQuery::score(const ContextGraph& q) const { return evidence(q).score; }

std::unique_ptr<QueryScorer> CsrOptScorer::prepare(std::span<const ContextGraph> supports) const {
    return std::make_unique<CsrOptQuery>(params_, cfg_, propose_hypothesis_opt(*params_, supports, cfg_));
}

std::unique_ptr<QueryScorer> CsrGnnScorer::prepare(std::span<const ContextGraph> supports) const {
    GnnMaskModel model(*params_);
    return std::make_unique<GnnQuery>(params_, propose(model, supports, iters_));
}

MetricsReport aggregate(std::vector<QueryRecord> records, std::size_t n_tasks) {
    MetricsReport r;
    r.tasks.resize(n_tasks);
    for (const auto& q : records) {
        auto& t = r.tasks.at(q.task);
        ++t.queries;
        t.mrr += q.rank.rr;
        t.hits1 += q.rank.hits1;
        t.hits5 += q.rank.hits5;
        t.hits10 += q.rank.hits10;
        r.mrr += q.rank.rr;
        r.hits1 += q.rank.hits1;
        r.hits5 += q.rank.hits5;
        r.hits10 += q.rank.hits10;
    }
    for (auto& t : r.tasks)
        if (t.queries) {
            const double n = static_cast<double>(t.queries);
            t.mrr /= n;
            t.hits1 /= n;
            t.hits5 /= n;
            t.hits10 /= n;
        }
    r.queries = records.size();
    if (r.queries) {
        const double n = static_cast<double>(r.queries);
        r.mrr /= n;
        r.hits1 /= n;
        r.hits5 /= n;
        r.hits10 /= n;
    }
    r.records = std::move(records);
    return r;
}

MetricsReport evaluate(const Scorer& scorer, std::span<const FewShotTask> tasks, const KnowledgeGraph& kg,
                       const EvalConfig& cfg, const TaskObserver& observer) {
    struct Slot {
        std::vector<QueryRecord> records;
        bool skipped = false;
        std::string error;
    };
    std::vector<Slot> slots(tasks.size());
    parallel_for(tasks.size(), cfg.jobs, [&](std::size_t i) {
        FewShotTask task = tasks[i];
        TaskGraphs graphs;
        try {
            std::set<std::pair<EntityId, EntityId>> known(task.support.begin(), task.support.end());
            for (const auto& q : task.queries) known.insert({q.head, q.positive});
            for (std::size_t qi = 0; qi < task.queries.size(); ++qi) {
                auto& q = task.queries[qi];
                if (!q.candidates.empty()) continue;
                Rng rng(derive_seed(cfg.rng_seed, "negatives", i, qi));
                q.candidates = sample_negatives(kg, q.head, task.relation, q.positive, cfg.n_negatives, rng, known);
            }
            graphs = contextualize_task(kg, task, cfg.context);
        } catch (const std::exception& ex) {
            slots[i].skipped = true;
            slots[i].error = ex.what();
            return;
        }
        auto qs = scorer.prepare(graphs.support);
        for (std::size_t qi = 0; qi < task.queries.size(); ++qi) {
            QueryRecord rec;
            rec.task = i;
            rec.head = kg.entity_name(task.queries[qi].head);
            rec.positive = kg.entity_name(task.queries[qi].positive);
            for (const auto& g : graphs.query_graphs[qi]) rec.scores.push_back(qs->score(g));
            rec.rank = rank_metrics(rec.scores, 0);
            slots[i].records.push_back(std::move(rec));
        }
        if (observer) observer(i, task, graphs, *qs);
    });
    std::vector<QueryRecord> all;
    for (auto& s : slots)
        for (auto& r : s.records) all.push_back(std::move(r));
    MetricsReport report = aggregate(std::move(all), tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        report.tasks[i].relation = tasks[i].relation_name;
        report.tasks[i].skipped = slots[i].skipped;
        report.tasks[i].error = slots[i].error;
        report.skipped_tasks += slots[i].skipped;
    }
    return report;
}

std::string report_json(const MetricsReport& r) {
    nlohmann::json j;
    j["mrr"] = r.mrr;
    j["hits@1"] = r.hits1;
    j["hits@5"] = r.hits5;
    j["hits@10"] = r.hits10;
    j["queries"] = r.queries;
    j["skipped_tasks"] = r.skipped_tasks;
    auto& tasks = j["tasks"] = nlohmann::json::array();
    for (const auto& t : r.tasks) {
        nlohmann::json row{{"relation", t.relation}, {"queries", t.queries}, {"mrr", t.mrr},
                           {"hits@1", t.hits1},      {"hits@5", t.hits5},   {"hits@10", t.hits10}};
        if (t.skipped) row["error"] = t.error;
        tasks.push_back(std::move(row));
    }
    auto& recs = j["records"] = nlohmann::json::array();
    for (const auto& q : r.records)
        recs.push_back({{"task", q.task}, {"head", q.head}, {"positive", q.positive}, {"rank", q.rank.rank},
                        {"scores", q.scores}});
    return j.dump(1);
}

void write_report_table(std::ostream& out, const MetricsReport& r) {
    char line[256];
    auto row = [&](const std::string& name, std::size_t n, double mrr, double h1, double h5, double h10) {
        std::snprintf(line, sizeof line, "%-32s %8zu %7.4f %7.4f %7.4f %7.4f\n", name.c_str(), n, mrr, h1, h5, h10);
        out << line;
    };
    std::snprintf(line, sizeof line, "%-32s %8s %7s %7s %7s %7s\n", "relation", "queries", "MRR", "H@1", "H@5", "H@10");
    out << line;
    for (const auto& t : r.tasks) {
        if (t.skipped) {
            out << t.relation << "  skipped: " << t.error << '\n';
            continue;
        }
        row(t.relation, t.queries, t.mrr, t.hits1, t.hits5, t.hits10);
    }
    row("overall", r.queries, r.mrr, r.hits1, r.hits5, r.hits10);
}

std::set<EntityId> inductive_entities(const KnowledgeGraph& kg, std::span<const FewShotTask> tasks) {
    std::set<EntityId> seeds;
    for (const auto& t : tasks) {
        for (const auto& [h, tl] : t.support) seeds.insert({h, tl});
        for (const auto& q : t.queries) seeds.insert({q.head, q.positive});
    }
    std::set<EntityId> out = seeds;
    for (auto e : seeds) {
        if (!kg.valid(e)) throw ArgumentError("build_inductive_split: task entity not in graph");
        for (const auto& nb : kg.neighbors(e)) out.insert(nb.entity);
    }
    return out;
}

InductiveSplit build_inductive_split(const KnowledgeGraph& kg, std::span<const FewShotTask> tasks) {
    const auto ents = inductive_entities(kg, tasks);
    std::vector<NamedTriplet> bg;
    InductiveSplit split;
    const auto named = kg.named_triplets();
    for (std::size_t i = 0; i < kg.num_triplets(); ++i) {
        const auto& t = kg.triplet(i);
        if (ents.count(t.head) || ents.count(t.tail))
            split.test.push_back(named[i]);
        else
            bg.push_back(named[i]);
    }
    if (bg.empty()) throw ArgumentError("build_inductive_split: background graph would be empty");
    split.background = KnowledgeGraph::from_triplets(bg);
    return split;
}

TuneResult tune_opt_config(const ModelParams& params, std::span<const ValidationTask> tasks, const OptConfig& base,
                           const OptGrid& grid, int jobs) {
    if (tasks.empty()) throw ArgumentError("tune_opt_config: no validation tasks");
    TuneResult result;
    for (double lam : grid.lambda_entropy)
        for (double eps : grid.epsilon)
            for (int steps : grid.max_steps)
                for (double step : grid.step_size) {
                    OptConfig cfg = base;
                    cfg.lambda_entropy = lam;
                    cfg.epsilon = eps;
                    cfg.max_steps = steps;
                    cfg.step_size = step;
                    std::vector<double> pos(tasks.size()), neg(tasks.size());
                    parallel_for(tasks.size(), jobs, [&](std::size_t i) {
                        auto hyp = propose_hypothesis_opt(params, tasks[i].supports, cfg);
                        pos[i] = propose_evidence_opt(params, hyp.embedding, tasks[i].positive, cfg).score;
                        neg[i] = propose_evidence_opt(params, hyp.embedding, tasks[i].negative, cfg).score;
                    });
                    const double auc = roc_auc(pos, neg);
                    result.trials.emplace_back(cfg, auc);
                    if (auc > result.best_auc) {
                        result.best_auc = auc;
                        result.best = cfg;
                    }
                }
    return result;
}

}  // namespace csr
