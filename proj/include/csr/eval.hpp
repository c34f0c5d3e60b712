#pragma once
// Few-shot evaluation: candidate sampling, rank metrics, the evaluation
// loop over task files, inductive splits, and scorer implementations.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "csr/context.hpp"
#include "csr/csr_opt.hpp"
#include "csr/kg.hpp"
#include "csr/model.hpp"
#include "csr/rng.hpp"
#include "csr/task.hpp"

namespace csr {

// n distinct entities other than `positive` and `head` with (head, relation, t') not
// known true; `known` lists extra (head, tail) pairs treated as true.
std::vector<EntityId> sample_negatives(const KnowledgeGraph& kg, EntityId head, std::optional<RelationId> relation,
                                       EntityId positive, std::size_t n, Rng& rng,
                                       const std::set<std::pair<EntityId, EntityId>>& known = {});

struct RankResult {
    double rank = 0.0;  // mean rank over the tied block
    double rr = 0.0;
    bool hits1 = false, hits5 = false, hits10 = false;
};

RankResult rank_metrics(std::span<const double> scores, std::size_t positive_index = 0);

// Area under the ROC curve; ties count one half.
double roc_auc(std::span<const double> positive, std::span<const double> negative);

// Scores queries against one task's support graphs.
class QueryScorer {
public:
    virtual ~QueryScorer() = default;
    virtual double score(const ContextGraph& query) const = 0;
};

class Scorer {
public:
    virtual ~Scorer() = default;
    virtual std::unique_ptr<QueryScorer> prepare(std::span<const ContextGraph> supports) const = 0;
};

// Scores 1 for graphs whose (head, tail) entities are listed, else 0.
class OracleScorer final : public Scorer {
public:
    explicit OracleScorer(std::set<std::pair<EntityId, EntityId>> truths) : truths_(std::move(truths)) {}
    std::unique_ptr<QueryScorer> prepare(std::span<const ContextGraph> supports) const override;

private:
    std::set<std::pair<EntityId, EntityId>> truths_;
};

// Uniform scores keyed by the query's (head, tail) entities.
class RandomScorer final : public Scorer {
public:
    explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
    std::unique_ptr<QueryScorer> prepare(std::span<const ContextGraph> supports) const override;

private:
    std::uint64_t seed_;
};

// Query scorer produced by CsrOptScorer; exposes the support masks.
class CsrOptQuery final : public QueryScorer {
public:
    CsrOptQuery(const ModelParams* p, const OptConfig& c, HypothesisResult h)
        : params_(p), cfg_(c), hyp_(std::move(h)) {}
    double score(const ContextGraph& query) const override;
    EvidenceResult evidence(const ContextGraph& query) const;
    const HypothesisResult& hypothesis() const { return hyp_; }

private:
    const ModelParams* params_;
    OptConfig cfg_;
    HypothesisResult hyp_;
};

class CsrOptScorer final : public Scorer {
public:
    CsrOptScorer(const ModelParams& params, OptConfig cfg) : params_(&params), cfg_(cfg) {}
    std::unique_ptr<QueryScorer> prepare(std::span<const ContextGraph> supports) const override;

private:
    const ModelParams* params_;
    OptConfig cfg_;
};

class CsrGnnScorer final : public Scorer {
public:
    CsrGnnScorer(const ModelParams& params, int proposal_iters) : params_(&params), iters_(proposal_iters) {}
    std::unique_ptr<QueryScorer> prepare(std::span<const ContextGraph> supports) const override;

private:
    const ModelParams* params_;
    int iters_;
};

struct EvalConfig {
    ContextConfig context;
    std::size_t n_negatives = 50;
    std::uint64_t rng_seed = 0;
    int jobs = 1;
};

struct QueryRecord {
    std::size_t task = 0;
    std::string head, positive;
    std::vector<double> scores;  // [0] is the positive
    RankResult rank;
};

struct TaskMetrics {
    std::string relation;
    std::size_t queries = 0;
    double mrr = 0.0, hits1 = 0.0, hits5 = 0.0, hits10 = 0.0;
    bool skipped = false;
    std::string error;
};

struct MetricsReport {
    double mrr = 0.0, hits1 = 0.0, hits5 = 0.0, hits10 = 0.0;
    std::size_t queries = 0;
    std::size_t skipped_tasks = 0;
    std::vector<TaskMetrics> tasks;
    std::vector<QueryRecord> records;
};

// Aggregates micro-averaged metrics over query records, in order.
MetricsReport aggregate(std::vector<QueryRecord> records, std::size_t n_tasks);

// Called once per scored task, possibly from worker threads.
using TaskObserver =
    std::function<void(std::size_t task_index, const FewShotTask&, const TaskGraphs&, const QueryScorer&)>;

// Candidates are sampled for queries that list none; each query is
// ranked among its positive and candidates.
MetricsReport evaluate(const Scorer& scorer, std::span<const FewShotTask> tasks, const KnowledgeGraph& kg,
                       const EvalConfig& cfg, const TaskObserver& observer = {});

std::string report_json(const MetricsReport& r);
void write_report_table(std::ostream& out, const MetricsReport& r);

struct InductiveSplit {
    KnowledgeGraph background;         // Ind-BG
    std::vector<NamedTriplet> test;    // Ind-Test
};

// Entities of the tasks' support and query triplets plus their one-hop
// neighbors; every triplet touching one of them moves to the test side.
InductiveSplit build_inductive_split(const KnowledgeGraph& kg, std::span<const FewShotTask> tasks);
// Entity set underlying build_inductive_split.
std::set<EntityId> inductive_entities(const KnowledgeGraph& kg, std::span<const FewShotTask> tasks);

// Grid search over mask optimization settings by validation AUC of one
// positive versus one negative query per task.
struct ValidationTask {
    std::vector<ContextGraph> supports;
    ContextGraph positive;
    ContextGraph negative;
};

struct OptGrid {
    std::vector<double> lambda_entropy{0.01};
    std::vector<double> epsilon{5e-4};
    std::vector<int> max_steps{300};
    std::vector<double> step_size{0.1};
};

struct TuneResult {
    OptConfig best;
    double best_auc = -1.0;
    std::vector<std::pair<OptConfig, double>> trials;
};

TuneResult tune_opt_config(const ModelParams& params, std::span<const ValidationTask> tasks, const OptConfig& base,
                           const OptGrid& grid, int jobs = 1);

}  // namespace csr
