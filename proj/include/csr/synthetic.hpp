#pragma once
// Synthetic few-shot tasks with a planted connection subgraph (a 4-clique
// over head, tail, z1, z2 without the head-tail edge) and IOU scoring.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "csr/autodiff.hpp"
#include "csr/context.hpp"
#include "csr/gnn.hpp"
#include "csr/rng.hpp"

namespace csr {

struct SynthConfig {
    std::uint32_t n_relations = 50;
    std::uint32_t n_graphs = 100;  // pool of graphs per hypothesis
    std::uint32_t k_shot = 3;
    std::uint32_t n_positive = 1;
    std::uint32_t n_negative = 1;
    std::uint32_t noise_nodes_min = 4, noise_nodes_max = 10;
    std::uint32_t noise_edges_min = 8, noise_edges_max = 20;
    int prune_hops = 2;
    int max_retries = 100;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

// Planted pattern over local nodes 0 = head, 1 = tail, 2 = z1, 3 = z2.
struct Hypothesis {
    std::vector<ContextEdge> edges;  // 5 edges
};

struct SyntheticGraph {
    ContextGraph graph;
    EdgeMask truth;  // binary; all zeros for negatives
    bool positive = true;
};

struct SyntheticTask {
    Hypothesis hypothesis;
    std::vector<SyntheticGraph> supports;
    std::vector<SyntheticGraph> queries;  // positives first, then negatives
};

SyntheticTask generate_task(const SynthConfig& cfg, Rng& rng);
// Task `index` of the corpus seeded by cfg.rng_seed.
SyntheticTask generate_task(const SynthConfig& cfg, std::uint64_t index);
std::vector<SyntheticTask> generate_corpus(const SynthConfig& cfg, std::size_t n_tasks, int jobs = 1);

// Whether g contains the pattern with head and tail matched.
bool contains_hypothesis(const ContextGraph& g, const Hypothesis& h);
// Whether the edges selected by a binary mask form exactly the pattern.
bool mask_matches_hypothesis(const ContextGraph& g, const EdgeMask& mask, const Hypothesis& h);

// Intersection over union after binarizing pred at threshold; 1 when both
// sets are empty.
double iou(const EdgeMask& pred, const EdgeMask& truth, double threshold = 0.5);

// Mean binary cross entropy against a ground-truth mask.
double supervised_mask_loss(const EdgeMask& pred, const EdgeMask& truth);
ad::Var supervised_mask_loss(ad::Var pred, const EdgeMask& truth);

nlohmann::json graph_to_json(const ContextGraph& g);
ContextGraph graph_from_json(const nlohmann::json& j);
nlohmann::json task_to_json(const SyntheticTask& task);
SyntheticTask synthetic_task_from_json(const nlohmann::json& j);

void write_synthetic_task(const std::filesystem::path& path, const SyntheticTask& task);
SyntheticTask read_synthetic_task(const std::filesystem::path& path);

}  // namespace csr
