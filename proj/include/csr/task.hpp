#pragma once
// Few-shot tasks: K support pairs of one relation plus queries with
// candidate tails, their JSON file form, and contextualization.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csr/context.hpp"
#include "csr/kg.hpp"

namespace csr {

struct NamedQuery {
    std::string head;
    std::string positive;
    std::vector<std::string> candidates;  // negatives; empty means "sample them"
};

// A task as written in a task file, by name.
struct TaskSpec {
    std::string relation;
    std::vector<std::pair<std::string, std::string>> support;
    std::vector<NamedQuery> queries;
};

struct Query {
    EntityId head;
    EntityId positive;
    std::vector<EntityId> candidates;
};

// A task resolved against a knowledge graph.
struct FewShotTask {
    std::string relation_name;
    std::optional<RelationId> relation;  // set when the relation exists in the graph
    std::vector<std::pair<EntityId, EntityId>> support;
    std::vector<Query> queries;
};

// Checks the disjointness and candidate invariants; throws ArgumentError.
void validate_task(const FewShotTask& task);

FewShotTask resolve_task(const TaskSpec& spec, const KnowledgeGraph& kg);
TaskSpec name_task(const FewShotTask& task, const KnowledgeGraph& kg);

TaskSpec read_task_file(const std::filesystem::path& path);
void write_task_file(const std::filesystem::path& path, const TaskSpec& task);
std::string task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const std::string& text);

// Task files in a directory (*.json except manifest.json), sorted by name;
// a plain file path yields itself.
std::vector<std::filesystem::path> list_task_files(const std::filesystem::path& path);

struct TaskGraphs {
    std::vector<ContextGraph> support;
    // query_graphs[q][0] is the positive tail; [1..] follow candidates.
    std::vector<std::vector<ContextGraph>> query_graphs;
};

// Builds one graph per support pair and per (query head, candidate) pair.
// Every triplet of the task relation is kept out of the contexts.
TaskGraphs contextualize_task(const KnowledgeGraph& kg, const FewShotTask& task,
                              const ContextConfig& cfg);

}  // namespace csr
