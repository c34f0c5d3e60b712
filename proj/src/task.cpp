#include "csr/task.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csr/errors.hpp"

namespace csr {

using nlohmann::json;

void validate_task(const FewShotTask& task) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> support;
    for (const auto& [h, t] : task.support) support.insert({h.value, t.value});
    for (const auto& q : task.queries) {
        if (support.count({q.head.value, q.positive.value}))
            throw ArgumentError("task " + task.relation_name + ": query overlaps support");
        for (auto c : q.candidates)
            if (c == q.positive)
                throw ArgumentError("task " + task.relation_name + ": candidate equals positive");
    }
}

FewShotTask resolve_task(const TaskSpec& spec, const KnowledgeGraph& kg) {
    auto entity = [&](const std::string& name) {
        auto id = kg.find_entity(name);
        if (!id) throw ArgumentError("task " + spec.relation + ": unknown entity '" + name + "'");
        return *id;
    };
    FewShotTask task;
    task.relation_name = spec.relation;
    task.relation = kg.find_relation(spec.relation);
    for (const auto& [h, t] : spec.support) task.support.emplace_back(entity(h), entity(t));
    for (const auto& q : spec.queries) {
        Query rq{entity(q.head), entity(q.positive), {}};
        for (const auto& c : q.candidates) rq.candidates.push_back(entity(c));
        task.queries.push_back(std::move(rq));
    }
    validate_task(task);
    return task;
}

TaskSpec name_task(const FewShotTask& task, const KnowledgeGraph& kg) {
    TaskSpec spec;
    spec.relation = task.relation_name;
    for (const auto& [h, t] : task.support)
        spec.support.emplace_back(kg.entity_name(h), kg.entity_name(t));
    for (const auto& q : task.queries) {
        NamedQuery nq{kg.entity_name(q.head), kg.entity_name(q.positive), {}};
        for (auto c : q.candidates) nq.candidates.push_back(kg.entity_name(c));
        spec.queries.push_back(std::move(nq));
    }
    return spec;
}

std::string task_to_json(const TaskSpec& task) {
    json j;
    j["relation"] = task.relation;
    j["support"] = json::array();
    for (const auto& [h, t] : task.support) j["support"].push_back({h, task.relation, t});
    j["queries"] = json::array();
    for (const auto& q : task.queries)
        j["queries"].push_back({{"head", q.head}, {"positive", q.positive}, {"candidates", q.candidates}});
    return j.dump(1) + "\n";
}

TaskSpec task_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("task file: ") + e.what());
    }
    try {
        TaskSpec spec;
        spec.relation = j.at("relation").get<std::string>();
        for (const auto& s : j.at("support")) {
            if (s.size() == 3) {
                if (s[1].get<std::string>() != spec.relation)
                    throw ParseError("task file: support triplet relation differs from task relation");
                spec.support.emplace_back(s[0].get<std::string>(), s[2].get<std::string>());
            } else if (s.size() == 2) {
                spec.support.emplace_back(s[0].get<std::string>(), s[1].get<std::string>());
            } else {
                throw ParseError("task file: support entry must be [head, relation, tail]");
            }
        }
        for (const auto& q : j.at("queries")) {
            NamedQuery nq;
            nq.head = q.at("head").get<std::string>();
            nq.positive = q.at("positive").get<std::string>();
            if (q.contains("candidates")) nq.candidates = q["candidates"].get<std::vector<std::string>>();
            spec.queries.push_back(std::move(nq));
        }
        return spec;
    } catch (const json::exception& e) {
        throw ParseError(std::string("task file: ") + e.what());
    }
}

TaskSpec read_task_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open task file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return task_from_json(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_task_file(const std::filesystem::path& path, const TaskSpec& task) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write task file: " + path.string());
    out << task_to_json(task);
}

std::vector<std::filesystem::path> list_task_files(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw std::runtime_error("no such task path: " + path.string());
    if (!fs::is_directory(path)) return {path};
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        if (entry.path().filename() == "manifest.json") continue;
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

TaskGraphs contextualize_task(const KnowledgeGraph& kg, const FewShotTask& task,
                              const ContextConfig& cfg) {
    LeakExclusion exclude{task.relation, true};
    TaskGraphs out;
    for (const auto& [h, t] : task.support) out.support.push_back(contextualize(kg, h, t, cfg, exclude));
    for (const auto& q : task.queries) {
        std::vector<ContextGraph> graphs;
        graphs.push_back(contextualize(kg, q.head, q.positive, cfg, exclude));
        for (auto c : q.candidates) graphs.push_back(contextualize(kg, q.head, c, cfg, exclude));
        out.query_graphs.push_back(std::move(graphs));
    }
    return out;
}

}  // namespace csr
