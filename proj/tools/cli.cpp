#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>

#include "csr/csr_gnn.hpp"
#include "csr/csr_opt.hpp"
#include "csr/errors.hpp"
#include "csr/eval.hpp"
#include "csr/kg.hpp"
#include "csr/parallel.hpp"
#include "csr/synthetic.hpp"
#include "csr/task.hpp"
#include "csr/train.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;

namespace csr::cli {
namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Paths {
    std::string config, out, kg, tasks, synthetic, checkpoint, resume, init, input;
    std::string relation_embeddings, entity_embeddings;
    std::string scorer = "opt";
    bool inductive = false;
    bool trace = false;
};

void ensure_out_dir(const fs::path& dir) {
    if (dir.empty()) throw UsageError("--out is required");
    std::error_code ec;
    if (fs::exists(dir, ec) && !fs::is_directory(dir, ec))
        throw std::runtime_error("output path is not a directory: " + dir.string());
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw UsageError(std::string("--") + what + " is required");
    if (!fs::exists(path)) throw std::runtime_error(std::string(what) + " path does not exist: " + path);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_manifest(const fs::path& out, const std::string& command, RunConfig& cfg, const Paths& paths,
                    nlohmann::json extra) {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config_json(cfg);
    nlohmann::json in;
    auto put = [&](const char* k, const std::string& v) {
        if (!v.empty()) in[k] = v;
    };
    put("kg", paths.kg);
    put("tasks", paths.tasks);
    put("synthetic", paths.synthetic);
    put("checkpoint", paths.checkpoint);
    put("resume", paths.resume);
    put("init", paths.init);
    put("input", paths.input);
    put("relation_embeddings", paths.relation_embeddings);
    put("entity_embeddings", paths.entity_embeddings);
    if (command == "evaluate") {
        in["scorer"] = paths.scorer;
        in["inductive"] = paths.inductive;
    }
    j["inputs"] = in;
    for (auto& [k, v] : extra.items()) j[k] = v;
    write_text(out / "manifest.json", j.dump(2) + "\n");
}

std::string task_file_name(std::size_t i) {
    std::ostringstream s;
    s << "task_" << std::setw(5) << std::setfill('0') << i << ".json";
    return s.str();
}

std::vector<SyntheticTask> read_corpus(const std::string& dir) {
    require_file(dir, "synthetic");
    std::vector<SyntheticTask> tasks;
    for (const auto& p : list_task_files(dir)) tasks.push_back(read_synthetic_task(p));
    if (tasks.empty()) throw std::runtime_error("no task files in " + dir);
    return tasks;
}

std::vector<FewShotTask> read_tasks(const std::string& path, const KnowledgeGraph& kg) {
    require_file(path, "tasks");
    std::vector<FewShotTask> tasks;
    for (const auto& p : list_task_files(path)) tasks.push_back(resolve_task(read_task_file(p), kg));
    if (tasks.empty()) throw std::runtime_error("no task files in " + path);
    return tasks;
}

std::uint32_t corpus_relations(const std::vector<SyntheticTask>& tasks, std::uint32_t configured) {
    std::uint32_t n = configured;
    auto see = [&](const ContextGraph& g) {
        for (const auto& e : g.edges) n = std::max(n, e.relation.value + 1);
    };
    for (const auto& t : tasks) {
        for (const auto& g : t.supports) see(g.graph);
        for (const auto& g : t.queries) see(g.graph);
    }
    return n;
}

// Mask-optimization model: untrained, optionally with external relation vectors.
ModelParams opt_model(RunConfig& cfg, std::uint32_t num_relations, const Paths& paths,
                      const std::vector<std::string>& relation_names) {
    ModelDims dims = cfg.dims;
    dims.num_relations = num_relations;
    std::optional<NamedVectors> vectors;
    if (!paths.relation_embeddings.empty()) {
        require_file(paths.relation_embeddings, "relation-embeddings");
        vectors = read_embedding_file(paths.relation_embeddings);
        if (!vectors->vectors.empty()) dims.relation_dim = static_cast<std::uint32_t>(vectors->vectors[0].size());
    }
    ModelParams p = init_model(dims, derive_seed(cfg.seed, "opt_model"), cfg.opt_encoder_gain);
    if (vectors) {
        assign_embeddings(p.relations.forward, relation_names, *vectors);
        assign_embeddings(p.relations.backward, relation_names, *vectors);
    }
    return p;
}

nlohmann::json mask_file(const ContextGraph& g, const EdgeMask& m, const std::string& label,
                         const std::function<std::string(RelationId)>& rel_name,
                         const std::function<std::string(std::uint32_t)>& node_name) {
    nlohmann::json j;
    j["label"] = label;
    j["graph"] = graph_to_json(g);
    j["mask"] = m.values();
    auto& rels = j["edge_relations"] = nlohmann::json::array();
    for (const auto& e : g.edges) rels.push_back(rel_name(e.relation));
    auto& nodes = j["node_names"] = nlohmann::json::array();
    for (std::uint32_t v = 0; v < g.num_nodes; ++v) nodes.push_back(node_name(v));
    return j;
}

std::string synthetic_node_name(const ContextGraph& g, std::uint32_t v) {
    if (v == g.head) return "head";
    if (v == g.tail) return "tail";
    return "n" + std::to_string(v);
}

// ---------------------------------------------------------------- commands

int cmd_synth_gen(RunConfig& cfg, const Paths& paths, std::ostream& out) {
    const fs::path dir = paths.out;
    ensure_out_dir(dir);
    auto tasks = generate_corpus(cfg.synth, cfg.n_tasks, cfg.jobs);
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto name = task_file_name(i);
        write_text(dir / name, task_to_json(tasks[i]).dump() + "\n");
        files.push_back(name);
    }
    write_manifest(dir, "synth-gen", cfg, paths, {{"files", files}, {"n_tasks", tasks.size()}});
    out << "wrote " << tasks.size() << " tasks to " << dir.string() << '\n';
    return 0;
}

int cmd_pretrain(RunConfig& cfg, const Paths& paths, std::ostream& out) {
    if (paths.kg.empty() == paths.synthetic.empty()) throw UsageError("pretrain needs exactly one of --kg or --synthetic");
    std::optional<KnowledgeGraph> kg;
    std::vector<SyntheticTask> corpus;
    std::uint32_t num_relations = 0;
    if (!paths.kg.empty()) {
        require_file(paths.kg, "kg");
        kg = load_kg(paths.kg);
        num_relations = static_cast<std::uint32_t>(kg->num_relations());
    } else {
        corpus = read_corpus(paths.synthetic);
        num_relations = corpus_relations(corpus, cfg.synth.n_relations);
    }
    if (!paths.resume.empty() && !paths.init.empty()) throw UsageError("--resume and --init are exclusive");
    if (!paths.resume.empty()) require_file(paths.resume, "resume");
    if (!paths.init.empty()) require_file(paths.init, "init");
    const fs::path dir = paths.out;
    ensure_out_dir(dir);

    TrainerState state;
    ModelParams params;
    if (!paths.resume.empty() || !paths.init.empty()) {
        // --init starts a fresh schedule from the stored weights.
        params = paths.init.empty() ? load_checkpoint(paths.resume, &state) : load_checkpoint(paths.init);
        if (params.dims.num_relations < num_relations)
            throw std::runtime_error("checkpoint has fewer relations than the training data");
    } else {
        ModelDims dims = cfg.dims;
        dims.num_relations = num_relations;
        params = init_model(dims, derive_seed(cfg.seed, "model"), cfg.init_gain);
        if (kg && !paths.relation_embeddings.empty()) {
            require_file(paths.relation_embeddings, "relation-embeddings");
            auto v = read_embedding_file(paths.relation_embeddings);
            assign_embeddings(params.relations.forward, kg->relation_names(), v);
            assign_embeddings(params.relations.backward, kg->relation_names(), v);
        }
        if (kg && !paths.entity_embeddings.empty()) {
            require_file(paths.entity_embeddings, "entity-embeddings");
            auto v = read_embedding_file(paths.entity_embeddings);
            params.entities = make_entity_table(kg->entity_names(), v, derive_seed(cfg.seed, "entities"));
            params.dims.entity_dim = static_cast<std::uint32_t>(params.entities->vectors.cols());
            // Decoder input width depends on the embedding width.
            ModelParams fresh = init_model(params.dims, derive_seed(cfg.seed, "model"), cfg.init_gain);
            fresh.relations = params.relations;
            fresh.entities = params.entities;
            params = std::move(fresh);
        }
    }

    ExampleSource source = kg ? kg_example_source(*kg, cfg.context, cfg.train, cfg.k_shot)
                              : synthetic_example_source(corpus, cfg.train, cfg.train.supervised_weight > 0);
    std::ofstream log(dir / "train_log.jsonl", paths.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot write " + (dir / "train_log.jsonl").string());
    TrainOptions opts;
    opts.log = &log;
    opts.checkpoint_dir = dir;
    if (!paths.resume.empty()) opts.resume = &state;
    auto result = train(params, source, cfg.train, opts);

    nlohmann::json extra;
    extra["start_epoch"] = paths.resume.empty() ? 0 : state.epoch;
    extra["end_epoch"] = result.state.epoch;
    extra["best_epoch"] = result.best_epoch;
    if (!result.history.empty()) extra["final_loss"] = result.history.back().loss.total;
    write_manifest(dir, "pretrain", cfg, paths, extra);
    out << "trained epochs " << extra["start_epoch"] << ".." << result.state.epoch << "; checkpoint "
        << (dir / "final.ckpt").string() << '\n';
    return 0;
}

int opt_run_synthetic(RunConfig& cfg, const Paths& paths, std::ostream& out) {
    auto corpus = read_corpus(paths.synthetic);
    const fs::path dir = paths.out;
    ensure_out_dir(dir);
    ensure_out_dir(dir / "masks");
    if (paths.trace) ensure_out_dir(dir / "traces");
    ModelParams params = opt_model(cfg, corpus_relations(corpus, cfg.synth.n_relations), paths, {});
    OptConfig ocfg = cfg.opt;
    ocfg.record_trace = paths.trace;

    struct Row {
        std::vector<double> support_iou;
        std::vector<double> scores, evidence_iou;
        std::vector<bool> labels;
        bool feasible = false;
    };
    std::vector<Row> rows(corpus.size());
    parallel_for(corpus.size(), cfg.jobs, [&](std::size_t i) {
        const auto& task = corpus[i];
        std::vector<ContextGraph> sup;
        for (const auto& g : task.supports) sup.push_back(g.graph);
        auto hyp = propose_hypothesis_opt(params, sup, ocfg);
        rows[i].feasible = hyp.feasible;
        const std::string stem = task_file_name(i).substr(0, 10);
        auto rel = [](RelationId r) { return "r" + std::to_string(r.value); };
        for (std::size_t s = 0; s < sup.size(); ++s) {
            rows[i].support_iou.push_back(iou(hyp.masks[s], task.supports[s].truth));
            auto node = [&](std::uint32_t v) { return synthetic_node_name(sup[s], v); };
            write_text(dir / "masks" / (stem + "_support_" + std::to_string(s) + ".json"),
                       mask_file(sup[s], hyp.masks[s], stem + " support " + std::to_string(s), rel, node).dump() + "\n");
        }
        for (std::size_t q = 0; q < task.queries.size(); ++q) {
            const auto& qg = task.queries[q];
            auto ev = propose_evidence_opt(params, hyp.embedding, qg.graph, ocfg);
            rows[i].scores.push_back(ev.score);
            rows[i].labels.push_back(qg.positive);
            rows[i].evidence_iou.push_back(qg.positive ? iou(ev.mask, qg.truth) : -1.0);
            auto node = [&](std::uint32_t v) { return synthetic_node_name(qg.graph, v); };
            write_text(dir / "masks" / (stem + "_query_" + std::to_string(q) + ".json"),
                       mask_file(qg.graph, ev.mask, stem + " query " + std::to_string(q), rel, node).dump() + "\n");
        }
        if (paths.trace) {
            std::ofstream tr(dir / "traces" / (stem + ".json"));
            write_opt_trace_json(tr, hyp);
        }
    });

    std::ostringstream scores;
    std::vector<double> pos, neg;
    double sup_iou = 0, ev_iou = 0;
    std::size_t n_sup = 0, n_ev = 0, feasible = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        feasible += rows[i].feasible;
        for (double v : rows[i].support_iou) {
            sup_iou += v;
            ++n_sup;
        }
        for (std::size_t q = 0; q < rows[i].scores.size(); ++q) {
            nlohmann::json line{{"task", i}, {"query", q}, {"label", rows[i].labels[q] ? 1 : 0}, {"score", rows[i].scores[q]}};
            if (rows[i].labels[q]) {
                line["evidence_iou"] = rows[i].evidence_iou[q];
                ev_iou += rows[i].evidence_iou[q];
                ++n_ev;
                pos.push_back(rows[i].scores[q]);
            } else {
                neg.push_back(rows[i].scores[q]);
            }
            scores << line.dump() << '\n';
        }
    }
    write_text(dir / "scores.jsonl", scores.str());
    nlohmann::json metrics;
    metrics["tasks"] = rows.size();
    metrics["support_iou"] = n_sup ? sup_iou / static_cast<double>(n_sup) : 0.0;
    metrics["evidence_iou"] = n_ev ? ev_iou / static_cast<double>(n_ev) : 0.0;
    metrics["feasible_tasks"] = feasible;
    if (!pos.empty() && !neg.empty()) metrics["auc"] = roc_auc(pos, neg);
    write_text(dir / "metrics.json", metrics.dump(2) + "\n");
    write_manifest(dir, "opt-run", cfg, paths, {});
    out << metrics.dump() << '\n';
    return 0;
}

int opt_run_kg(RunConfig& cfg, const Paths& paths, std::ostream& out) {
    require_file(paths.kg, "kg");
    auto kg = load_kg(paths.kg);
    auto tasks = read_tasks(paths.tasks, kg);
    const fs::path dir = paths.out;
    ensure_out_dir(dir);
    ensure_out_dir(dir / "masks");
    ModelParams params = opt_model(cfg, static_cast<std::uint32_t>(kg.num_relations()), paths, kg.relation_names());
    CsrOptScorer scorer(params, cfg.opt);
    EvalConfig ecfg{cfg.context, cfg.n_negatives, derive_seed(cfg.seed, "eval"), cfg.jobs};
    auto observer = [&](std::size_t i, const FewShotTask&, const TaskGraphs& graphs, const QueryScorer& qs) {
        const auto& hyp = dynamic_cast<const CsrOptQuery&>(qs).hypothesis();
        const std::string stem = task_file_name(i).substr(0, 10);
        for (std::size_t s = 0; s < graphs.support.size(); ++s) {
            const auto& g = graphs.support[s];
            auto rel = [&](RelationId r) { return kg.relation_name(r); };
            auto node = [&](std::uint32_t v) { return kg.entity_name(g.node_entities[v]); };
            write_text(dir / "masks" / (stem + "_support_" + std::to_string(s) + ".json"),
                       mask_file(g, hyp.masks[s], stem + " support " + std::to_string(s), rel, node).dump() + "\n");
        }
    };
    auto report = evaluate(scorer, tasks, kg, ecfg, observer);
    std::ostringstream scores;
    for (const auto& r : report.records)
        scores << nlohmann::json{{"task", r.task}, {"head", r.head}, {"positive", r.positive}, {"scores", r.scores}}.dump()
               << '\n';
    write_text(dir / "scores.jsonl", scores.str());
    write_text(dir / "report.json", report_json(report) + "\n");
    std::ostringstream table;
    write_report_table(table, report);
    write_text(dir / "report.txt", table.str());
    write_manifest(dir, "opt-run", cfg, paths, {});
    out << table.str();
    return 0;
}

int cmd_opt_run(RunConfig& cfg, const Paths& paths, std::ostream& out) {
    if (!paths.synthetic.empty()) {
        if (!paths.kg.empty()) throw UsageError("opt-run takes --synthetic or --kg/--tasks, not both");
        return opt_run_synthetic(cfg, paths, out);
    }
    if (paths.kg.empty() || paths.tasks.empty()) throw UsageError("opt-run needs --synthetic or both --kg and --tasks");
    return opt_run_kg(cfg, paths, out);
}

int cmd_evaluate(RunConfig& cfg, const Paths& paths, std::ostream& out, std::ostream& err) {
    require_file(paths.kg, "kg");
    require_file(paths.tasks, "tasks");
    if (paths.scorer == "gnn") require_file(paths.checkpoint, "checkpoint");
    if (paths.scorer != "gnn" && paths.scorer != "opt" && paths.scorer != "oracle" && paths.scorer != "random")
        throw UsageError("--scorer must be one of gnn, opt, oracle, random");
    KnowledgeGraph kg = load_kg(paths.kg);
    std::vector<TaskSpec> specs;
    for (const auto& p : list_task_files(paths.tasks)) specs.push_back(read_task_file(p));
    if (specs.empty()) throw std::runtime_error("no task files in " + paths.tasks);
    auto resolve_all = [&](const KnowledgeGraph& g) {
        std::vector<FewShotTask> ts;
        for (const auto& s : specs) ts.push_back(resolve_task(s, g));
        return ts;
    };
    std::vector<FewShotTask> tasks = resolve_all(kg);
    const fs::path dir = paths.out;
    ensure_out_dir(dir);
    nlohmann::json extra;
    if (paths.inductive) {
        auto split = build_inductive_split(kg, tasks);
        std::ostringstream bg, test;
        split.background.write_tsv(bg);
        for (const auto& t : split.test) test << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
        write_text(dir / "ind_bg.tsv", bg.str());
        write_text(dir / "ind_test.tsv", test.str());
        extra["ind_bg_triplets"] = split.background.num_triplets();
        extra["ind_test_triplets"] = split.test.size();
        kg = split.background.merge(split.test);
        tasks = resolve_all(kg);
    }

    std::optional<ModelParams> params;
    std::unique_ptr<Scorer> scorer;
    if (paths.scorer == "oracle") {
        std::set<std::pair<EntityId, EntityId>> truths;
        for (const auto& t : tasks)
            for (const auto& q : t.queries) truths.insert({q.head, q.positive});
        scorer = std::make_unique<OracleScorer>(std::move(truths));
    } else if (paths.scorer == "random") {
        scorer = std::make_unique<RandomScorer>(derive_seed(cfg.seed, "random_scorer"));
    } else if (paths.scorer == "opt") {
        params = opt_model(cfg, static_cast<std::uint32_t>(kg.num_relations()), paths, kg.relation_names());
        scorer = std::make_unique<CsrOptScorer>(*params, cfg.opt);
    } else {
        params = load_checkpoint(paths.checkpoint);
        if (params->dims.num_relations < kg.num_relations())
            throw std::runtime_error("checkpoint covers " + std::to_string(params->dims.num_relations) +
                                     " relations but the graph has " + std::to_string(kg.num_relations()));
        if (params->entities && params->entities->vectors.rows() < kg.num_entities())
            throw std::runtime_error("checkpoint entity table does not cover the graph");
        scorer = std::make_unique<CsrGnnScorer>(*params, cfg.train.proposal_iters);
    }
    EvalConfig ecfg{cfg.context, cfg.n_negatives, derive_seed(cfg.seed, "eval"), cfg.jobs};
    auto report = evaluate(*scorer, tasks, kg, ecfg);
    if (report.skipped_tasks) err << "warning: skipped " << report.skipped_tasks << " task(s)\n";
    write_text(dir / "report.json", report_json(report) + "\n");
    std::ostringstream table;
    write_report_table(table, report);
    write_text(dir / "report.txt", table.str());
    write_manifest(dir, "evaluate", cfg, paths, extra);
    out << table.str();
    return 0;
}

int cmd_dump_masks(RunConfig& cfg, const Paths& paths, std::ostream& out) {
    require_file(paths.input, "input");
    const fs::path dir = paths.out;
    ensure_out_dir(dir);
    std::vector<fs::path> files;
    if (fs::is_directory(paths.input)) {
        for (const auto& e : fs::directory_iterator(paths.input))
            if (e.path().extension() == ".json" && e.path().filename() != "manifest.json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(paths.input);
    }
    std::size_t shown = 0;
    for (const auto& f : files) {
        std::ifstream in(f);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(f.string() + ": " + e.what());
        }
        ContextGraph g = graph_from_json(j.at("graph"));
        auto mask = j.at("mask").get<std::vector<double>>();
        auto rels = j.value("edge_relations", std::vector<std::string>{});
        auto nodes = j.value("node_names", std::vector<std::string>{});
        if (mask.size() != g.num_edges()) throw ParseError(f.string() + ": mask length does not match graph");
        std::vector<std::size_t> order(g.num_edges());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return mask[a] > mask[b]; });
        std::ostringstream text;
        text << "# " << j.value("label", f.stem().string()) << '\n';
        auto node = [&](std::uint32_t v) { return v < nodes.size() ? nodes[v] : "n" + std::to_string(v); };
        for (auto e : order) {
            if (mask[e] < cfg.dump_threshold) continue;
            const auto& edge = g.edges[e];
            const std::string rel = e < rels.size() ? rels[e] : "r" + std::to_string(edge.relation.value);
            char w[32];
            std::snprintf(w, sizeof w, "%.6f", mask[e]);
            text << w << '\t' << rel << '\t' << node(edge.src) << " -> " << node(edge.dst) << '\n';
            ++shown;
        }
        write_text(dir / (f.stem().string() + ".txt"), text.str());
    }
    write_manifest(dir, "dump-masks", cfg, paths, {{"files", files.size()}});
    out << "dumped " << files.size() << " mask file(s), " << shown << " edge line(s)\n";
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"few-shot link prediction by connection subgraph reasoning"};
    app.require_subcommand(1);
    RunConfig cfg;
    Paths paths;
    auto keys = config_keys(cfg);
    std::map<std::string, std::string> flag_values;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", paths.config, "INI config file");
        sub->add_option("--out", paths.out, "output directory");
        for (const auto& k : keys)
            sub->add_option("--" + k.name, flag_values[k.name], k.help + " [" + k.section + "]")->type_name("VALUE");
    };
    auto* synth = app.add_subcommand("synth-gen", "generate a synthetic task corpus");
    add_common(synth);
    auto* pre = app.add_subcommand("pretrain", "train the encoder/decoder");
    add_common(pre);
    pre->add_option("--kg", paths.kg, "background graph TSV");
    pre->add_option("--synthetic", paths.synthetic, "synthetic corpus directory");
    pre->add_option("--resume", paths.resume, "checkpoint to resume from");
    pre->add_option("--init", paths.init, "checkpoint whose weights start a new run");
    pre->add_option("--relation-embeddings", paths.relation_embeddings, "initial relation vectors");
    pre->add_option("--entity-embeddings", paths.entity_embeddings, "entity vectors to attach");
    auto* opt = app.add_subcommand("opt-run", "mask optimization over tasks");
    add_common(opt);
    opt->add_option("--kg", paths.kg, "background graph TSV");
    opt->add_option("--tasks", paths.tasks, "task file or directory");
    opt->add_option("--synthetic", paths.synthetic, "synthetic corpus directory");
    opt->add_option("--relation-embeddings", paths.relation_embeddings, "relation vectors");
    opt->add_flag("--trace", paths.trace, "write per-step optimization traces");
    auto* ev = app.add_subcommand("evaluate", "rank metrics over task files");
    add_common(ev);
    ev->add_option("--kg", paths.kg, "background graph TSV");
    ev->add_option("--tasks", paths.tasks, "task file or directory");
    ev->add_option("--scorer", paths.scorer, "gnn, opt, oracle or random");
    ev->add_option("--checkpoint", paths.checkpoint, "model checkpoint (gnn scorer)");
    ev->add_option("--relation-embeddings", paths.relation_embeddings, "relation vectors (opt scorer)");
    ev->add_flag("--inductive", paths.inductive, "split off task entities and merge them back before scoring");
    auto* dump = app.add_subcommand("dump-masks", "human-readable listings of mask files");
    add_common(dump);
    dump->add_option("--input", paths.input, "mask file or directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) err << sub->help();
        return 1;
    }
    CLI::App* sub = app.get_subcommands().front();

    try {
        if (!paths.config.empty()) {
            if (!fs::exists(paths.config)) throw UsageError("config file does not exist: " + paths.config);
            apply_ini(cfg, paths.config);
        }
        for (const auto& k : keys)
            if (sub->count("--" + k.name)) k.set(flag_values[k.name]);
        finalize(cfg);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }

    try {
        const std::string name = sub->get_name();
        if (name == "synth-gen") return cmd_synth_gen(cfg, paths, out);
        if (name == "pretrain") return cmd_pretrain(cfg, paths, out);
        if (name == "opt-run") return cmd_opt_run(cfg, paths, out);
        if (name == "evaluate") return cmd_evaluate(cfg, paths, out, err);
        return cmd_dump_masks(cfg, paths, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace csr::cli
