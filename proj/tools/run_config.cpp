#include "run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <set>

#include "csr/errors.hpp"
#include "csr/rng.hpp"

namespace csr::cli {

RunConfig::RunConfig() { dims.hidden_dim = 128; }

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* b = text.data();
    const char* e = b + text.size();
    std::from_chars_result r;
    if constexpr (std::is_floating_point_v<T>) {
        try {
            std::size_t used = 0;
            v = static_cast<T>(std::stod(text, &used));
            if (used != text.size()) throw std::invalid_argument(text);
            return v;
        } catch (const std::exception&) {
            throw ArgumentError("invalid value '" + text + "' for " + key);
        }
    } else {
        r = std::from_chars(b, e, v);
        if (r.ec != std::errc() || r.ptr != e) throw ArgumentError("invalid value '" + text + "' for " + key);
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
    if (text == "0" || text == "false" || text == "no" || text == "off") return false;
    throw ArgumentError("invalid value '" + text + "' for " + key + " (expected true/false)");
}

template <class T>
ConfigKey key(std::string section, std::string name, std::string help, T& ref) {
    ConfigKey k;
    k.section = std::move(section);
    k.name = name;
    k.help = std::move(help);
    if constexpr (std::is_same_v<T, bool>) {
        k.set = [&ref, name](const std::string& s) { ref = parse_bool(name, s); };
    } else if constexpr (std::is_same_v<T, std::string>) {
        k.set = [&ref](const std::string& s) { ref = s; };
    } else {
        k.set = [&ref, name](const std::string& s) { ref = parse_number<T>(name, s); };
    }
    k.get = [&ref] { return nlohmann::json(ref); };
    return k;
}

}  // namespace

std::vector<ConfigKey> config_keys(RunConfig& c) {
    return {
        key("global", "seed", "global seed; module seeds derive from it", c.seed),
        key("global", "jobs", "worker threads", c.jobs),
        key("global", "k_shot", "support triplets per task", c.k_shot),

        key("context", "k_hops", "enclosing subgraph hop bound", c.context.k_hops),
        key("context", "max_supplement_neighbors", "sampled one-hop neighbors per endpoint",
            c.context.max_supplement_neighbors),

        key("model", "relation_dim", "relation embedding width", c.dims.relation_dim),
        key("model", "hidden_dim", "edge state width", c.dims.hidden_dim),
        key("model", "num_layers", "message passing layers", c.dims.num_layers),
        key("model", "classifier_hidden", "decoder classifier width", c.dims.classifier_hidden),
        key("model", "init_gain", "scale of the layer weight init bound", c.init_gain),

        key("opt", "lambda_entropy", "entropy weight", c.opt.lambda_entropy),
        key("opt", "epsilon", "similarity slack", c.opt.epsilon),
        key("opt", "max_steps", "optimization steps", c.opt.max_steps),
        key("opt", "step_size", "logit step size", c.opt.step_size),
        key("opt", "bdmm_multiplier_rate", "multiplier ascent rate", c.opt.bdmm_multiplier_rate),
        key("opt", "momentum", "heavy-ball momentum for gd", c.opt.momentum),
        key("opt", "optimizer", "gd or adam", c.opt_optimizer),
        key("opt", "init_logit", "initial mask logit", c.opt.init_logit),
        key("opt", "init_noise", "uniform jitter on initial logits", c.opt.init_noise),
        key("opt", "constraint_margin", "similarity target as a multiple of epsilon", c.opt.constraint_margin),
        key("opt", "entropy_ramp", "fraction of steps over which the entropy weight ramps in", c.opt.entropy_ramp),
        key("opt", "encoder_gain", "init gain of the untrained encoder", c.opt_encoder_gain),

        key("train", "lambda1", "reconstruction weight", c.train.lambda1),
        key("train", "lambda2", "contrast weight", c.train.lambda2),
        key("train", "gamma", "contrast and ranking margin", c.train.gamma),
        key("train", "learning_rate", "initial learning rate", c.train.learning_rate),
        key("train", "epochs", "training epochs", c.train.epochs),
        key("train", "batch_size", "examples per epoch", c.train.batch_size),
        key("train", "weight_decay", "decoupled weight decay", c.train.weight_decay),
        key("train", "supervised_weight", "ground-truth mask loss weight (synthetic)", c.train.supervised_weight),
        key("train", "finetune", "add the ranking loss on sampled tasks", c.train.finetune),
        key("train", "proposal_iters", "hypothesis proposal iterations", c.train.proposal_iters),
        key("train", "min_walks", "pretraining mask walks (min)", c.train.walks.min_walks),
        key("train", "max_walks", "pretraining mask walks (max)", c.train.walks.max_walks),
        key("train", "max_walk_length", "pretraining mask walk length", c.train.walks.max_length),
        key("train", "checkpoint_every", "epochs between checkpoints (0: end only)", c.train.checkpoint_every),

        key("synth", "n_tasks", "tasks to generate", c.n_tasks),
        key("synth", "n_relations", "relation vocabulary", c.synth.n_relations),
        key("synth", "n_graphs", "graph pool per hypothesis", c.synth.n_graphs),
        key("synth", "n_positive", "positive queries per task", c.synth.n_positive),
        key("synth", "n_negative", "negative queries per task", c.synth.n_negative),
        key("synth", "noise_nodes_min", "extra nodes (min)", c.synth.noise_nodes_min),
        key("synth", "noise_nodes_max", "extra nodes (max)", c.synth.noise_nodes_max),
        key("synth", "noise_edges_min", "extra edges (min)", c.synth.noise_edges_min),
        key("synth", "noise_edges_max", "extra edges (max)", c.synth.noise_edges_max),
        key("synth", "prune_hops", "pruning hop bound", c.synth.prune_hops),

        key("eval", "n_negatives", "sampled negative candidates per query", c.n_negatives),
        key("dump", "threshold", "hide edges with weight below this", c.dump_threshold),
    };
}

void apply_ini(RunConfig& cfg, const std::filesystem::path& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ParseError("config " + path.string() + ": " + e.message(), e.line());
    }
    auto keys = config_keys(cfg);
    for (const auto& [section, entries] : tree) {
        if (entries.empty()) throw ParseError("config " + path.string() + ": key '" + section + "' outside a section");
        for (const auto& [name, value] : entries) {
            auto it = std::find_if(keys.begin(), keys.end(),
                                   [&](const ConfigKey& k) { return k.section == section && k.name == name; });
            if (it == keys.end())
                throw ArgumentError("config " + path.string() + ": unknown key [" + section + "] " + name);
            it->set(value.get_value<std::string>());
        }
    }
}

nlohmann::json config_json(RunConfig& cfg) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& k : config_keys(cfg)) j[k.section][k.name] = k.get();
    return j;
}

void finalize(RunConfig& c) {
    if (c.jobs < 1) throw ArgumentError("jobs must be >= 1");
    if (c.k_shot < 1) throw ArgumentError("k_shot must be >= 1");
    if (c.context.k_hops < 1) throw ArgumentError("k_hops must be >= 1");
    if (c.context.max_supplement_neighbors < 0) throw ArgumentError("max_supplement_neighbors must be >= 0");
    c.context.rng_seed = derive_seed(c.seed, "context");
    c.opt.optimizer = parse_mask_optimizer(c.opt_optimizer);
    c.opt.rng_seed = derive_seed(c.seed, "opt");
    c.opt.validate();
    c.train.rng_seed = derive_seed(c.seed, "train");
    c.train.jobs = c.jobs;
    c.train.validate();
    c.synth.rng_seed = derive_seed(c.seed, "synth");
    c.synth.k_shot = static_cast<std::uint32_t>(c.k_shot);
    c.synth.validate();
}

}  // namespace csr::cli
