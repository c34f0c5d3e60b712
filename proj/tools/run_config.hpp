#pragma once
// Resolved run configuration for the command-line tool: every module
// setting as a flat, uniquely named key grouped into INI sections.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csr/context.hpp"
#include "csr/csr_opt.hpp"
#include "csr/eval.hpp"
#include "csr/model.hpp"
#include "csr/synthetic.hpp"
#include "csr/train.hpp"

namespace csr::cli {

struct RunConfig {
    std::uint64_t seed = 0;
    int jobs = 1;
    std::size_t k_shot = 3;

    ContextConfig context;
    ModelDims dims;
    double init_gain = 3.0;
    OptConfig opt;
    std::string opt_optimizer = "adam";
    double opt_encoder_gain = 20.0;  // init gain of the untrained optimization encoder
    TrainConfig train;
    SynthConfig synth;
    std::size_t n_tasks = 50;
    std::size_t n_negatives = 50;
    double dump_threshold = 0.0;

    RunConfig();
};

// One settable key.
struct ConfigKey {
    std::string section;
    std::string name;
    std::string help;
    std::function<void(const std::string&)> set;
    std::function<nlohmann::json()> get;
};

std::vector<ConfigKey> config_keys(RunConfig& cfg);

// Applies `[section] key = value` entries; unknown keys are errors.
void apply_ini(RunConfig& cfg, const std::filesystem::path& path);

// Every key with its resolved value, by section.
nlohmann::json config_json(RunConfig& cfg);

// Pushes the shared seed and worker count into module configs.
void finalize(RunConfig& cfg);

}  // namespace csr::cli
