#pragma once
// Training loop for the encoder/decoder: self-supervised pretraining,
// optional finetuning on sampled tasks, and optional ground-truth mask
// supervision on synthetic corpora.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "csr/context.hpp"
#include "csr/csr_gnn.hpp"
#include "csr/model.hpp"
#include "csr/synthetic.hpp"

namespace csr {

struct TrainConfig {
    double lambda1 = 0.7;  // reconstruction weight
    double lambda2 = 0.1;  // contrast weight
    double gamma = 1.0;
    double learning_rate = 1e-5;
    int epochs = 5000;
    int batch_size = 8;
    double weight_decay = 0.0;
    double supervised_weight = 0.0;  // ground-truth mask BCE, synthetic only
    bool finetune = false;
    int proposal_iters = 2;
    WalkConfig walks;
    std::uint64_t rng_seed = 0;
    int checkpoint_every = 0;  // 0: only at the end
    int jobs = 1;

    void validate() const;
};

// One draw of training material. Any part may be absent.
struct TrainingExample {
    std::optional<PretrainSample> pretrain;
    std::vector<ContextGraph> supports;
    std::vector<EdgeMask> support_truth;  // empty when unsupervised
    std::vector<ContextGraph> positives;
    std::vector<EdgeMask> positive_truth;
    std::vector<ContextGraph> negatives;
};

using ExampleSource = std::function<TrainingExample(Rng&)>;

struct LossBreakdown {
    double total = 0.0;
    double recon = 0.0;
    double contrast = 0.0;
    double finetune = 0.0;
    double supervised = 0.0;
};

// total = lambda1 recon + lambda2 contrast + finetune margin
//         + supervised_weight * supervised BCE.
LossBreakdown example_losses(const ModelParams& params, const TrainingExample& ex, const TrainConfig& cfg);
// As above; `grads` receives d total / d params.trainable().
LossBreakdown example_gradients(const ModelParams& params, const TrainingExample& ex, const TrainConfig& cfg,
                                std::vector<Matrix>& grads);

struct EpochRecord {
    int epoch = 0;
    LossBreakdown loss;
    double learning_rate = 0.0;
};

struct TrainOptions {
    std::ostream* log = nullptr;  // one JSON object per epoch
    std::optional<std::filesystem::path> checkpoint_dir;
    const TrainerState* resume = nullptr;
    // Stop before this epoch (the schedule still spans cfg.epochs).
    std::optional<int> until_epoch;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    TrainerState state;
    int best_epoch = -1;
};

// lr at epoch e: learning_rate * (1 - e / epochs).
double scheduled_lr(const TrainConfig& cfg, int epoch);

TrainResult train(ModelParams& params, const ExampleSource& source, const TrainConfig& cfg,
                  const TrainOptions& opts = {});

// Pretraining pairs (and finetuning tasks when cfg.finetune) drawn from a
// background graph.
ExampleSource kg_example_source(const KnowledgeGraph& kg, const ContextConfig& ctx, const TrainConfig& cfg,
                                std::size_t k_shot = 3);

// Examples from a synthetic corpus; the contrast graph comes from another
// task. supervised controls whether ground-truth masks are attached.
ExampleSource synthetic_example_source(std::span<const SyntheticTask> tasks, const TrainConfig& cfg,
                                       bool supervised);

std::string epoch_record_json(const EpochRecord& r);

}  // namespace csr
