#pragma once
// Parameters of the mask-weighted message passing encoder and decoder,
// the relation/entity embedding tables, and their file formats.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "csr/matrix.hpp"

namespace csr {

struct ModelDims {
    std::uint32_t num_relations = 0;
    std::uint32_t relation_dim = 100;
    std::uint32_t hidden_dim = 128;
    std::uint32_t num_layers = 3;
    std::uint32_t classifier_hidden = 64;
    std::uint32_t entity_dim = 0;  // 0 when no entity table is attached

    // Node state width: hidden state plus the head/tail indicators.
    std::uint32_t node_state_dim() const { return hidden_dim + 2; }
    // max_pool || head || tail, plus head/tail entity vectors when enabled.
    std::uint32_t embedding_dim() const { return 3 * node_state_dim() + 2 * entity_dim; }

    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Two vectors per relation: one for edges used along their stored
// direction and one for the reverse. Context edges built from the graph
// are always stored forward, so the backward table is unused unless a
// caller supplies reversed edges.
struct RelationEmbeddingTable {
    Matrix forward;   // num_relations x relation_dim
    Matrix backward;  // num_relations x relation_dim
};

// Stack of edge-update layers. Layer i maps [s_src, s_dst, s_e] of width
// 2 * (d_in_i + 2) + d_in_i to hidden_dim.
struct MessagePassingParams {
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;  // 1 x hidden_dim each
};

struct DecoderParams {
    MessagePassingParams layers;
    Matrix classifier_w1;  // hidden_dim x classifier_hidden
    Matrix classifier_b1;  // 1 x classifier_hidden
    Matrix classifier_w2;  // classifier_hidden x 1
    Matrix classifier_b2;  // 1 x 1
};

// Per-entity vectors keyed by global entity id; not trained.
struct EntityEmbeddingTable {
    Matrix vectors;  // num_entities x entity_dim
};

struct ModelParams {
    ModelDims dims;
    RelationEmbeddingTable relations;
    MessagePassingParams encoder;
    DecoderParams decoder;
    std::optional<EntityEmbeddingTable> entities;

    // Views over every trainable matrix, in a fixed order.
    std::vector<Matrix*> trainable();
    std::vector<const Matrix*> trainable() const;

    friend bool operator==(const ModelParams&, const ModelParams&);
};

// Input width of message passing layer `layer` (0-based) for an initial
// edge embedding of width first_input_dim.
std::uint32_t layer_input_dim(const ModelDims& dims, std::uint32_t first_input_dim, std::uint32_t layer);

// Layer weights and biases ~ Uniform(-gain/sqrt(fan_in), gain/sqrt(fan_in)).
// Relation vectors are a one-hot lookup (fan_in = 1): Uniform(-1, 1).
ModelParams init_model(const ModelDims& dims, std::uint64_t seed, double gain = 1.0);

// Binary checkpoint: magic, version, dimensions, matrices as raw IEEE-754
// doubles (little endian), optional trainer state.
struct TrainerState {
    std::uint64_t epoch = 0;
    std::uint64_t step = 0;
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;
    friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const TrainerState* state = nullptr);
ModelParams load_checkpoint(const std::filesystem::path& path, TrainerState* state = nullptr);
void write_checkpoint(std::ostream& out, const ModelParams& params, const TrainerState* state);
ModelParams read_checkpoint(std::istream& in, TrainerState* state);

// Text embedding file: one vector per line, "name v1 v2 ...".
struct NamedVectors {
    std::vector<std::string> names;
    std::vector<std::vector<double>> vectors;
};
NamedVectors read_embedding_file(const std::filesystem::path& path);

// Copies rows for names that appear in both `names` and the file into
// `table`; returns the number of rows copied.
std::size_t assign_embeddings(Matrix& table, const std::vector<std::string>& names,
                              const NamedVectors& file);

// Builds an entity table for `names`; entities missing from the file get
// a seeded random vector of the file's dimension.
EntityEmbeddingTable make_entity_table(const std::vector<std::string>& names, const NamedVectors& file,
                                       std::uint64_t seed);

}  // namespace csr
