#include "csr/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "csr/errors.hpp"
#include "csr/rng.hpp"

namespace csr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

namespace {

constexpr char kMagic[8] = {'C', 'S', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = rng.uniform(-bound, bound);
    return m;
}

MessagePassingParams init_layers(const ModelDims& dims, std::uint32_t first_input_dim, double gain, Rng& rng) {
    MessagePassingParams p;
    for (std::uint32_t l = 0; l < dims.num_layers; ++l) {
        const auto fan_in = layer_input_dim(dims, first_input_dim, l);
        const double bound = gain / std::sqrt(static_cast<double>(fan_in));
        p.weights.push_back(uniform_matrix(fan_in, dims.hidden_dim, bound, rng));
        p.biases.push_back(uniform_matrix(1, dims.hidden_dim, bound, rng));
    }
    return p;
}

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ParseError("checkpoint: unexpected end of file");
    return v;
}

void put_matrix(std::ostream& out, const Matrix& m) {
    put<std::uint64_t>(out, m.rows());
    put<std::uint64_t>(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix get_matrix(std::istream& in) {
    auto rows = get<std::uint64_t>(in);
    auto cols = get<std::uint64_t>(in);
    if (rows > (1u << 28) || cols > (1u << 28) || rows * cols > (1ull << 32))
        throw ParseError("checkpoint: implausible matrix shape");
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw ParseError("checkpoint: truncated matrix data");
    return m;
}

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols)
        throw ParseError(std::string("checkpoint: shape mismatch for ") + what);
}

}  // namespace

std::uint32_t layer_input_dim(const ModelDims& dims, std::uint32_t first_input_dim, std::uint32_t layer) {
    const std::uint32_t d_in = layer == 0 ? first_input_dim : dims.hidden_dim;
    return 2 * (d_in + 2) + d_in;
}

std::vector<Matrix*> ModelParams::trainable() {
    std::vector<Matrix*> out{&relations.forward, &relations.backward};
    for (std::size_t l = 0; l < encoder.weights.size(); ++l) {
        out.push_back(&encoder.weights[l]);
        out.push_back(&encoder.biases[l]);
    }
    for (std::size_t l = 0; l < decoder.layers.weights.size(); ++l) {
        out.push_back(&decoder.layers.weights[l]);
        out.push_back(&decoder.layers.biases[l]);
    }
    out.push_back(&decoder.classifier_w1);
    out.push_back(&decoder.classifier_b1);
    out.push_back(&decoder.classifier_w2);
    out.push_back(&decoder.classifier_b2);
    return out;
}

std::vector<const Matrix*> ModelParams::trainable() const {
    auto mut = const_cast<ModelParams*>(this)->trainable();
    return {mut.begin(), mut.end()};
}

bool operator==(const ModelParams& a, const ModelParams& b) {
    if (!(a.dims == b.dims)) return false;
    auto ta = a.trainable();
    auto tb = b.trainable();
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i)
        if (!(*ta[i] == *tb[i])) return false;
    if (a.entities.has_value() != b.entities.has_value()) return false;
    return !a.entities || a.entities->vectors == b.entities->vectors;
}

ModelParams init_model(const ModelDims& dims, std::uint64_t seed, double gain) {
    if (dims.hidden_dim == 0 || dims.relation_dim == 0 || dims.num_layers == 0)
        throw ArgumentError("init_model: dimensions must be positive");
    if (!(gain > 0.0)) throw ArgumentError("init_model: gain must be positive");
    Rng rng(derive_seed(seed, "init_model"));
    ModelParams p;
    p.dims = dims;
    const double rel_bound = 1.0;
    p.relations.forward = uniform_matrix(dims.num_relations, dims.relation_dim, rel_bound, rng);
    p.relations.backward = uniform_matrix(dims.num_relations, dims.relation_dim, rel_bound, rng);
    p.encoder = init_layers(dims, dims.relation_dim, gain, rng);
    p.decoder.layers = init_layers(dims, dims.relation_dim + dims.embedding_dim(), gain, rng);
    const double b1 = 1.0 / std::sqrt(static_cast<double>(dims.hidden_dim));
    p.decoder.classifier_w1 = uniform_matrix(dims.hidden_dim, dims.classifier_hidden, b1, rng);
    p.decoder.classifier_b1 = uniform_matrix(1, dims.classifier_hidden, b1, rng);
    const double b2 = 1.0 / std::sqrt(static_cast<double>(dims.classifier_hidden));
    p.decoder.classifier_w2 = uniform_matrix(dims.classifier_hidden, 1, b2, rng);
    p.decoder.classifier_b2 = uniform_matrix(1, 1, b2, rng);
    return p;
}

void write_checkpoint(std::ostream& out, const ModelParams& params, const TrainerState* state) {
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    const auto& d = params.dims;
    for (auto v : {d.num_relations, d.relation_dim, d.hidden_dim, d.num_layers, d.classifier_hidden,
                   d.entity_dim})
        put<std::uint32_t>(out, v);
    for (const Matrix* m : params.trainable()) put_matrix(out, *m);
    put<std::uint8_t>(out, params.entities ? 1 : 0);
    if (params.entities) put_matrix(out, params.entities->vectors);
    put<std::uint8_t>(out, state ? 1 : 0);
    if (state) {
        put<std::uint64_t>(out, state->epoch);
        put<std::uint64_t>(out, state->step);
        put<std::uint64_t>(out, state->first_moment.size());
        for (const auto& m : state->first_moment) put_matrix(out, m);
        for (const auto& m : state->second_moment) put_matrix(out, m);
    }
}

ModelParams read_checkpoint(std::istream& in, TrainerState* state) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ParseError("checkpoint: bad magic");
    auto version = get<std::uint32_t>(in);
    if (version != kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    ModelDims d;
    d.num_relations = get<std::uint32_t>(in);
    d.relation_dim = get<std::uint32_t>(in);
    d.hidden_dim = get<std::uint32_t>(in);
    d.num_layers = get<std::uint32_t>(in);
    d.classifier_hidden = get<std::uint32_t>(in);
    d.entity_dim = get<std::uint32_t>(in);
    if (d.num_layers == 0 || d.num_layers > 64) throw ParseError("checkpoint: implausible layer count");

    ModelParams p;
    p.dims = d;
    p.encoder.weights.resize(d.num_layers);
    p.encoder.biases.resize(d.num_layers);
    p.decoder.layers.weights.resize(d.num_layers);
    p.decoder.layers.biases.resize(d.num_layers);
    for (Matrix* m : p.trainable()) *m = get_matrix(in);

    check_shape(p.relations.forward, d.num_relations, d.relation_dim, "relation table");
    check_shape(p.relations.backward, d.num_relations, d.relation_dim, "relation table");
    for (std::uint32_t l = 0; l < d.num_layers; ++l) {
        check_shape(p.encoder.weights[l], layer_input_dim(d, d.relation_dim, l), d.hidden_dim, "encoder");
        check_shape(p.decoder.layers.weights[l], layer_input_dim(d, d.relation_dim + d.embedding_dim(), l),
                    d.hidden_dim, "decoder");
    }
    check_shape(p.decoder.classifier_w1, d.hidden_dim, d.classifier_hidden, "classifier");
    check_shape(p.decoder.classifier_w2, d.classifier_hidden, 1, "classifier");

    if (get<std::uint8_t>(in)) {
        p.entities = EntityEmbeddingTable{get_matrix(in)};
        if (p.entities->vectors.cols() != d.entity_dim) throw ParseError("checkpoint: entity dim mismatch");
    } else if (d.entity_dim != 0) {
        throw ParseError("checkpoint: entity dim set without entity table");
    }
    const bool has_state = get<std::uint8_t>(in) != 0;
    if (has_state && state) {
        state->epoch = get<std::uint64_t>(in);
        state->step = get<std::uint64_t>(in);
        auto n = get<std::uint64_t>(in);
        if (n > 4096) throw ParseError("checkpoint: implausible trainer state");
        state->first_moment.clear();
        state->second_moment.clear();
        for (std::uint64_t i = 0; i < n; ++i) state->first_moment.push_back(get_matrix(in));
        for (std::uint64_t i = 0; i < n; ++i) state->second_moment.push_back(get_matrix(in));
    } else if (state) {
        *state = TrainerState{};
    }
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const TrainerState* state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    write_checkpoint(out, params, state);
    if (!out) throw std::runtime_error("error writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path, TrainerState* state) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    return read_checkpoint(in, state);
}

NamedVectors read_embedding_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path.string());
    NamedVectors out;
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string name;
        ss >> name;
        std::vector<double> v;
        std::string tok;
        while (ss >> tok) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ParseError(path.string() + ": bad number '" + tok + "'", lineno);
            }
        }
        if (v.empty()) throw ParseError(path.string() + ": line has no values", lineno);
        if (dim == 0) dim = v.size();
        if (v.size() != dim) throw ParseError(path.string() + ": inconsistent vector dimension", lineno);
        out.names.push_back(std::move(name));
        out.vectors.push_back(std::move(v));
    }
    return out;
}

std::size_t assign_embeddings(Matrix& table, const std::vector<std::string>& names, const NamedVectors& file) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < file.names.size(); ++i) index.emplace(file.names[i], i);
    std::size_t copied = 0;
    for (std::size_t r = 0; r < names.size() && r < table.rows(); ++r) {
        auto it = index.find(names[r]);
        if (it == index.end()) continue;
        const auto& v = file.vectors[it->second];
        if (v.size() != table.cols()) throw ArgumentError("embedding dimension does not match table");
        std::copy(v.begin(), v.end(), table.row(r).begin());
        ++copied;
    }
    return copied;
}

EntityEmbeddingTable make_entity_table(const std::vector<std::string>& names, const NamedVectors& file,
                                       std::uint64_t seed) {
    if (file.vectors.empty()) throw ArgumentError("entity embedding file is empty");
    const std::size_t dim = file.vectors[0].size();
    EntityEmbeddingTable table{Matrix(names.size(), dim)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::size_t r = 0; r < names.size(); ++r) {
        Rng rng(derive_seed(seed, names[r]));
        for (auto& v : table.vectors.row(r)) v = rng.uniform(-bound, bound);
    }
    assign_embeddings(table.vectors, names, file);
    return table;
}

}  // namespace csr
