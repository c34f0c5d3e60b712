#pragma once
// Minimal reverse-mode differentiation over dense matrices.
//
// A Tape records every operation applied to its variables; backward()
// walks the record in reverse and accumulates adjoints into every node
// that requires a gradient. Only the operations used by the message
// passing encoder/decoder and the mask/pretraining losses are provided.

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "csr/matrix.hpp"

namespace csr::ad {

class Tape;

class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    double scalar() const;  // value of a 1x1 variable
    bool requires_grad() const;

    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Owned leaf value.
    Var leaf(Matrix value, bool requires_grad = false);
    Var constant(Matrix value) { return leaf(std::move(value), false); }
    // Non-owning leaf; `value` must outlive the tape.
    Var param(const Matrix& value, bool requires_grad);

    // Records the result of an operation; `backward` is invoked only when
    // some input requires a gradient.
    Var record(Matrix value, std::vector<int> inputs, BackwardFn backward);

    // Seeds d(out)/d(out) = 1 for a 1x1 variable and back-propagates.
    void backward(Var out);

    const Matrix& value(int id) const;
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }
    // Gradient accumulated for a node; a zero matrix when none arrived.
    const Matrix& grad(Var v);
    // Adjoint buffer for accumulation from inside backward functions.
    Matrix& grad_buffer(int id);
    bool has_grad(int id) const { return !nodes_[id].grad.empty() || nodes_[id].grad_touched; }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix owned;
        const Matrix* external = nullptr;
        Matrix grad;
        bool grad_touched = false;
        bool requires_grad = false;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

// Precomputed per-node incident edge lists of a context graph.
struct Incidence {
    std::uint32_t num_nodes = 0;
    std::vector<std::vector<std::uint32_t>> edges_of_node;
};

// ---- elementwise / linear algebra ----
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);            // elementwise, same shape
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var add_row(Var x, Var bias);     // bias is 1 x cols, broadcast over rows
Var sigmoid(Var x);
Var relu(Var x);
Var clamp_max(Var x, double hi);  // min(x, hi)
Var add_identity(Var x);          // x + I for square x

// ---- shape ----
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(Var x, std::vector<std::uint32_t> rows);
Var select_row(Var x, std::size_t row);
// Selects x(r_k, c_k) into a column vector.
Var gather_entries(Var x, std::vector<std::pair<std::uint32_t, std::uint32_t>> entries);
// Appends two indicator columns: [x | 1(row == head) | 1(row == tail)].
Var append_indicators(Var x, std::uint32_t head, std::uint32_t tail);

// ---- reductions ----
Var sum(Var x);                       // 1x1
Var mean(Var x);                      // 1x1
Var max_pool_rows(Var x);             // 1 x cols, columnwise max
Var mean_of(const std::vector<Var>& xs);
Var min_of(const std::vector<Var>& xs);  // elementwise minimum
Var dot(Var a, Var b);                // 1x1
Var cosine(Var a, Var b);             // 1x1, 0 when either norm is zero

// ---- graph specific ----
// a_v = (sum_{e in N(v)} m_e * s_e) / (1 + sum_{e in N(v)} m_e).
// states: E x d, mask: E x 1.
Var masked_mean_aggregate(Var states, Var mask, std::shared_ptr<const Incidence> inc);
// Soft symmetric adjacency: A[u][v] = max over edges between u and v of
// m_e.
Var soft_adjacency(Var mask, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& endpoints,
                   std::uint32_t num_nodes);

// ---- losses ----
// Mean binary cross entropy of predictions p against targets y, with p
// clamped to [eps, 1 - eps].
Var binary_cross_entropy(Var p, const Matrix& target, double eps = 1e-7);
// Mean elementwise binary entropy, natural log, 0 ln 0 := 0.
Var binary_entropy(Var p);

}  // namespace csr::ad
