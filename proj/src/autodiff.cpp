#include "csr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csr/errors.hpp"

namespace csr::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
    const auto& v = value();
    if (v.rows() != 1 || v.cols() != 1) throw ArgumentError("scalar() on non-scalar variable");
    return v[0];
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Matrix value, bool requires_grad) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::param(const Matrix& value, bool requires_grad) {
    Node n;
    n.external = &value;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::vector<int> inputs, BackwardFn backward) {
    Node n;
    n.owned = std::move(value);
    for (int id : inputs) n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Matrix& Tape::value(int id) const {
    const auto& n = nodes_[id];
    return n.external ? *n.external : n.owned;
}

Matrix& Tape::grad_buffer(int id) {
    auto& n = nodes_[id];
    if (n.grad.empty() && !n.grad_touched) {
        const auto& v = value(id);
        n.grad = Matrix(v.rows(), v.cols());
        n.grad_touched = true;
    }
    return n.grad;
}

const Matrix& Tape::grad(Var v) { return grad_buffer(v.id()); }

void Tape::backward(Var out) {
    const auto& v = value(out.id());
    if (v.rows() != 1 || v.cols() != 1)
        throw ArgumentError("backward: target must be a scalar, got " + std::to_string(v.rows()) + "x" +
                            std::to_string(v.cols()));
    if (!nodes_[out.id()].requires_grad) return;
    grad_buffer(out.id())[0] += 1.0;
    for (int i = out.id(); i >= 0; --i) {
        auto& n = nodes_[i];
        if (!n.requires_grad || !n.backward || !n.grad_touched) continue;
        n.backward(*this, i);
    }
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ArgumentError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
}

double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
    Tape& tape = *a.tape();
    Matrix out = csr::matmul(a.value(), b.value());
    const int ia = a.id(), ib = b.id();
    return tape.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        const Matrix& av = t.value(ia);
        const Matrix& bv = t.value(ib);
        const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
        if (t.requires_grad(ia)) {
            // dA = G * B^T, computed as row-axpy over a transposed copy of B.
            Matrix bt = transpose(bv);
            Matrix& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < n; ++i) {
                double* __restrict garow = ga.data() + i * k;
                const double* grow = g.data() + i * m;
                for (std::size_t j = 0; j < m; ++j) {
                    const double gv = grow[j];
                    if (gv == 0.0) continue;
                    const double* __restrict btrow = bt.data() + j * k;
                    for (std::size_t p = 0; p < k; ++p) garow[p] += gv * btrow[p];
                }
            }
        }
        if (t.requires_grad(ib)) {
            Matrix& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < n; ++i) {
                const double* arow = av.data() + i * k;
                const double* __restrict grow = g.data() + i * m;
                for (std::size_t p = 0; p < k; ++p) {
                    const double a_ip = arow[p];
                    if (a_ip == 0.0) continue;
                    double* __restrict gbrow = gb.data() + p * m;
                    for (std::size_t j = 0; j < m; ++j) gbrow[j] += a_ip * grow[j];
                }
            }
        }
    });
}

Var add(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "add");
    Matrix out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const int ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        for (int id : {ia, ib}) {
            if (!t.requires_grad(id)) continue;
            Matrix& gx = t.grad_buffer(id);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
    });
}

Var sub(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "sub");
    Matrix out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const int ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        if (t.requires_grad(ia)) {
            Matrix& gx = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.requires_grad(ib)) {
            Matrix& gx = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "mul");
    Matrix out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const int ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        if (t.requires_grad(ia)) {
            const Matrix& bv = t.value(ib);
            Matrix& gx = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
            const Matrix& av = t.value(ia);
            Matrix& gx = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double s) {
    Matrix out = a.value();
    for (auto& x : out.values()) x *= s;
    const int ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia, s](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        Matrix& gx = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
    });
}

Var add_scalar(Var a, double s) {
    Matrix out = a.value();
    for (auto& x : out.values()) x += s;
    const int ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        Matrix& gx = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var add_row(Var x, Var bias) {
    const auto& xv = x.value();
    const auto& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != xv.cols()) throw ArgumentError("add_row: bias shape mismatch");
    Matrix out = xv;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv[j];
    }
    const int ix = x.id(), ib = bias.id();
    return x.tape()->record(std::move(out), {ix, ib}, [ix, ib](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        if (t.requires_grad(ix)) {
            Matrix& gx = t.grad_buffer(ix);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.requires_grad(ib)) {
            Matrix& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                auto r = g.row(i);
                for (std::size_t j = 0; j < r.size(); ++j) gb[j] += r[j];
            }
        }
    });
}

Var sigmoid(Var x) {
    Matrix out = x.value();
    for (auto& v : out.values()) v = logistic(v);
    const int ix = x.id();
    return x.tape()->record(std::move(out), {ix}, [ix](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        const Matrix& y = t.value(self);
        Matrix& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

Var relu(Var x) {
    Matrix out = x.value();
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    const int ix = x.id();
    return x.tape()->record(std::move(out), {ix}, [ix](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        const Matrix& xv = t.value(ix);
        Matrix& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] > 0.0) gx[i] += g[i];
    });
}

Var clamp_max(Var x, double hi) {
    Matrix out = x.value();
    for (auto& v : out.values()) v = std::min(v, hi);
    const int ix = x.id();
    return x.tape()->record(std::move(out), {ix}, [ix, hi](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        const Matrix& xv = t.value(ix);
        Matrix& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] < hi) gx[i] += g[i];
    });
}

Var add_identity(Var x) {
    const auto& xv = x.value();
    if (xv.rows() != xv.cols()) throw ArgumentError("add_identity: matrix not square");
    Matrix out = xv;
    for (std::size_t i = 0; i < out.rows(); ++i) out(i, i) += 1.0;
    const int ix = x.id();
    return x.tape()->record(std::move(out), {ix}, [ix](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        Matrix& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ArgumentError("concat_cols: row count mismatch");
        offsets.push_back(cols);
        cols += p.cols();
        ids.push_back(p.id());
    }
    Matrix out(rows, cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].value();
        for (std::size_t i = 0; i < rows; ++i)
            std::copy(v.row(i).begin(), v.row(i).end(), out.row(i).begin() + offsets[k]);
    }
    return parts[0].tape()->record(std::move(out), ids, [ids, offsets](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.requires_grad(ids[k])) continue;
            Matrix& gx = t.grad_buffer(ids[k]);
            for (std::size_t i = 0; i < gx.rows(); ++i) {
                auto src = g.row(i).subspan(offsets[k], gx.cols());
                auto dst = gx.row(i);
                for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
            }
        }
    });
}

Var gather_rows(Var x, std::vector<std::uint32_t> rows) {
    const auto& xv = x.value();
    Matrix out(rows.size(), xv.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= xv.rows()) throw ArgumentError("gather_rows: row index out of range");
        std::copy(xv.row(rows[i]).begin(), xv.row(rows[i]).end(), out.row(i).begin());
    }
    const int ix = x.id();
    return x.tape()->record(std::move(out), {ix}, [ix, rows = std::move(rows)](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        Matrix& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto src = g.row(i);
            auto dst = gx.row(rows[i]);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    });
}

Var select_row(Var x, std::size_t row) {
    return gather_rows(x, {static_cast<std::uint32_t>(row)});
}

Var gather_entries(Var x, std::vector<std::pair<std::uint32_t, std::uint32_t>> entries) {
    const auto& xv = x.value();
    Matrix out(entries.size(), 1);
    for (std::size_t k = 0; k < entries.size(); ++k) {
        auto [r, c] = entries[k];
        if (r >= xv.rows() || c >= xv.cols()) throw ArgumentError("gather_entries: index out of range");
        out[k] = xv(r, c);
    }
    const int ix = x.id();
    return x.tape()->record(std::move(out), {ix}, [ix, entries = std::move(entries)](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        Matrix& gx = t.grad_buffer(ix);
        for (std::size_t k = 0; k < entries.size(); ++k) gx(entries[k].first, entries[k].second) += g[k];
    });
}

Var append_indicators(Var x, std::uint32_t head, std::uint32_t tail) {
    const auto& xv = x.value();
    const std::size_t d = xv.cols();
    Matrix out(xv.rows(), d + 2);
    for (std::size_t i = 0; i < xv.rows(); ++i) {
        std::copy(xv.row(i).begin(), xv.row(i).end(), out.row(i).begin());
        out(i, d) = i == head ? 1.0 : 0.0;
        out(i, d + 1) = i == tail ? 1.0 : 0.0;
    }
    const int ix = x.id();
    return x.tape()->record(std::move(out), {ix}, [ix, d](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        Matrix& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < gx.rows(); ++i)
            for (std::size_t j = 0; j < d; ++j) gx(i, j) += g(i, j);
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    const int ix = x.id();
    return x.tape()->record(Matrix(1, 1, s), {ix}, [ix](Tape& t, int self) {
        const double g = t.grad_buffer(self)[0];
        Matrix& gx = t.grad_buffer(ix);
        for (auto& v : gx.values()) v += g;
    });
}

Var mean(Var x) {
    const std::size_t n = x.value().size();
    if (n == 0) return x.tape()->constant(Matrix(1, 1, 0.0));
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var max_pool_rows(Var x) {
    const auto& xv = x.value();
    const std::size_t n = xv.rows(), d = xv.cols();
    if (n == 0) throw ArgumentError("max_pool_rows: empty input");
    Matrix out(1, d);
    std::vector<std::uint32_t> arg(d, 0);
    for (std::size_t j = 0; j < d; ++j) {
        double best = xv(0, j);
        for (std::size_t i = 1; i < n; ++i)
            if (xv(i, j) > best) {
                best = xv(i, j);
                arg[j] = static_cast<std::uint32_t>(i);
            }
        out[j] = best;
    }
    const int ix = x.id();
    return x.tape()->record(std::move(out), {ix}, [ix, arg = std::move(arg)](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        Matrix& gx = t.grad_buffer(ix);
        for (std::size_t j = 0; j < arg.size(); ++j) gx(arg[j], j) += g[j];
    });
}

Var mean_of(const std::vector<Var>& xs) {
    if (xs.empty()) throw ArgumentError("mean_of: no inputs");
    Matrix out = xs[0].value();
    std::vector<int> ids{xs[0].id()};
    for (std::size_t k = 1; k < xs.size(); ++k) {
        check_same_shape(out, xs[k].value(), "mean_of");
        const auto& v = xs[k].value();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
        ids.push_back(xs[k].id());
    }
    const double inv = 1.0 / static_cast<double>(xs.size());
    for (auto& v : out.values()) v *= inv;
    return xs[0].tape()->record(std::move(out), ids, [ids, inv](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        for (int id : ids) {
            if (!t.requires_grad(id)) continue;
            Matrix& gx = t.grad_buffer(id);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += inv * g[i];
        }
    });
}

Var min_of(const std::vector<Var>& xs) {
    if (xs.empty()) throw ArgumentError("min_of: no inputs");
    Matrix out = xs[0].value();
    std::vector<int> ids{xs[0].id()};
    std::vector<std::uint32_t> arg(out.size(), 0);
    for (std::size_t k = 1; k < xs.size(); ++k) {
        check_same_shape(out, xs[k].value(), "min_of");
        const auto& v = xs[k].value();
        for (std::size_t i = 0; i < out.size(); ++i)
            if (v[i] < out[i]) {
                out[i] = v[i];
                arg[i] = static_cast<std::uint32_t>(k);
            }
        ids.push_back(xs[k].id());
    }
    return xs[0].tape()->record(std::move(out), ids, [ids, arg = std::move(arg)](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const int id = ids[arg[i]];
            if (t.requires_grad(id)) t.grad_buffer(id)[i] += g[i];
        }
    });
}

Var dot(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "dot");
    const auto& av = a.value();
    const auto& bv = b.value();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
    const int ia = a.id(), ib = b.id();
    return a.tape()->record(Matrix(1, 1, s), {ia, ib}, [ia, ib](Tape& t, int self) {
        const double g = t.grad_buffer(self)[0];
        if (t.requires_grad(ia)) {
            const Matrix& bv = t.value(ib);
            Matrix& gx = t.grad_buffer(ia);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * bv[i];
        }
        if (t.requires_grad(ib)) {
            const Matrix& av = t.value(ia);
            Matrix& gx = t.grad_buffer(ib);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * av[i];
        }
    });
}

Var cosine(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "cosine");
    const auto& av = a.value();
    const auto& bv = b.value();
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        ab += av[i] * bv[i];
        aa += av[i] * av[i];
        bb += bv[i] * bv[i];
    }
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    const bool degenerate = na == 0.0 || nb == 0.0;
    const double c = degenerate ? 0.0 : ab / (na * nb);
    const int ia = a.id(), ib = b.id();
    return a.tape()->record(Matrix(1, 1, c), {ia, ib}, [=](Tape& t, int self) {
        if (degenerate) return;
        const double g = t.grad_buffer(self)[0];
        const Matrix& av = t.value(ia);
        const Matrix& bv = t.value(ib);
        const double inv = 1.0 / (na * nb);
        if (t.requires_grad(ia)) {
            Matrix& gx = t.grad_buffer(ia);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * (bv[i] * inv - c * av[i] / aa);
        }
        if (t.requires_grad(ib)) {
            Matrix& gx = t.grad_buffer(ib);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * (av[i] * inv - c * bv[i] / bb);
        }
    });
}

Var masked_mean_aggregate(Var states, Var mask, std::shared_ptr<const Incidence> inc) {
    const auto& s = states.value();
    const auto& m = mask.value();
    if (m.rows() != s.rows() || m.cols() != 1)
        throw ArgumentError("masked_mean_aggregate: mask length " + std::to_string(m.rows()) +
                            " does not match edge count " + std::to_string(s.rows()));
    const std::size_t d = s.cols();
    const std::size_t n = inc->num_nodes;
    Matrix out(n, d);
    std::vector<double> norm(n);
    for (std::size_t v = 0; v < n; ++v) {
        double z = 1.0;
        auto row = out.row(v);
        for (auto e : inc->edges_of_node[v]) {
            const double me = m[e];
            z += me;
            auto se = s.row(e);
            for (std::size_t j = 0; j < d; ++j) row[j] += me * se[j];
        }
        norm[v] = z;
        const double inv = 1.0 / z;
        for (std::size_t j = 0; j < d; ++j) row[j] *= inv;
    }
    const int is = states.id(), im = mask.id();
    return states.tape()->record(
        std::move(out), {is, im}, [is, im, inc, norm = std::move(norm)](Tape& t, int self) {
            const Matrix& g = t.grad_buffer(self);
            const Matrix& a = t.value(self);
            const Matrix& sv = t.value(is);
            const Matrix& mv = t.value(im);
            const bool want_s = t.requires_grad(is), want_m = t.requires_grad(im);
            Matrix* gs = want_s ? &t.grad_buffer(is) : nullptr;
            Matrix* gm = want_m ? &t.grad_buffer(im) : nullptr;
            const std::size_t d = sv.cols();
            for (std::size_t v = 0; v < inc->num_nodes; ++v) {
                const double inv = 1.0 / norm[v];
                auto gv = g.row(v);
                double ga = 0.0;  // g_v . a_v
                if (want_m)
                    for (std::size_t j = 0; j < d; ++j) ga += gv[j] * a(v, j);
                for (auto e : inc->edges_of_node[v]) {
                    if (want_s) {
                        const double w = mv[e] * inv;
                        auto dst = gs->row(e);
                        for (std::size_t j = 0; j < d; ++j) dst[j] += w * gv[j];
                    }
                    if (want_m) {
                        auto se = sv.row(e);
                        double gsv = 0.0;
                        for (std::size_t j = 0; j < d; ++j) gsv += gv[j] * se[j];
                        (*gm)[e] += (gsv - ga) * inv;
                    }
                }
            }
        });
}

Var soft_adjacency(Var mask, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& endpoints,
                   std::uint32_t num_nodes) {
    const auto& m = mask.value();
    if (m.rows() != endpoints.size() || m.cols() != 1)
        throw ArgumentError("soft_adjacency: mask length does not match edge count");
    Matrix out(num_nodes, num_nodes);
    // owner[u*n+v] = edge achieving the max, or -1.
    std::vector<int> owner(std::size_t{num_nodes} * num_nodes, -1);
    for (std::size_t e = 0; e < endpoints.size(); ++e) {
        auto [u, v] = endpoints[e];
        for (auto [a, b] : {std::pair{u, v}, std::pair{v, u}}) {
            auto idx = std::size_t{a} * num_nodes + b;
            if (owner[idx] < 0 || m[e] > out[idx]) {
                out[idx] = m[e];
                owner[idx] = static_cast<int>(e);
            }
        }
    }
    const int im = mask.id();
    return mask.tape()->record(std::move(out), {im}, [im, owner = std::move(owner)](Tape& t, int self) {
        const Matrix& g = t.grad_buffer(self);
        Matrix& gm = t.grad_buffer(im);
        for (std::size_t idx = 0; idx < owner.size(); ++idx)
            if (owner[idx] >= 0) gm[owner[idx]] += g[idx];
    });
}

Var binary_cross_entropy(Var p, const Matrix& target, double eps) {
    const auto& pv = p.value();
    check_same_shape(pv, target, "binary_cross_entropy");
    const std::size_t n = pv.size();
    if (n == 0) return p.tape()->constant(Matrix(1, 1, 0.0));
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double q = std::clamp(pv[i], eps, 1.0 - eps);
        s -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
    }
    s /= static_cast<double>(n);
    const int ip = p.id();
    return p.tape()->record(Matrix(1, 1, s), {ip}, [ip, target, eps](Tape& t, int self) {
        const double g = t.grad_buffer(self)[0];
        const Matrix& pv = t.value(ip);
        Matrix& gp = t.grad_buffer(ip);
        const double inv_n = 1.0 / static_cast<double>(pv.size());
        for (std::size_t i = 0; i < pv.size(); ++i) {
            const double q = pv[i];
            if (q < eps || q > 1.0 - eps) continue;
            gp[i] += g * inv_n * (-target[i] / q + (1.0 - target[i]) / (1.0 - q));
        }
    });
}

Var binary_entropy(Var p) {
    const auto& pv = p.value();
    const std::size_t n = pv.size();
    if (n == 0) return p.tape()->constant(Matrix(1, 1, 0.0));
    auto h = [](double q) {
        double r = 0.0;
        if (q > 0.0) r -= q * std::log(q);
        if (q < 1.0) r -= (1.0 - q) * std::log(1.0 - q);
        return r;
    };
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += h(pv[i]);
    s /= static_cast<double>(n);
    const int ip = p.id();
    return p.tape()->record(Matrix(1, 1, s), {ip}, [ip](Tape& t, int self) {
        const double g = t.grad_buffer(self)[0];
        const Matrix& pv = t.value(ip);
        Matrix& gp = t.grad_buffer(ip);
        const double inv_n = 1.0 / static_cast<double>(pv.size());
        constexpr double kEps = 1e-12;
        for (std::size_t i = 0; i < pv.size(); ++i) {
            const double q = std::clamp(pv[i], kEps, 1.0 - kEps);
            gp[i] += g * inv_n * std::log((1.0 - q) / q);
        }
    });
}

}  // namespace csr::ad
