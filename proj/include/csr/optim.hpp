#pragma once
// First-order update rules shared by mask optimization and training.

#include <cmath>
#include <vector>

#include "csr/matrix.hpp"

namespace csr {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Decoupled weight decay Adam:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   x <- x - lr * (m_hat / (sqrt(v_hat) + eps) + wd * x)
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, double lr) {
        if (m_.empty()) {
            for (const Matrix* p : params) {
                m_.emplace_back(p->rows(), p->cols());
                v_.emplace_back(p->rows(), p->cols());
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Matrix& x = *params[k];
            const Matrix& g = grads[k];
            Matrix& m = m_[k];
            Matrix& v = v_[k];
            for (std::size_t i = 0; i < x.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m[i] / c1;
                const double vhat = v[i] / c2;
                x[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * x[i]);
            }
        }
    }

    std::uint64_t steps() const { return t_; }
    std::vector<Matrix>& first_moment() { return m_; }
    std::vector<Matrix>& second_moment() { return v_; }
    void restore(std::uint64_t t, std::vector<Matrix> m, std::vector<Matrix> v) {
        t_ = t;
        m_ = std::move(m);
        v_ = std::move(v);
    }

private:
    AdamWConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<Matrix> m_, v_;
};

// Gradient descent with optional heavy-ball momentum (0 = plain descent).
class MomentumDescent {
public:
    explicit MomentumDescent(double momentum = 0.0) : momentum_(momentum) {}

    void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, double lr) {
        if (velocity_.empty())
            for (const Matrix* p : params) velocity_.emplace_back(p->rows(), p->cols());
        for (std::size_t k = 0; k < params.size(); ++k) {
            Matrix& x = *params[k];
            const Matrix& g = grads[k];
            Matrix& vel = velocity_[k];
            for (std::size_t i = 0; i < x.size(); ++i) {
                vel[i] = momentum_ * vel[i] + g[i];
                x[i] -= lr * vel[i];
            }
        }
    }

private:
    double momentum_;
    std::vector<Matrix> velocity_;
};

}  // namespace csr
