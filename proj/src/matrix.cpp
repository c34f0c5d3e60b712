#include "csr/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "csr/errors.hpp"

namespace csr {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) throw ArgumentError("Matrix: value count does not match shape");
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void matmul(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.cols() != b.rows())
        throw ArgumentError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + ")");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (c.rows() != n || c.cols() != m) c = Matrix(n, m);
    else c.fill(0.0);
    const double* __restrict bp = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        double* __restrict crow = c.data() + i * m;
        const double* arow = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* __restrict brow = bp + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c;
    matmul(a, b, c);
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace csr
