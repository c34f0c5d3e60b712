#pragma once
// Dense row-major matrix of doubles.

#include <cstddef>
#include <span>
#include <vector>

namespace csr {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Matrix column(std::vector<double> values) {
        auto n = values.size();
        return Matrix(n, 1, std::move(values));
    }
    static Matrix row_vector(std::vector<double> values) {
        auto n = values.size();
        return Matrix(1, n, std::move(values));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    const std::vector<double>& values() const { return data_; }
    std::vector<double>& values() { return data_; }

    void fill(double v);
    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C = A * B. Each output entry accumulates over the inner index in
// ascending order, so results do not depend on the row count.
void matmul(const Matrix& a, const Matrix& b, Matrix& c);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

double l2_norm(std::span<const double> v);

}  // namespace csr
