#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace olm {

// Dense row-major matrix of doubles. Just enough surface for the feature
// transform and the tree learner.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    // Rows selected by index, in the given order.
    Matrix take_rows(std::span<const std::size_t> indices) const;

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

} // namespace olm
