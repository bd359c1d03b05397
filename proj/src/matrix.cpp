#include "decdec/matrix.hpp"

#include "decdec/errors.hpp"

#include <cmath>
#include <string>

namespace decdec {

Matrix::Matrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_,
            "matrix payload has " + std::to_string(data_.size()) + " values, expected " +
                std::to_string(rows_ * cols_));
}

std::vector<float> Matrix::column(std::size_t c) const {
    std::vector<float> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        out[r] = (*this)(r, c);
    }
    return out;
}

bool all_finite(std::span<const float> values) {
    for (float v : values) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

Matrix row_matrix(std::span<const float> values) {
    return Matrix(1, values.size(), std::vector<float>(values.begin(), values.end()));
}

} // namespace decdec
