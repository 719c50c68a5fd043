#include "lsub/matrix.hpp"

#include "lsub/error.hpp"

#include <algorithm>
#include <string>

namespace lsub {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ConfigError("matrix data size " + std::to_string(data_.size()) + " != " +
                          std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) throw InputError("row index out of range");
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

} // namespace lsub
