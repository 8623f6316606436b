#include "olm/matrix.hpp"

#include "olm/errors.hpp"

namespace olm {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols_) throw ValidationError("ragged matrix rows");
        for (std::size_t c = 0; c < m.cols_; ++c) m.at(r, c) = rows[r][c];
    }
    return m;
}

Matrix Matrix::take_rows(std::span<const std::size_t> indices) const {
    Matrix m(indices.size(), cols_);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= rows_) throw ValidationError("row index out of range");
        for (std::size_t c = 0; c < cols_; ++c) m.at(r, c) = at(indices[r], c);
    }
    return m;
}

} // namespace olm
