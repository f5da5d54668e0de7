#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace cimsim {

// Integer payloads are carried as 64-bit throughout; quantized codes are
// small (<= 16 bit) but partial-sum accumulation and shift-add scaling are
// not, and a single wide type keeps Eigen products overflow-free.
using MatI = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using VecI = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;
using MatD = Eigen::MatrixXd;
using VecD = Eigen::VectorXd;
using ArrD = Eigen::ArrayXd;
using MatU8 = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Flat row-major tensor with an explicit shape. Activations flow through
// the layer graph in this form; 2-D views map onto Eigen matrices.
struct Tensor {
    VecD data;
    std::vector<int> shape;

    Tensor() = default;
    Tensor(VecD d, std::vector<int> s) : data(std::move(d)), shape(std::move(s)) {}

    static Tensor from_matrix(const MatD& m) {
        Tensor t;
        t.shape = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
        t.data.resize(m.size());
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) t.data[r * m.cols() + c] = m(r, c);
        return t;
    }

    long numel() const {
        return std::accumulate(shape.begin(), shape.end(), 1L,
                               [](long a, int b) { return a * static_cast<long>(b); });
    }

    // Row-major view as rows x cols; the product of dims must match.
    MatD as_matrix(int rows, int cols) const {
        MatD m(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m(r, c) = data[static_cast<long>(r) * cols + c];
        return m;
    }
};

inline std::string shape_to_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace cimsim
