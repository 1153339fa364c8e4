#include "qtrk/reference.hpp"

namespace qtrk {

Eigen::MatrixXd unfold(const DenseTensor3& t) {
    Eigen::MatrixXd mat(t.rows() * t.depth(), t.cols());
    for (index_t h = 0; h < t.depth(); ++h) {
        for (index_t i = 0; i < t.rows(); ++i) {
            for (index_t j = 0; j < t.cols(); ++j) {
                mat(h * t.rows() + i, j) = t(i, j, h);
            }
        }
    }
    return mat;
}

DenseTensor3 fold(const Eigen::MatrixXd& mat, index_t depth) {
    if (depth < 1 || mat.rows() % depth != 0) {
        throw shape_error("fold: matrix rows " + std::to_string(mat.rows()) +
                          " not divisible by depth " + std::to_string(depth));
    }
    const index_t rows = mat.rows() / depth;
    DenseTensor3 t(rows, mat.cols(), depth);
    for (index_t h = 0; h < depth; ++h) {
        for (index_t i = 0; i < rows; ++i) {
            for (index_t j = 0; j < mat.cols(); ++j) {
                t(i, j, h) = mat(h * rows + i, j);
            }
        }
    }
    return t;
}

Eigen::MatrixXd bcirc(const DenseTensor3& t) {
    const index_t m = t.rows(), l = t.cols(), n = t.depth();
    Eigen::MatrixXd mat(m * n, l * n);
    for (index_t r = 0; r < n; ++r) {
        for (index_t c = 0; c < n; ++c) {
            const index_t h = (r - c + n) % n;
            for (index_t i = 0; i < m; ++i) {
                for (index_t j = 0; j < l; ++j) {
                    mat(r * m + i, c * l + j) = t(i, j, h);
                }
            }
        }
    }
    return mat;
}

namespace ref {

DenseTensor3 tprod_bcirc(const DenseTensor3& a, const DenseTensor3& b) {
    if (a.cols() != b.rows() || a.depth() != b.depth()) {
        throw shape_error("tprod_bcirc shape mismatch");
    }
    return fold(bcirc(a) * unfold(b), a.depth());
}

} // namespace ref

} // namespace qtrk
