#include "qtrk/tprod.hpp"

namespace qtrk {

SpectralTensor3 spectral_product(const SpectralTensor3& a, const SpectralTensor3& b) {
    if (a.cols() != b.rows() || a.depth() != b.depth()) {
        throw shape_error("spectral_product shape mismatch");
    }
    SpectralTensor3 out(a.rows(), b.cols(), a.depth());
#pragma omp parallel for
    for (index_t h = 0; h < a.depth(); ++h) {
        out.slice(h).noalias() = a.slice(h) * b.slice(h);
    }
    return out;
}

DenseTensor3 tprod(const DenseTensor3& a, const DenseTensor3& b) {
    if (a.cols() != b.rows() || a.depth() != b.depth()) {
        throw shape_error("tprod shape mismatch: " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + "x" + std::to_string(a.depth()) + " * " +
                          std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + "x" +
                          std::to_string(b.depth()));
    }
    return ifft_tubes(spectral_product(fft_tubes(a), fft_tubes(b)));
}

DenseTensor3 ttranspose(const DenseTensor3& t) {
    const index_t n = t.depth();
    DenseTensor3 out(t.cols(), t.rows(), n);
    for (index_t h = 0; h < n; ++h) {
        const index_t src = h == 0 ? 0 : n - h;
        for (index_t i = 0; i < t.rows(); ++i) {
            for (index_t j = 0; j < t.cols(); ++j) {
                out(j, i, h) = t(i, j, src);
            }
        }
    }
    return out;
}

DenseTensor3 identity_tensor(index_t m, index_t depth) {
    DenseTensor3 out(m, m, depth);
    for (index_t i = 0; i < m; ++i) out(i, i, 0) = 1.0;
    return out;
}

} // namespace qtrk
