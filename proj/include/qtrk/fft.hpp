#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "qtrk/tensor.hpp"

namespace qtrk {

// Complex order-3 tensor holding tube-fiber DFT coefficients. Storage is slice-major
// (frontal slice h is a contiguous column-major rows x cols block) so per-slice matrix
// kernels can map it without copying.
class SpectralTensor3 {
public:
    SpectralTensor3() = default;
    SpectralTensor3(index_t rows, index_t cols, index_t depth);

    index_t rows() const { return rows_; }
    index_t cols() const { return cols_; }
    index_t depth() const { return depth_; }
    index_t size() const { return rows_ * cols_ * depth_; }

    std::complex<double> operator()(index_t i, index_t j, index_t h) const {
        return data_[flat(i, j, h)];
    }
    std::complex<double>& operator()(index_t i, index_t j, index_t h) {
        return data_[flat(i, j, h)];
    }

    Eigen::Map<Eigen::MatrixXcd> slice(index_t h);
    Eigen::Map<const Eigen::MatrixXcd> slice(index_t h) const;

    const std::complex<double>* data() const { return data_.data(); }
    std::complex<double>* data() { return data_.data(); }

    bool same_shape(const SpectralTensor3& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && depth_ == other.depth_;
    }

private:
    std::size_t flat(index_t i, index_t j, index_t h) const {
        return static_cast<std::size_t>((h * cols_ + j) * rows_ + i);
    }

    index_t rows_ = 0, cols_ = 0, depth_ = 0;
    std::vector<std::complex<double>> data_;
};

// Unnormalized forward DFT along every tube fiber (third axis).
SpectralTensor3 fft_tubes(const DenseTensor3& t);

// Inverse DFT (scaled by 1/depth) along tube fibers. The result of transforming
// conjugate-symmetric data is real up to rounding; any entry with |imaginary part|
// above `imag_tol` (absolute) raises numerical_error instead of being truncated.
DenseTensor3 ifft_tubes(const SpectralTensor3& t, double imag_tol = 1e-10);

} // namespace qtrk
