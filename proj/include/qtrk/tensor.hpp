#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qtrk/errors.hpp"
#include "qtrk/rng.hpp"

namespace qtrk {

using index_t = std::int64_t;

// Dense real order-3 tensor, shape rows x cols x depth. Element (i, j, h) lives at
// flat offset ((i * cols) + j) * depth + h, so tube fibers (fixed i, j) are contiguous,
// which is the access pattern of the tube-fiber DFT.
class DenseTensor3 {
public:
    DenseTensor3() = default;

    DenseTensor3(index_t rows, index_t cols, index_t depth)
        : rows_(rows), cols_(cols), depth_(depth) {
        validate_shape(rows, cols, depth);
        data_.assign(static_cast<std::size_t>(rows * cols * depth), 0.0);
    }

    // Takes ownership of `data` (flat, in the layout above); rejects size mismatch
    // and non-finite entries.
    static DenseTensor3 from_data(index_t rows, index_t cols, index_t depth,
                                  std::vector<double> data);

    index_t rows() const { return rows_; }
    index_t cols() const { return cols_; }
    index_t depth() const { return depth_; }
    index_t size() const { return rows_ * cols_ * depth_; }

    double operator()(index_t i, index_t j, index_t h) const {
        return data_[flat(i, j, h)];
    }
    double& operator()(index_t i, index_t j, index_t h) {
        return data_[flat(i, j, h)];
    }

    // Bounds-checked access; throws shape_error on out-of-range indices.
    double at(index_t i, index_t j, index_t h) const;
    double& at(index_t i, index_t j, index_t h);

    const double* data() const { return data_.data(); }
    double* data() { return data_.data(); }

    const double* tube(index_t i, index_t j) const {
        return data_.data() + static_cast<std::size_t>((i * cols_ + j) * depth_);
    }
    double* tube(index_t i, index_t j) {
        return data_.data() + static_cast<std::size_t>((i * cols_ + j) * depth_);
    }

    bool same_shape(const DenseTensor3& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && depth_ == other.depth_;
    }

private:
    static void validate_shape(index_t rows, index_t cols, index_t depth);

    std::size_t flat(index_t i, index_t j, index_t h) const {
        return static_cast<std::size_t>((i * cols_ + j) * depth_ + h);
    }

    index_t rows_ = 0, cols_ = 0, depth_ = 0;
    std::vector<double> data_;
};

enum class SliceAxis { row, col, frontal };

// Read-only 2-D view of one slice. Extents by axis:
//   row i:     cols x depth, view(a, b) = t(i, a, b)
//   col j:     rows x depth, view(a, b) = t(a, j, b)
//   frontal h: rows x cols,  view(a, b) = t(a, b, h)
class SliceView {
public:
    SliceView(const DenseTensor3& t, SliceAxis axis, index_t index);

    index_t extent0() const { return extent0_; }
    index_t extent1() const { return extent1_; }
    double operator()(index_t a, index_t b) const;

private:
    const DenseTensor3* t_;
    SliceAxis axis_;
    index_t index_;
    index_t extent0_, extent1_;
};

double frobenius_norm(const DenseTensor3& t);

// Max over entries of |a - b|; shapes must match.
double max_abs_diff(const DenseTensor3& a, const DenseTensor3& b);

// ||x - ref||_F / ||ref||_F; throws domain_error when ref is the zero tensor.
double relative_error(const DenseTensor3& x, const DenseTensor3& ref);

// Entrywise sum and difference.
DenseTensor3 add(const DenseTensor3& a, const DenseTensor3& b);
DenseTensor3 subtract(const DenseTensor3& a, const DenseTensor3& b);

// Tensor with i.i.d. standard Gaussian entries, filled in flat-offset order.
DenseTensor3 gaussian_tensor(index_t rows, index_t cols, index_t depth, Rng& rng);

// Binary tensor file format: 8-byte magic "T3BINv01", three little-endian u64 dims
// (rows, cols, depth), then rows*cols*depth IEEE-754 f64 little-endian values in
// flat-offset order.
void write_t3b(const std::filesystem::path& path, const DenseTensor3& t);
DenseTensor3 read_t3b(const std::filesystem::path& path);

} // namespace qtrk
