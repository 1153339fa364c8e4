#pragma once

#include <Eigen/Dense>

#include "qtrk/tensor.hpp"

namespace qtrk {

// Stacks frontal slices vertically: an m x l x n tensor becomes an (m*n) x l matrix
// whose k-th m-row block is slice k.
Eigen::MatrixXd unfold(const DenseTensor3& t);

// Inverse of unfold; `rows` of `mat` must be divisible by `depth`.
DenseTensor3 fold(const Eigen::MatrixXd& mat, index_t depth);

// Block-circulant matrix of an m x l x n tensor: (m*n) x (l*n), block (r, c)
// (0-based block indices) equals frontal slice (r - c) mod n.
Eigen::MatrixXd bcirc(const DenseTensor3& t);

namespace ref {

// Serial reference for the tensor product: fold(bcirc(a) * unfold(b)). Kept as the
// oracle the DFT fast path is tested against.
DenseTensor3 tprod_bcirc(const DenseTensor3& a, const DenseTensor3& b);

} // namespace ref

} // namespace qtrk
