#pragma once

#include "qtrk/fft.hpp"
#include "qtrk/tensor.hpp"

namespace qtrk {

// Slice-wise product in the spectral domain: out slice h = a slice h * b slice h.
SpectralTensor3 spectral_product(const SpectralTensor3& a, const SpectralTensor3& b);

// Tensor-tensor product under the circular convolution algebra along the third axis,
// computed by tube-fiber DFT, per-slice matrix products, and inverse DFT.
// Shapes: (m x l x n) * (l x p x n) -> (m x p x n).
DenseTensor3 tprod(const DenseTensor3& a, const DenseTensor3& b);

// Algebra transpose: slice 0 is transposed in place; output slice k (k >= 1) is the
// transpose of input slice depth - k. Satisfies ttranspose(tprod(a, b)) ==
// tprod(ttranspose(b), ttranspose(a)).
DenseTensor3 ttranspose(const DenseTensor3& t);

// Multiplicative identity: slice 0 is the m x m identity matrix, all other slices zero.
DenseTensor3 identity_tensor(index_t m, index_t depth);

} // namespace qtrk
