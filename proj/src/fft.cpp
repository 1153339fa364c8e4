#include "qtrk/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>

#include <fftw3.h>

namespace qtrk {

namespace {

// FFTW's planner is not thread-safe, so plans are created once under a lock and
// reused; fftw_execute_dft on distinct buffers is safe concurrently. Plans use
// FFTW_ESTIMATE for run-to-run determinism and FFTW_UNALIGNED so they can execute
// on any caller buffer with the same logical layout.
class PlanCache {
public:
    fftw_plan get(index_t n, index_t howmany, int sign) {
        const Key key{n, howmany, sign};
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<std::complex<double>> in(static_cast<std::size_t>(n * howmany));
        std::vector<std::complex<double>> out(in.size());
        const int ni = static_cast<int>(n);
        fftw_plan plan = fftw_plan_many_dft(
            1, &ni, static_cast<int>(howmany),
            reinterpret_cast<fftw_complex*>(in.data()), nullptr, 1, ni,
            reinterpret_cast<fftw_complex*>(out.data()), nullptr, 1, ni,
            sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (plan == nullptr) throw numerical_error("FFTW failed to create a plan");
        plans_.emplace(key, plan);
        return plan;
    }

private:
    using Key = std::tuple<index_t, index_t, int>;
    std::mutex mutex_;
    std::map<Key, fftw_plan> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

void execute(fftw_plan plan, std::complex<double>* in, std::complex<double>* out) {
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in),
                     reinterpret_cast<fftw_complex*>(out));
}

} // namespace

SpectralTensor3::SpectralTensor3(index_t rows, index_t cols, index_t depth)
    : rows_(rows), cols_(cols), depth_(depth) {
    if (rows < 1 || cols < 1 || depth < 1) {
        throw shape_error("spectral tensor dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(rows * cols * depth), {0.0, 0.0});
}

Eigen::Map<Eigen::MatrixXcd> SpectralTensor3::slice(index_t h) {
    if (h < 0 || h >= depth_) throw shape_error("spectral slice index out of range");
    return {data_.data() + static_cast<std::size_t>(h * rows_ * cols_), rows_, cols_};
}

Eigen::Map<const Eigen::MatrixXcd> SpectralTensor3::slice(index_t h) const {
    if (h < 0 || h >= depth_) throw shape_error("spectral slice index out of range");
    return {data_.data() + static_cast<std::size_t>(h * rows_ * cols_), rows_, cols_};
}

SpectralTensor3 fft_tubes(const DenseTensor3& t) {
    const index_t rows = t.rows(), cols = t.cols(), depth = t.depth();
    const index_t tubes = rows * cols;
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(tubes * depth));
    // Plans are created out-of-place, and FFTW requires execution to match, so a
    // separate output buffer is mandatory: in-place execution corrupts results for
    // depths whose decomposition overwrites the input mid-transform.
    std::vector<std::complex<double>> transformed(buf.size());

#pragma omp parallel for
    for (index_t f = 0; f < tubes; ++f) {
        const double* src = t.data() + f * depth;
        std::complex<double>* dst = buf.data() + f * depth;
        for (index_t h = 0; h < depth; ++h) dst[h] = {src[h], 0.0};
    }

    fftw_plan plan = plan_cache().get(depth, tubes, FFTW_FORWARD);
    execute(plan, buf.data(), transformed.data());

    SpectralTensor3 out(rows, cols, depth);
#pragma omp parallel for
    for (index_t f = 0; f < tubes; ++f) {
        const index_t i = f / cols;
        const index_t j = f % cols;
        const std::complex<double>* src = transformed.data() + f * depth;
        for (index_t h = 0; h < depth; ++h) out(i, j, h) = src[h];
    }
    return out;
}

DenseTensor3 ifft_tubes(const SpectralTensor3& t, double imag_tol) {
    const index_t rows = t.rows(), cols = t.cols(), depth = t.depth();
    const index_t tubes = rows * cols;
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(tubes * depth));
    // Same out-of-place requirement as the forward transform.
    std::vector<std::complex<double>> transformed(buf.size());

#pragma omp parallel for
    for (index_t f = 0; f < tubes; ++f) {
        const index_t i = f / cols;
        const index_t j = f % cols;
        std::complex<double>* dst = buf.data() + f * depth;
        for (index_t h = 0; h < depth; ++h) dst[h] = t(i, j, h);
    }

    fftw_plan plan = plan_cache().get(depth, tubes, FFTW_BACKWARD);
    execute(plan, buf.data(), transformed.data());

    const double scale = 1.0 / static_cast<double>(depth);
    DenseTensor3 out(rows, cols, depth);
    double worst_imag = 0.0;
#pragma omp parallel for reduction(max : worst_imag)
    for (index_t f = 0; f < tubes; ++f) {
        double* dst = out.data() + f * depth;
        const std::complex<double>* src = transformed.data() + f * depth;
        for (index_t h = 0; h < depth; ++h) {
            const std::complex<double> v = src[h] * scale;
            worst_imag = std::max(worst_imag, std::abs(v.imag()));
            dst[h] = v.real();
        }
    }
    if (worst_imag > imag_tol) {
        throw numerical_error("inverse DFT imaginary residue " + std::to_string(worst_imag) +
                              " exceeds tolerance " + std::to_string(imag_tol));
    }
    return out;
}

} // namespace qtrk
