// Timing comparison of the Fourier-path kernels against the serial block-circulant
// reference, plus solver iteration throughput at 1 thread vs all threads.
#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "qtrk/fft.hpp"
#include "qtrk/reference.hpp"
#include "qtrk/rng.hpp"
#include "qtrk/solver.hpp"
#include "qtrk/tprod.hpp"

namespace {

using qtrk::index_t;

double time_best_of(int reps, const std::function<void()>& body) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto start = std::chrono::steady_clock::now();
        body();
        const double s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (s < best) best = s;
    }
    return best;
}

void bench_tprod(index_t m, index_t l, index_t p, index_t n) {
    qtrk::Rng rng(7);
    const qtrk::DenseTensor3 a = qtrk::gaussian_tensor(m, l, n, rng);
    const qtrk::DenseTensor3 b = qtrk::gaussian_tensor(l, p, n, rng);
    const double fast = time_best_of(5, [&] { (void)qtrk::tprod(a, b); });
    const double slow = time_best_of(3, [&] { (void)qtrk::ref::tprod_bcirc(a, b); });
    std::printf("tprod %lldx%lldx%lld * %lldx%lldx%lld: fourier %.6fs, bcirc %.6fs, speedup %.1fx\n",
                static_cast<long long>(m), static_cast<long long>(l), static_cast<long long>(n),
                static_cast<long long>(l), static_cast<long long>(p), static_cast<long long>(n),
                fast, slow, slow / fast);
}

void bench_fft(index_t m, index_t l, index_t n) {
    qtrk::Rng rng(11);
    const qtrk::DenseTensor3 a = qtrk::gaussian_tensor(m, l, n, rng);
    const double s = time_best_of(5, [&] { (void)qtrk::fft_tubes(a); });
    std::printf("fft_tubes %lldx%lldx%lld: %.6fs\n", static_cast<long long>(m),
                static_cast<long long>(l), static_cast<long long>(n), s);
}

double bench_solver_iters(index_t m, index_t l, index_t p, index_t n, index_t iters,
                          int threads) {
    omp_set_num_threads(threads);
    qtrk::Rng rng(13);
    const qtrk::DenseTensor3 a = qtrk::gaussian_tensor(m, l, n, rng);
    const qtrk::DenseTensor3 xstar = qtrk::gaussian_tensor(l, p, n, rng);
    const qtrk::DenseTensor3 x0 = qtrk::gaussian_tensor(l, p, n, rng);
    const qtrk::DenseTensor3 b = qtrk::tprod(a, xstar);
    qtrk::SolverConfig config;
    config.variant = qtrk::Variant::qtrk;
    config.q = 0.975;
    config.max_iters = iters;
    config.seed = 17;
    config.record_every = iters;
    const double s =
        time_best_of(3, [&] { (void)qtrk::solve(a, b, config, &xstar, x0); });
    std::printf("solver %lldx%lldx%lld p=%lld, %lld iters, %d thread(s): %.4fs (%.0f it/s)\n",
                static_cast<long long>(m), static_cast<long long>(l), static_cast<long long>(n),
                static_cast<long long>(p), static_cast<long long>(iters), threads, s,
                static_cast<double>(iters) / s);
    return s;
}

} // namespace

int main() {
    const int max_threads = omp_get_max_threads();
    std::printf("max threads: %d\n", max_threads);

    bench_tprod(24, 16, 8, 8);
    bench_tprod(48, 32, 16, 16);
    bench_fft(128, 128, 12);

    const double serial = bench_solver_iters(50, 10, 8, 16, 200, 1);
    if (max_threads > 1) {
        const double parallel = bench_solver_iters(50, 10, 8, 16, 200, max_threads);
        std::printf("solver speedup at %d threads: %.2fx\n", max_threads, serial / parallel);
    }
    return 0;
}
