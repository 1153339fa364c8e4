#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qtrk/fft.hpp"
#include "qtrk/rng.hpp"
#include "qtrk/tensor.hpp"

namespace qtrk {

enum class Variant { trk, qtrk, mqtrk };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

// stall policy is fixed: an iteration with no admissible row performs no update and
// increments the stall counter.
struct SolverConfig {
    Variant variant = Variant::trk;
    double q = 1.0;
    index_t max_iters = 1;
    std::uint64_t seed = 0;
    index_t record_every = 1;
};

struct TraceRow {
    index_t iter;
    double rel_error;    // vs Xstar when supplied, NaN otherwise
    double rel_residual; // ||A*X - B||_F / ||B||_F (or vs a reference B when supplied)
    index_t stalls_so_far;
};

struct RunRecord {
    std::vector<TraceRow> trace;
    std::vector<index_t> rows_sampled;         // per row: times sampled for an update
    std::vector<index_t> flagged_row_counts;   // per row: iterations it held a flagged entry
    std::vector<index_t> masked_column_counts; // per column: times masked out of an update
    index_t stall_iterations = 0;
    index_t iterations_run = 0;
};

struct StepEvents {
    bool stalled = false;
    index_t sampled_row = -1;
    std::vector<index_t> flagged_rows;
    std::vector<index_t> masked_columns;
};

// Iteration state for one run: the spatial iterate X, the spectral cache of A (built
// once), the spectral image of B, and the RNG stream. X stays in the spatial domain
// throughout; updates touch only the columns being projected, so masked columns and
// stalled iterations leave their entries bitwise identical.
class SolverState {
public:
    SolverState(const DenseTensor3& a, const DenseTensor3& b, const SolverConfig& config,
                const DenseTensor3& x0);

    const DenseTensor3& x() const { return x_; }
    index_t iteration() const { return iteration_; }
    const SolverConfig& config() const { return config_; }
    Rng& rng() { return rng_; }

    index_t num_rows() const { return a_hat_.rows(); } // m
    index_t num_cols() const { return b_.cols(); }     // p

    // E = A*X - B for the current iterate, recomputed from scratch when X has
    // changed and cached otherwise.
    const DenseTensor3& residual();

    // Projects row i onto consistency, restricted to keep_cols (sorted ascending);
    // other columns are untouched. Advances nothing else.
    void project(index_t i, const std::vector<index_t>& keep_cols);
    void project_full(index_t i);

    void advance() { ++iteration_; }

private:
    void ensure_x_hat();

    SpectralTensor3 a_hat_;
    DenseTensor3 b_;
    SpectralTensor3 b_hat_;
    DenseTensor3 x_;
    SpectralTensor3 x_hat_;
    bool x_hat_fresh_ = false;
    DenseTensor3 e_;
    bool e_fresh_ = false;
    SolverConfig config_;
    Rng rng_;
    index_t iteration_ = 0;
    std::vector<index_t> all_cols_;
};

// One iteration of each variant. The caller is responsible for recording and for
// calling state.advance() afterwards (solve() below does both).
StepEvents trk_step(SolverState& state);
StepEvents qtrk_step(SolverState& state);
StepEvents mqtrk_step(SolverState& state);

DenseTensor3 residual(const DenseTensor3& a, const DenseTensor3& x, const DenseTensor3& b);

// The floor(q * count)-th smallest absolute entry (1-indexed order statistic).
// floor(q * count) = 0 is a domain error. Products within 1e-9 of an integer are
// snapped to it before flooring, so q = 0.975 on 1000 entries selects index 975.
double q_quantile(const DenseTensor3& e, double q);

// Full row projection: per Fourier slice h,
//   x_hat_h <- x_hat_h - a_hat^* (a_hat x_hat_h - b_hat) / ||a_hat||_2^2
// for row i of A. Rows whose Fourier slice norm falls below 1e-12 raise
// numerical_error naming (i, h).
DenseTensor3 project_row(const DenseTensor3& x, const SpectralTensor3& a_hat,
                         const DenseTensor3& b, index_t i);

// As project_row but only columns in keep_cols are updated; the rest of X is
// bitwise unchanged.
DenseTensor3 project_row_masked(const DenseTensor3& x, const SpectralTensor3& a_hat,
                                const DenseTensor3& b, index_t i,
                                const std::vector<index_t>& keep_cols);

struct SolveResult {
    DenseTensor3 x;
    RunRecord record;
};

// Runs max_iters iterations of the configured variant from x0, recording the trace
// at iteration 0, every record_every-th iteration, and the final iterate.
// rel_error is populated when xstar is non-null. rel_residual is measured against
// residual_reference when non-null (e.g. an uncorrupted right-hand side), else
// against b itself. Deterministic given (seed, inputs).
SolveResult solve(const DenseTensor3& a, const DenseTensor3& b, const SolverConfig& config,
                  const DenseTensor3* xstar, const DenseTensor3& x0,
                  const DenseTensor3* residual_reference = nullptr);

// Per-Fourier-slice pseudoinverse solve; singular values below 1e-10 * sigma_max of
// their slice are treated as zero. The baseline the iterative solvers are compared
// against.
DenseTensor3 least_norm_solve(const DenseTensor3& a, const DenseTensor3& b);

} // namespace qtrk
