#include "qtrk/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "qtrk/tprod.hpp"

namespace qtrk {

namespace {

constexpr double kSingularRowTolSq = 1e-24; // (1e-12)^2 on ||a_hat(i, h)||^2

// Applies the row-i projection to the columns listed in `keep` (sorted ascending).
// x_hat must be the fresh transform of x; b_hat supplies the row image at b_row.
// Only the kept columns of the spectral delta are formed and inverse-transformed,
// which keeps untouched columns bitwise identical and avoids transporting large
// masked residuals through the inverse DFT.
void apply_row_projection(DenseTensor3& x, const SpectralTensor3& x_hat,
                          const SpectralTensor3& a_hat, const SpectralTensor3& b_hat,
                          index_t b_row, index_t i, const std::vector<index_t>& keep) {
    if (keep.empty()) return;
    const index_t l = a_hat.cols();
    const index_t n = a_hat.depth();
    const index_t kk = static_cast<index_t>(keep.size());

    SpectralTensor3 delta_hat(l, kk, n);
    for (index_t h = 0; h < n; ++h) {
        const auto a_slice = a_hat.slice(h);
        const Eigen::RowVectorXcd a_row = a_slice.row(i);
        const double norm_sq = a_row.squaredNorm();
        if (norm_sq < kSingularRowTolSq) {
            throw numerical_error("singular row slice: ||a_hat(i=" + std::to_string(i) +
                                  ", h=" + std::to_string(h) + ")|| below 1e-12");
        }
        const auto x_slice = x_hat.slice(h);
        Eigen::RowVectorXcd alpha(kk);
        for (index_t jj = 0; jj < kk; ++jj) {
            const index_t j = keep[static_cast<std::size_t>(jj)];
            alpha(jj) = ((a_row * x_slice.col(j)).value() - b_hat(b_row, j, h)) / norm_sq;
        }
        delta_hat.slice(h).noalias() = a_row.adjoint() * alpha;
    }

    const DenseTensor3 delta = ifft_tubes(delta_hat);
    for (index_t jj = 0; jj < kk; ++jj) {
        const index_t j = keep[static_cast<std::size_t>(jj)];
        for (index_t i2 = 0; i2 < l; ++i2) {
            for (index_t h = 0; h < n; ++h) {
                x(i2, j, h) -= delta(i2, jj, h);
            }
        }
    }
}

std::vector<index_t> all_columns(index_t p) {
    std::vector<index_t> cols(static_cast<std::size_t>(p));
    for (index_t j = 0; j < p; ++j) cols[static_cast<std::size_t>(j)] = j;
    return cols;
}

void validate_keep_cols(const std::vector<index_t>& keep, index_t p) {
    index_t prev = -1;
    for (index_t j : keep) {
        if (j <= prev || j < 0 || j >= p) {
            throw shape_error("keep_cols must be sorted, unique, and within [0, p)");
        }
        prev = j;
    }
}

DenseTensor3 extract_row_slice(const DenseTensor3& t, index_t i) {
    DenseTensor3 out(1, t.cols(), t.depth());
    for (index_t j = 0; j < t.cols(); ++j) {
        for (index_t h = 0; h < t.depth(); ++h) out(0, j, h) = t(i, j, h);
    }
    return out;
}

// Rows holding at least one entry with |value| strictly above the threshold.
std::vector<index_t> rows_above(const DenseTensor3& e, double threshold) {
    std::vector<index_t> rows;
    for (index_t i = 0; i < e.rows(); ++i) {
        bool hit = false;
        for (index_t j = 0; j < e.cols() && !hit; ++j) {
            for (index_t h = 0; h < e.depth() && !hit; ++h) {
                hit = std::abs(e(i, j, h)) > threshold;
            }
        }
        if (hit) rows.push_back(i);
    }
    return rows;
}

double norm_ratio_against(const DenseTensor3& e, const DenseTensor3* shift, double ref_norm) {
    double sum = 0.0;
    const index_t count = e.size();
    for (index_t k = 0; k < count; ++k) {
        const double v = shift ? e.data()[k] + shift->data()[k] : e.data()[k];
        sum += v * v;
    }
    return std::sqrt(sum) / ref_norm;
}

} // namespace

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::trk: return "trk";
        case Variant::qtrk: return "qtrk";
        case Variant::mqtrk: return "mqtrk";
    }
    return "?";
}

Variant parse_variant(const std::string& name) {
    if (name == "trk") return Variant::trk;
    if (name == "qtrk") return Variant::qtrk;
    if (name == "mqtrk") return Variant::mqtrk;
    throw config_error("unknown solver variant: " + name);
}

SolverState::SolverState(const DenseTensor3& a, const DenseTensor3& b,
                         const SolverConfig& config, const DenseTensor3& x0)
    : a_hat_(fft_tubes(a)),
      b_(b),
      b_hat_(fft_tubes(b)),
      x_(x0),
      config_(config),
      rng_(config.seed),
      all_cols_(all_columns(b.cols())) {
    if (a.rows() != b.rows() || a.depth() != b.depth()) {
        throw shape_error("solver: A and B row/depth mismatch");
    }
    if (x0.rows() != a.cols() || x0.cols() != b.cols() || x0.depth() != a.depth()) {
        throw shape_error("solver: X0 shape must be (A.cols, B.cols, depth)");
    }
    if (!(config.q > 0.0) || config.q > 1.0) {
        throw domain_error("solver: q must be in (0, 1]");
    }
    if (config.max_iters < 1) throw domain_error("solver: max_iters must be >= 1");
    if (config.record_every < 1) throw domain_error("solver: record_every must be >= 1");
}

void SolverState::ensure_x_hat() {
    if (!x_hat_fresh_) {
        x_hat_ = fft_tubes(x_);
        x_hat_fresh_ = true;
    }
}

const DenseTensor3& SolverState::residual() {
    if (!e_fresh_) {
        ensure_x_hat();
        SpectralTensor3 e_hat(b_.rows(), b_.cols(), b_.depth());
#pragma omp parallel for
        for (index_t h = 0; h < b_.depth(); ++h) {
            e_hat.slice(h).noalias() = a_hat_.slice(h) * x_hat_.slice(h) - b_hat_.slice(h);
        }
        e_ = ifft_tubes(e_hat);
        e_fresh_ = true;
    }
    return e_;
}

void SolverState::project(index_t i, const std::vector<index_t>& keep_cols) {
    if (i < 0 || i >= num_rows()) throw shape_error("solver: sampled row out of range");
    validate_keep_cols(keep_cols, num_cols());
    if (keep_cols.empty()) return;
    ensure_x_hat();
    apply_row_projection(x_, x_hat_, a_hat_, b_hat_, i, i, keep_cols);
    x_hat_fresh_ = false;
    e_fresh_ = false;
}

void SolverState::project_full(index_t i) { project(i, all_cols_); }

StepEvents trk_step(SolverState& state) {
    StepEvents events;
    events.sampled_row = static_cast<index_t>(state.rng().below(
        static_cast<std::uint64_t>(state.num_rows())));
    state.project_full(events.sampled_row);
    return events;
}

StepEvents qtrk_step(SolverState& state) {
    StepEvents events;
    const DenseTensor3& e = state.residual();
    const double threshold = q_quantile(e, state.config().q);
    events.flagged_rows = rows_above(e, threshold);

    std::vector<index_t> admissible;
    {
        auto flagged = events.flagged_rows.begin();
        for (index_t i = 0; i < state.num_rows(); ++i) {
            if (flagged != events.flagged_rows.end() && *flagged == i) {
                ++flagged;
            } else {
                admissible.push_back(i);
            }
        }
    }
    if (admissible.empty()) {
        events.stalled = true;
        return events;
    }
    events.sampled_row = admissible[state.rng().below(admissible.size())];
    state.project_full(events.sampled_row);
    return events;
}

StepEvents mqtrk_step(SolverState& state) {
    StepEvents events;
    const DenseTensor3& e = state.residual();
    const double threshold = q_quantile(e, state.config().q);
    events.flagged_rows = rows_above(e, threshold);
    events.sampled_row = static_cast<index_t>(state.rng().below(
        static_cast<std::uint64_t>(state.num_rows())));

    std::vector<index_t> keep;
    for (index_t j = 0; j < state.num_cols(); ++j) {
        bool flagged = false;
        for (index_t h = 0; h < e.depth() && !flagged; ++h) {
            flagged = std::abs(e(events.sampled_row, j, h)) > threshold;
        }
        if (flagged) {
            events.masked_columns.push_back(j);
        } else {
            keep.push_back(j);
        }
    }
    state.project(events.sampled_row, keep);
    return events;
}

DenseTensor3 residual(const DenseTensor3& a, const DenseTensor3& x, const DenseTensor3& b) {
    DenseTensor3 ax = tprod(a, x);
    if (!ax.same_shape(b)) throw shape_error("residual: B shape mismatch");
    return subtract(ax, b);
}

double q_quantile(const DenseTensor3& e, double q) {
    const index_t count = e.size();
    const double product = q * static_cast<double>(count);
    const double snapped = std::abs(product - std::round(product)) < 1e-9
                               ? std::round(product)
                               : std::floor(product);
    const index_t k = static_cast<index_t>(snapped);
    if (k < 1) throw domain_error("q_quantile: quantile index zero (floor(q * count) < 1)");
    if (k > count) throw domain_error("q_quantile: quantile index exceeds entry count");
    std::vector<double> mags(static_cast<std::size_t>(count));
    for (index_t idx = 0; idx < count; ++idx) mags[static_cast<std::size_t>(idx)] = std::abs(e.data()[idx]);
    std::nth_element(mags.begin(), mags.begin() + (k - 1), mags.end());
    return mags[static_cast<std::size_t>(k - 1)];
}

DenseTensor3 project_row(const DenseTensor3& x, const SpectralTensor3& a_hat,
                         const DenseTensor3& b, index_t i) {
    return project_row_masked(x, a_hat, b, i, all_columns(b.cols()));
}

DenseTensor3 project_row_masked(const DenseTensor3& x, const SpectralTensor3& a_hat,
                                const DenseTensor3& b, index_t i,
                                const std::vector<index_t>& keep_cols) {
    if (i < 0 || i >= a_hat.rows() || a_hat.rows() != b.rows() || a_hat.depth() != b.depth() ||
        x.rows() != a_hat.cols() || x.cols() != b.cols() || x.depth() != b.depth()) {
        throw shape_error("project_row: shape mismatch");
    }
    validate_keep_cols(keep_cols, b.cols());
    DenseTensor3 out = x;
    if (keep_cols.empty()) return out;
    const SpectralTensor3 x_hat = fft_tubes(x);
    const SpectralTensor3 b_row_hat = fft_tubes(extract_row_slice(b, i));
    apply_row_projection(out, x_hat, a_hat, b_row_hat, 0, i, keep_cols);
    return out;
}

SolveResult solve(const DenseTensor3& a, const DenseTensor3& b, const SolverConfig& config,
                  const DenseTensor3* xstar, const DenseTensor3& x0,
                  const DenseTensor3* residual_reference) {
    SolverState state(a, b, config, x0);
    if (xstar != nullptr && !x0.same_shape(*xstar)) {
        throw shape_error("solve: Xstar shape mismatch");
    }
    DenseTensor3 b_shift; // B - reference, so A*X - reference = E + shift
    const DenseTensor3* shift = nullptr;
    double ref_norm = frobenius_norm(b);
    if (residual_reference != nullptr) {
        if (!residual_reference->same_shape(b)) {
            throw shape_error("solve: residual reference shape mismatch");
        }
        b_shift = subtract(b, *residual_reference);
        shift = &b_shift;
        ref_norm = frobenius_norm(*residual_reference);
    }

    RunRecord record;
    record.rows_sampled.assign(static_cast<std::size_t>(a.rows()), 0);
    record.flagged_row_counts.assign(static_cast<std::size_t>(a.rows()), 0);
    record.masked_column_counts.assign(static_cast<std::size_t>(b.cols()), 0);

    const index_t iters = config.max_iters;
    for (index_t k = 0; k <= iters; ++k) {
        if (k % config.record_every == 0 || k == iters) {
            TraceRow row;
            row.iter = k;
            row.rel_error = xstar != nullptr ? relative_error(state.x(), *xstar)
                                             : std::numeric_limits<double>::quiet_NaN();
            row.rel_residual = norm_ratio_against(state.residual(), shift, ref_norm);
            row.stalls_so_far = record.stall_iterations;
            record.trace.push_back(row);
        }
        if (k == iters) break;

        StepEvents events;
        switch (config.variant) {
            case Variant::trk: events = trk_step(state); break;
            case Variant::qtrk: events = qtrk_step(state); break;
            case Variant::mqtrk: events = mqtrk_step(state); break;
        }
        if (events.stalled) {
            ++record.stall_iterations;
        } else {
            ++record.rows_sampled[static_cast<std::size_t>(events.sampled_row)];
        }
        for (index_t i : events.flagged_rows) {
            ++record.flagged_row_counts[static_cast<std::size_t>(i)];
        }
        for (index_t j : events.masked_columns) {
            ++record.masked_column_counts[static_cast<std::size_t>(j)];
        }
        state.advance();
    }
    record.iterations_run = iters;
    return {state.x(), std::move(record)};
}

DenseTensor3 least_norm_solve(const DenseTensor3& a, const DenseTensor3& b) {
    if (a.rows() != b.rows() || a.depth() != b.depth()) {
        throw shape_error("least_norm_solve: shape mismatch");
    }
    const SpectralTensor3 a_hat = fft_tubes(a);
    const SpectralTensor3 b_hat = fft_tubes(b);
    const index_t n = a.depth();
    SpectralTensor3 x_hat(a.cols(), b.cols(), n);
#pragma omp parallel for
    for (index_t h = 0; h < n; ++h) {
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a_hat.slice(h),
                                               Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& sv = svd.singularValues();
        const double cutoff = sv.size() > 0 ? 1e-10 * sv(0) : 0.0;
        Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
        for (Eigen::Index s = 0; s < sv.size(); ++s) {
            if (sv(s) > cutoff && sv(s) > 0.0) inv(s) = 1.0 / sv(s);
        }
        x_hat.slice(h).noalias() = svd.matrixV() * inv.asDiagonal() *
                                   (svd.matrixU().adjoint() * b_hat.slice(h));
    }
    double peak = 0.0;
    for (index_t idx = 0; idx < x_hat.size(); ++idx) {
        peak = std::max(peak, std::abs(x_hat.data()[idx]));
    }
    // The pseudoinverse can amplify the data by 1/sigma_min, so the imaginary-residue
    // tolerance scales with the magnitude actually reached.
    return ifft_tubes(x_hat, 1e-10 * std::max(1.0, peak));
}

} // namespace qtrk
