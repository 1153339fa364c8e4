#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "qtrk/fft.hpp"
#include "qtrk/tensor.hpp"

namespace qtrk {

struct SingularExtremes {
    double sigma_min;
    double sigma_max;
};

// Extreme singular values of the block-circulant matrix of A, computed without
// materializing it: the tube DFT block-diagonalizes bcirc(A), so the spectrum is the
// union over frontal Fourier slices of the per-slice singular values.
SingularExtremes bcirc_singular_extremes(const DenseTensor3& a);

// eta = max over row slices i of the largest singular value of the pseudoinverse of
// bcirc(A_i::), which reduces to max_i max_h 1 / ||a_hat(i, h)||_2. Any Fourier row
// with norm below 1e-12 raises numerical_error identifying (i, h).
double eta(const DenseTensor3& a);

// Smallest eigenvalue, minimized over Fourier slices, of the uniform average over
// `rows` of the rank-1 projectors a_hat^* a_hat / ||a_hat||^2. Equals
// sigma_min of the averaged bcirc row projectors. `rows` must be nonempty.
double expected_projector_sigma_min(const DenseTensor3& a, const std::vector<index_t>& rows);

// Upper bound on the q-quantile of |A*Xk - B| for a consistent system corrupted in a
// beta fraction of entries: sigma_max(bcirc(A)) * ||Xk - Xstar||_F / sqrt(m p n (1-beta-q)).
// Requires 0 < q <= 1 - beta.
double quantile_bound(const DenseTensor3& a, const DenseTensor3& xk, const DenseTensor3& xstar,
                      double q, double beta);

struct RateInputs {
    index_t m;
    double sigma_max_bcirc;
    double eta;
    double sigma_min_expected_projector;
    double beta;
    double beta_row;
    double q;
};

// Expected per-iteration contraction factor of the quantile-filtered solver:
//   R = (1 - (1-beta_row)/q) * (1 + sigma_max * eta / sqrt(m (1-beta-q)))
//     + (1 - beta_row/q) * (1 - sigma_min_expected_projector)
// evaluated verbatim, with no clamping; values >= 1 or < 0 are returned as-is.
// The corrupted-row term is skipped when its coefficient is exactly zero (the
// no-corruption case beta_row = 0, q = 1); otherwise a non-positive radicand
// m (1-beta-q) is a domain error.
double rate_qtrk(const RateInputs& in);

// Expected contraction factor of the masked variant:
//   q (1 - R) + (min{1-beta, (1-q) p n} + beta p n) * (1 + sigma_max * eta / sqrt(m (1-beta-q)))
// under the hypothesis 1 - 1/(pn) < q < 1 - beta (both strict); violations raise
// domain_error naming the failed inequality.
double rate_mqtrk(const RateInputs& in, index_t p, index_t n);

struct RateReport {
    double sigma_max_bcirc;
    double eta;
    double sigma_min_expected_projector;
    double beta;
    double beta_row;
    double q;
    double rate_qtrk;
    std::optional<double> rate_mqtrk;
};

// Flat JSON object with the struct's field names; rate_mqtrk omitted when absent.
nlohmann::ordered_json rate_report_json(const RateReport& report);

} // namespace qtrk
