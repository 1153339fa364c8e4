#include "qtrk/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace qtrk {

namespace {

constexpr double kSingularRowTol = 1e-12;

double fourier_row_norm(const SpectralTensor3& a_hat, index_t i, index_t h) {
    double sum = 0.0;
    for (index_t j = 0; j < a_hat.cols(); ++j) sum += std::norm(a_hat(i, j, h));
    return std::sqrt(sum);
}

double checked_fourier_row_norm(const SpectralTensor3& a_hat, index_t i, index_t h) {
    const double norm = fourier_row_norm(a_hat, i, h);
    if (norm < kSingularRowTol) {
        throw numerical_error("singular row slice: ||a_hat(i=" + std::to_string(i) +
                              ", h=" + std::to_string(h) + ")|| = " + std::to_string(norm) +
                              " below 1e-12");
    }
    return norm;
}

} // namespace

SingularExtremes bcirc_singular_extremes(const DenseTensor3& a) {
    const SpectralTensor3 a_hat = fft_tubes(a);
    const index_t n = a_hat.depth();
    std::vector<double> slice_min(n), slice_max(n);
#pragma omp parallel for
    for (index_t h = 0; h < n; ++h) {
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a_hat.slice(h));
        const auto& sv = svd.singularValues();
        slice_max[h] = sv(0);
        slice_min[h] = sv(sv.size() - 1);
    }
    SingularExtremes out{slice_min[0], slice_max[0]};
    for (index_t h = 1; h < n; ++h) {
        out.sigma_min = std::min(out.sigma_min, slice_min[h]);
        out.sigma_max = std::max(out.sigma_max, slice_max[h]);
    }
    return out;
}

double eta(const DenseTensor3& a) {
    const SpectralTensor3 a_hat = fft_tubes(a);
    double min_norm = std::numeric_limits<double>::infinity();
    for (index_t i = 0; i < a_hat.rows(); ++i) {
        for (index_t h = 0; h < a_hat.depth(); ++h) {
            min_norm = std::min(min_norm, checked_fourier_row_norm(a_hat, i, h));
        }
    }
    return 1.0 / min_norm;
}

double expected_projector_sigma_min(const DenseTensor3& a, const std::vector<index_t>& rows) {
    std::vector<index_t> sorted = rows;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (sorted.empty()) throw domain_error("expected_projector_sigma_min: empty row set");
    if (sorted.front() < 0 || sorted.back() >= a.rows()) {
        throw shape_error("expected_projector_sigma_min: row index out of range");
    }

    const SpectralTensor3 a_hat = fft_tubes(a);
    const index_t l = a_hat.cols();
    const index_t n = a_hat.depth();
    std::vector<double> slice_min(n);
#pragma omp parallel for
    for (index_t h = 0; h < n; ++h) {
        Eigen::MatrixXcd avg = Eigen::MatrixXcd::Zero(l, l);
        for (index_t i : sorted) {
            const double norm = checked_fourier_row_norm(a_hat, i, h);
            Eigen::RowVectorXcd row(l);
            for (index_t j = 0; j < l; ++j) row(j) = a_hat(i, j, h);
            avg.noalias() += row.adjoint() * row / (norm * norm);
        }
        avg /= static_cast<double>(sorted.size());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(avg, Eigen::EigenvaluesOnly);
        slice_min[h] = eig.eigenvalues()(0);
    }
    double out = slice_min[0];
    for (index_t h = 1; h < n; ++h) out = std::min(out, slice_min[h]);
    return out;
}

double quantile_bound(const DenseTensor3& a, const DenseTensor3& xk, const DenseTensor3& xstar,
                      double q, double beta) {
    if (!xk.same_shape(xstar) || a.cols() != xk.rows() || a.depth() != xk.depth()) {
        throw shape_error("quantile_bound shape mismatch");
    }
    if (beta < 0.0 || beta >= 1.0) throw domain_error("quantile_bound: beta must be in [0, 1)");
    if (!(q > 0.0) || q > 1.0 - beta) {
        throw domain_error("quantile_bound: q = " + std::to_string(q) + " outside (0, 1 - beta]");
    }
    const double sigma_max = bcirc_singular_extremes(a).sigma_max;
    const double diff = frobenius_norm(subtract(xk, xstar));
    const double mpn =
        static_cast<double>(a.rows()) * static_cast<double>(xk.cols()) * static_cast<double>(xk.depth());
    return sigma_max * diff / std::sqrt(mpn * (1.0 - beta - q));
}

double rate_qtrk(const RateInputs& in) {
    if (in.m < 1) throw domain_error("rate_qtrk: m must be >= 1");
    if (!(in.q > 0.0)) throw domain_error("rate_qtrk: q must be positive (division by q)");
    if (in.q > 1.0) throw domain_error("rate_qtrk: q must be at most 1");
    if (in.beta < 0.0 || in.beta >= 1.0) throw domain_error("rate_qtrk: beta must be in [0, 1)");
    if (in.beta_row < 0.0 || in.beta_row > 1.0) {
        throw domain_error("rate_qtrk: beta_row must be in [0, 1]");
    }

    const double c_corrupt = 1.0 - (1.0 - in.beta_row) / in.q;
    const double c_clean = 1.0 - in.beta_row / in.q;

    double corrupt_term = 0.0;
    if (c_corrupt != 0.0) {
        const double radicand = static_cast<double>(in.m) * (1.0 - in.beta - in.q);
        if (!(radicand > 0.0)) {
            throw domain_error("rate_qtrk: radicand m(1-beta-q) = " + std::to_string(radicand) +
                               " not positive (q >= 1 - beta)");
        }
        corrupt_term =
            c_corrupt * (1.0 + in.sigma_max_bcirc * in.eta / std::sqrt(radicand));
    }
    return corrupt_term + c_clean * (1.0 - in.sigma_min_expected_projector);
}

double rate_mqtrk(const RateInputs& in, index_t p, index_t n) {
    if (p < 1 || n < 1) throw domain_error("rate_mqtrk: p and n must be >= 1");
    const double pn = static_cast<double>(p) * static_cast<double>(n);
    if (!(in.q > 1.0 - 1.0 / pn)) {
        throw domain_error("rate_mqtrk hypothesis violated: q = " + std::to_string(in.q) +
                           " must exceed 1 - 1/(pn) = " + std::to_string(1.0 - 1.0 / pn));
    }
    if (!(in.q < 1.0 - in.beta)) {
        throw domain_error("rate_mqtrk hypothesis violated: q = " + std::to_string(in.q) +
                           " must be below 1 - beta = " + std::to_string(1.0 - in.beta));
    }
    const double r = rate_qtrk(in);
    const double radicand = static_cast<double>(in.m) * (1.0 - in.beta - in.q);
    const double amplify = 1.0 + in.sigma_max_bcirc * in.eta / std::sqrt(radicand);
    const double mass = std::min(1.0 - in.beta, (1.0 - in.q) * pn) + in.beta * pn;
    return in.q * (1.0 - r) + mass * amplify;
}

nlohmann::ordered_json rate_report_json(const RateReport& report) {
    nlohmann::ordered_json j;
    j["sigma_max_bcirc"] = report.sigma_max_bcirc;
    j["eta"] = report.eta;
    j["sigma_min_expected_projector"] = report.sigma_min_expected_projector;
    j["beta"] = report.beta;
    j["beta_row"] = report.beta_row;
    j["q"] = report.q;
    j["rate_qtrk"] = report.rate_qtrk;
    if (report.rate_mqtrk.has_value()) j["rate_mqtrk"] = *report.rate_mqtrk;
    return j;
}

} // namespace qtrk
