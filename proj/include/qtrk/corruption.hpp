#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qtrk/rng.hpp"
#include "qtrk/tensor.hpp"

namespace qtrk {

struct MagnitudeLaw {
    enum class Kind { normal, abs_normal };
    Kind kind = Kind::normal;
    double mean = 0.0;
    double stddev = 1.0;
};

// Accepts "normal(mu,sigma)" and "abs_normal(mu,sigma)"; sigma must be positive.
MagnitudeLaw parse_law(const std::string& text);
std::string law_label(const MagnitudeLaw& law);
double draw_law(const MagnitudeLaw& law, Rng& rng);

struct CorruptionEntry {
    index_t i, j, h;
    double value;
};

// An explicit, deduplicated set of additive corruptions for an m x p x n right-hand
// side, with exact ground-truth bookkeeping: which rows are touched, which columns a
// given row corrupts, and the realized corruption fractions.
class CorruptionPlan {
public:
    CorruptionPlan(index_t m, index_t p, index_t n, std::vector<CorruptionEntry> entries);

    index_t m() const { return m_; }
    index_t p() const { return p_; }
    index_t n() const { return n_; }
    const std::vector<CorruptionEntry>& entries() const { return entries_; }

    double beta() const;     // |C| / (m p n)
    double beta_row() const; // corrupted row fraction

    std::vector<index_t> corrupted_rows() const;   // rows with >= 1 entry, ascending
    std::vector<index_t> uncorrupted_rows() const; // the complement
    std::vector<index_t> corrupted_cols_in_row(index_t i) const;

    // Generation provenance, carried for serialization when known.
    std::optional<std::uint64_t> seed;
    std::optional<std::string> law;

private:
    index_t m_, p_, n_;
    std::vector<CorruptionEntry> entries_; // sorted by (i, j, h), positions unique
};

// Draws beta_row_tilde * m candidate rows without replacement, then beta_tilde * m*p*n
// entry positions with replacement uniformly over the candidate rows' (j, h) grid,
// collapses duplicates to a set, and assigns each surviving position one value from
// the law (in sorted position order). Realized beta <= beta_tilde and realized
// beta_row <= beta_row_tilde. Both scaled counts must be integers (within 1e-9).
CorruptionPlan generate_plan(index_t m, index_t p, index_t n, double beta_tilde,
                             double beta_row_tilde, const MagnitudeLaw& law,
                             std::uint64_t plan_seed);

// B = Bstar + corruptions; entries off the plan are bitwise equal to Bstar.
DenseTensor3 apply(const DenseTensor3& bstar, const CorruptionPlan& plan);

struct AdversarialInstance {
    DenseTensor3 b;
    DenseTensor3 x0;
    double q_suggested;
    CorruptionPlan plan;
};

// The no-progress construction for the masked variant: one corruption per row, all in
// column 0 (so beta = 1/(pn)), X0 equal to Xstar except at entry (0, 0, 0), and
// q just below 1 - beta (realized as 1 - beta - 1/(2 m p n)). The magnitude is
// doubled until every corrupted residual entry is flagged at iteration 0; failure
// after 40 doublings is an error.
AdversarialInstance adversarial_mqtrk(const DenseTensor3& a, const DenseTensor3& xstar,
                                      double magnitude);

nlohmann::ordered_json plan_json(const CorruptionPlan& plan);

// FNV-1a 64-bit hash over the canonical serialization (shape, positions, value bits);
// embedded in experiment CSVs for provenance.
std::uint64_t plan_hash(const CorruptionPlan& plan);

} // namespace qtrk
