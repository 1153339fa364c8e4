#include "qtrk/corruption.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <tuple>

#include "qtrk/solver.hpp"
#include "qtrk/tprod.hpp"

namespace qtrk {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    double value = 0.0;
    const auto* first = t.data();
    const auto* last = t.data() + t.size();
    const auto result = std::from_chars(first, last, value);
    if (result.ec != std::errc{} || result.ptr != last) {
        throw config_error("cannot parse " + what + ": '" + text + "'");
    }
    return value;
}

// Validates that a fractional parameter scales to an integer count (within 1e-9).
index_t integer_count(double product, const std::string& label) {
    const double rounded = std::round(product);
    if (std::abs(product - rounded) > 1e-9 || rounded < 0) {
        throw config_error(label + " = " + std::to_string(product) + " is not a whole count");
    }
    return static_cast<index_t>(rounded);
}

std::string format_double(double v) {
    char buf[64];
    const auto result = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, result.ptr);
}

} // namespace

MagnitudeLaw parse_law(const std::string& text) {
    const std::string t = trim(text);
    const auto open = t.find('(');
    const auto comma = t.find(',', open);
    const auto close = t.rfind(')');
    if (open == std::string::npos || comma == std::string::npos || close == std::string::npos ||
        close != t.size() - 1 || comma < open) {
        throw config_error("cannot parse magnitude law: '" + text +
                           "' (expected kind(mean,stddev))");
    }
    MagnitudeLaw law;
    const std::string kind = trim(t.substr(0, open));
    if (kind == "normal") {
        law.kind = MagnitudeLaw::Kind::normal;
    } else if (kind == "abs_normal") {
        law.kind = MagnitudeLaw::Kind::abs_normal;
    } else {
        throw config_error("unknown magnitude law kind: '" + kind + "'");
    }
    law.mean = parse_double(t.substr(open + 1, comma - open - 1), "law mean");
    law.stddev = parse_double(t.substr(comma + 1, close - comma - 1), "law stddev");
    if (!(law.stddev > 0.0)) throw config_error("magnitude law stddev must be positive");
    return law;
}

std::string law_label(const MagnitudeLaw& law) {
    const std::string kind = law.kind == MagnitudeLaw::Kind::normal ? "normal" : "abs_normal";
    return kind + "(" + format_double(law.mean) + "," + format_double(law.stddev) + ")";
}

double draw_law(const MagnitudeLaw& law, Rng& rng) {
    const double v = rng.normal(law.mean, law.stddev);
    return law.kind == MagnitudeLaw::Kind::abs_normal ? std::abs(v) : v;
}

CorruptionPlan::CorruptionPlan(index_t m, index_t p, index_t n,
                               std::vector<CorruptionEntry> entries)
    : m_(m), p_(p), n_(n), entries_(std::move(entries)) {
    if (m < 1 || p < 1 || n < 1) throw shape_error("corruption plan: bad shape");
    std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
        return std::tie(a.i, a.j, a.h) < std::tie(b.i, b.j, b.h);
    });
    const CorruptionEntry* prev = nullptr;
    for (const auto& e : entries_) {
        if (e.i < 0 || e.i >= m || e.j < 0 || e.j >= p || e.h < 0 || e.h >= n) {
            throw shape_error("corruption plan: entry index out of bounds");
        }
        if (prev != nullptr && prev->i == e.i && prev->j == e.j && prev->h == e.h) {
            throw shape_error("corruption plan: duplicate entry position");
        }
        prev = &e;
    }
}

double CorruptionPlan::beta() const {
    return static_cast<double>(entries_.size()) /
           (static_cast<double>(m_) * static_cast<double>(p_) * static_cast<double>(n_));
}

double CorruptionPlan::beta_row() const {
    return static_cast<double>(corrupted_rows().size()) / static_cast<double>(m_);
}

std::vector<index_t> CorruptionPlan::corrupted_rows() const {
    std::vector<index_t> rows;
    for (const auto& e : entries_) {
        if (rows.empty() || rows.back() != e.i) rows.push_back(e.i);
    }
    return rows;
}

std::vector<index_t> CorruptionPlan::uncorrupted_rows() const {
    const std::vector<index_t> bad = corrupted_rows();
    std::vector<index_t> rows;
    auto it = bad.begin();
    for (index_t i = 0; i < m_; ++i) {
        if (it != bad.end() && *it == i) {
            ++it;
        } else {
            rows.push_back(i);
        }
    }
    return rows;
}

std::vector<index_t> CorruptionPlan::corrupted_cols_in_row(index_t i) const {
    std::vector<index_t> cols;
    for (const auto& e : entries_) {
        if (e.i != i) continue;
        if (cols.empty() || cols.back() != e.j) {
            cols.push_back(e.j);
        }
    }
    return cols;
}

CorruptionPlan generate_plan(index_t m, index_t p, index_t n, double beta_tilde,
                             double beta_row_tilde, const MagnitudeLaw& law,
                             std::uint64_t plan_seed) {
    if (beta_tilde < 0.0 || beta_tilde > 1.0 || beta_row_tilde < 0.0 || beta_row_tilde > 1.0) {
        throw config_error("beta_tilde and beta_row_tilde must be in [0, 1]");
    }
    const index_t row_count = integer_count(beta_row_tilde * static_cast<double>(m),
                                            "beta_row_tilde * m");
    const index_t draw_count = integer_count(
        beta_tilde * static_cast<double>(m) * static_cast<double>(p) * static_cast<double>(n),
        "beta_tilde * m * p * n");
    if (draw_count > 0 && row_count == 0) {
        throw config_error("beta_tilde > 0 requires beta_row_tilde to select at least one row");
    }

    Rng rng(plan_seed);

    std::vector<index_t> candidates(static_cast<std::size_t>(m));
    for (index_t i = 0; i < m; ++i) candidates[static_cast<std::size_t>(i)] = i;
    for (index_t k = 0; k < row_count; ++k) {
        const index_t swap_with =
            k + static_cast<index_t>(rng.below(static_cast<std::uint64_t>(m - k)));
        std::swap(candidates[static_cast<std::size_t>(k)],
                  candidates[static_cast<std::size_t>(swap_with)]);
    }
    std::vector<index_t> rows(candidates.begin(), candidates.begin() + row_count);
    std::sort(rows.begin(), rows.end());

    struct Pos {
        index_t i, j, h;
        auto operator<=>(const Pos&) const = default;
    };
    std::vector<Pos> positions;
    positions.reserve(static_cast<std::size_t>(draw_count));
    const index_t grid = row_count * p * n;
    for (index_t d = 0; d < draw_count; ++d) {
        const index_t cell = static_cast<index_t>(rng.below(static_cast<std::uint64_t>(grid)));
        positions.push_back({rows[static_cast<std::size_t>(cell / (p * n))],
                             (cell % (p * n)) / n, cell % n});
    }
    std::sort(positions.begin(), positions.end());
    positions.erase(std::unique(positions.begin(), positions.end()), positions.end());

    std::vector<CorruptionEntry> entries;
    entries.reserve(positions.size());
    for (const Pos& pos : positions) {
        entries.push_back({pos.i, pos.j, pos.h, draw_law(law, rng)});
    }

    CorruptionPlan plan(m, p, n, std::move(entries));
    plan.seed = plan_seed;
    plan.law = law_label(law);
    return plan;
}

DenseTensor3 apply(const DenseTensor3& bstar, const CorruptionPlan& plan) {
    if (bstar.rows() != plan.m() || bstar.cols() != plan.p() || bstar.depth() != plan.n()) {
        throw shape_error("corruption apply: shape mismatch");
    }
    DenseTensor3 b = bstar;
    for (const auto& e : plan.entries()) b(e.i, e.j, e.h) += e.value;
    return b;
}

AdversarialInstance adversarial_mqtrk(const DenseTensor3& a, const DenseTensor3& xstar,
                                      double magnitude) {
    if (a.cols() != xstar.rows() || a.depth() != xstar.depth()) {
        throw shape_error("adversarial_mqtrk: A and Xstar do not conform");
    }
    if (!(magnitude > 0.0)) throw domain_error("adversarial_mqtrk: magnitude must be positive");
    const index_t m = a.rows();
    const index_t p = xstar.cols();
    const index_t n = a.depth();
    const double pn = static_cast<double>(p) * static_cast<double>(n);
    if (pn < 2.0) throw domain_error("adversarial_mqtrk: requires p * n >= 2");
    const double beta = 1.0 / pn;
    const double mpn = static_cast<double>(m) * pn;
    const double q = 1.0 - beta - 1.0 / (2.0 * mpn);
    if (!(q > 0.0)) throw domain_error("adversarial_mqtrk: suggested q not positive");

    const DenseTensor3 bstar = tprod(a, xstar);
    DenseTensor3 x0 = xstar;
    x0(0, 0, 0) += 1.0;

    double mag = magnitude;
    for (int attempt = 0; attempt < 40; ++attempt) {
        std::vector<CorruptionEntry> entries;
        entries.reserve(static_cast<std::size_t>(m));
        for (index_t i = 0; i < m; ++i) entries.push_back({i, 0, 0, mag});
        CorruptionPlan plan(m, p, n, std::move(entries));
        plan.law = "adversarial(" + std::to_string(mag) + ")";

        DenseTensor3 b = apply(bstar, plan);
        const DenseTensor3 e = residual(a, x0, b);
        const double threshold = q_quantile(e, q);
        bool all_flagged = true;
        for (index_t i = 0; i < m && all_flagged; ++i) {
            all_flagged = std::abs(e(i, 0, 0)) > threshold;
        }
        if (all_flagged) {
            return {std::move(b), x0, q, std::move(plan)};
        }
        mag *= 2.0;
    }
    throw numerical_error(
        "adversarial_mqtrk: flagging dominance unreachable after 40 magnitude doublings");
}

nlohmann::ordered_json plan_json(const CorruptionPlan& plan) {
    nlohmann::ordered_json j;
    j["m"] = plan.m();
    j["p"] = plan.p();
    j["n"] = plan.n();
    if (plan.seed.has_value()) j["seed"] = *plan.seed;
    if (plan.law.has_value()) j["law"] = *plan.law;
    auto entries = nlohmann::ordered_json::array();
    for (const auto& e : plan.entries()) {
        entries.push_back({e.i, e.j, e.h, e.value});
    }
    j["entries"] = std::move(entries);
    return j;
}

std::uint64_t plan_hash(const CorruptionPlan& plan) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    const auto mix = [&hash](std::uint64_t word) {
        for (int b = 0; b < 8; ++b) {
            hash ^= (word >> (8 * b)) & 0xffu;
            hash *= 0x100000001b3ull;
        }
    };
    mix(static_cast<std::uint64_t>(plan.m()));
    mix(static_cast<std::uint64_t>(plan.p()));
    mix(static_cast<std::uint64_t>(plan.n()));
    mix(static_cast<std::uint64_t>(plan.entries().size()));
    for (const auto& e : plan.entries()) {
        mix(static_cast<std::uint64_t>(e.i));
        mix(static_cast<std::uint64_t>(e.j));
        mix(static_cast<std::uint64_t>(e.h));
        mix(std::bit_cast<std::uint64_t>(e.value));
    }
    return hash;
}

} // namespace qtrk
