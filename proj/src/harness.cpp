#include "qtrk/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include <omp.h>

#include "qtrk/spectral.hpp"
#include "qtrk/tprod.hpp"

namespace qtrk {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double_value(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    double value = 0.0;
    const auto result = std::from_chars(t.data(), t.data() + t.size(), value);
    if (result.ec != std::errc{} || result.ptr != t.data() + t.size()) {
        throw config_error("cannot parse " + what + ": '" + text + "'");
    }
    return value;
}

index_t parse_index_value(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    index_t value = 0;
    const auto result = std::from_chars(t.data(), t.data() + t.size(), value);
    if (result.ec != std::errc{} || result.ptr != t.data() + t.size()) {
        throw config_error("cannot parse " + what + ": '" + text + "'");
    }
    return value;
}

std::uint64_t parse_u64_value(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    std::uint64_t value = 0;
    const auto result = std::from_chars(t.data(), t.data() + t.size(), value);
    if (result.ec != std::errc{} || result.ptr != t.data() + t.size()) {
        throw config_error("cannot parse " + what + ": '" + text + "'");
    }
    return value;
}

bool parse_bool_value(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw config_error("cannot parse " + what + ": '" + text + "' (expected true/false)");
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = text.find(sep, start);
        if (pos == std::string::npos) {
            parts.push_back(text.substr(start));
            return parts;
        }
        parts.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
    std::vector<double> values;
    for (const std::string& part : split(text, ',')) {
        values.push_back(parse_double_value(part, what));
    }
    if (values.empty()) throw config_error(what + " must list at least one value");
    return values;
}

std::vector<Cell> parse_cells(const std::string& text) {
    std::vector<Cell> cells;
    for (const std::string& part : split(text, ',')) {
        const std::string t = trim(part);
        const auto colon = t.find(':');
        Cell cell;
        if (colon == std::string::npos) {
            cell.variant = parse_variant(t);
            cell.q = 1.0;
        } else {
            cell.variant = parse_variant(trim(t.substr(0, colon)));
            cell.q = parse_double_value(t.substr(colon + 1), "cell quantile");
        }
        if (!(cell.q > 0.0) || cell.q > 1.0) {
            throw config_error("cell quantile must be in (0, 1]: " + t);
        }
        cells.push_back(cell);
    }
    if (cells.empty()) throw config_error("cells must list at least one variant");
    return cells;
}

// Tracks which keys a parser consumed so leftovers can be reported as unknown.
class KvReader {
public:
    explicit KvReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string require(const std::string& key) {
        auto it = kv_.find(key);
        if (it == kv_.end()) throw config_error("missing required config key '" + key + "'");
        used_.insert(key);
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        return it->second;
    }

    void finish() const {
        for (const auto& [key, value] : kv_) {
            if (used_.count(key) == 0) {
                throw config_error("unknown config key '" + key + "'");
            }
        }
    }

private:
    std::map<std::string, std::string> kv_;
    std::set<std::string> used_;
};

std::string hash_hex(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int pos = 15; pos >= 0; --pos) {
        out[static_cast<std::size_t>(pos)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::string sanitize_message(std::string message) {
    for (char& c : message) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return message;
}

std::ofstream open_text(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw config_error("cannot open output file: " + path.string());
    return os;
}

struct CellTrialResult {
    bool ok = false;
    std::string error;
    std::vector<TraceRow> trace;
    index_t stalls = 0;
    double wall_seconds = 0.0;
};

struct TrialData {
    std::vector<std::uint64_t> plan_hashes;          // per grid point
    std::vector<std::vector<CellTrialResult>> cells; // [grid][cell]
};

std::string trace_file_name(index_t g, index_t c, const Cell& cell) {
    return "trace_g" + std::to_string(g) + "_c" + std::to_string(c) + "_" +
           variant_name(cell.variant) + "_q" + format_double(cell.q) + ".csv";
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    const auto result = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, result.ptr);
}

double lower_median(std::vector<double> values) {
    if (values.empty()) throw domain_error("median of empty set");
    std::sort(values.begin(), values.end());
    return values[(values.size() - 1) / 2];
}

std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial) {
    return Rng::split_seed(master, trial);
}

std::uint64_t stream_seed(std::uint64_t trial_seed_value, std::uint64_t salt) {
    return Rng::split_seed(trial_seed_value, salt);
}

std::map<std::string, std::string> parse_kv_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open config file: " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    index_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw config_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected 'key = value'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw config_error(path.string() + ":" + std::to_string(lineno) + ": empty key");
        }
        if (!kv.emplace(key, value).second) {
            throw config_error(path.string() + ":" + std::to_string(lineno) +
                               ": duplicate key '" + key + "'");
        }
    }
    return kv;
}

ExperimentConfig parse_experiment_config(const std::filesystem::path& path) {
    KvReader kv(parse_kv_file(path));
    ExperimentConfig cfg;
    cfg.m = parse_index_value(kv.require("m"), "m");
    cfg.l = parse_index_value(kv.require("l"), "l");
    cfg.p = parse_index_value(kv.require("p"), "p");
    cfg.n = parse_index_value(kv.require("n"), "n");
    cfg.iters = parse_index_value(kv.require("iters"), "iters");
    cfg.cells = parse_cells(kv.require("cells"));
    cfg.out = kv.require("out");
    cfg.trials = parse_index_value(kv.get_or("trials", "20"), "trials");
    cfg.record_every = parse_index_value(kv.get_or("record_every", "1"), "record_every");
    cfg.seed = parse_u64_value(kv.get_or("seed", "0"), "seed");
    cfg.beta_tilde = parse_double_list(kv.get_or("beta_tilde", "0"), "beta_tilde");
    cfg.beta_row_tilde = parse_double_list(kv.get_or("beta_row_tilde", "0"), "beta_row_tilde");
    cfg.law = parse_law(kv.get_or("law", "normal(100,20)"));
    cfg.threads = static_cast<int>(parse_index_value(kv.get_or("threads", "0"), "threads"));
    kv.finish();

    if (cfg.m < 1 || cfg.l < 1 || cfg.p < 1 || cfg.n < 1) {
        throw config_error("system dimensions must be positive");
    }
    if (cfg.trials < 1) throw config_error("trials must be >= 1");
    if (cfg.iters < 1) throw config_error("iters must be >= 1");
    if (cfg.record_every < 1) throw config_error("record_every must be >= 1");
    if (cfg.threads < 0) throw config_error("threads must be >= 0");
    if (cfg.out.empty()) throw config_error("out must not be empty");
    // Exercises the corruption-count validation for every grid point up front.
    for (double bt : cfg.beta_tilde) {
        for (double brt : cfg.beta_row_tilde) {
            generate_plan(cfg.m, cfg.p, cfg.n, bt, brt, cfg.law, 0);
        }
    }
    return cfg;
}

DeblurConfig parse_deblur_config(const std::filesystem::path& path) {
    KvReader kv(parse_kv_file(path));
    DeblurConfig cfg;
    int sources = 0;
    if (kv.has("synthetic")) {
        const std::string spec = kv.require("synthetic");
        const auto parts = split(spec, 'x');
        if (parts.size() != 3) {
            throw config_error("synthetic must be <height>x<width>x<frames>: '" + spec + "'");
        }
        cfg.source = DeblurConfig::Source::synthetic;
        cfg.synth_height = parse_index_value(parts[0], "synthetic height");
        cfg.synth_width = parse_index_value(parts[1], "synthetic width");
        cfg.synth_count = parse_index_value(parts[2], "synthetic frame count");
        ++sources;
    }
    if (kv.has("frames_dir")) {
        cfg.source = DeblurConfig::Source::pgm_dir;
        cfg.frames_dir = kv.require("frames_dir");
        ++sources;
    }
    if (kv.has("input_t3b")) {
        cfg.source = DeblurConfig::Source::t3b;
        cfg.input_t3b = kv.require("input_t3b");
        ++sources;
    }
    if (sources != 1) {
        throw config_error("exactly one of synthetic, frames_dir, input_t3b must be given");
    }
    cfg.synth_seed = parse_u64_value(kv.get_or("synth_seed", "99"), "synth_seed");
    cfg.kernel_size = parse_index_value(kv.get_or("kernel_size", "5"), "kernel_size");
    cfg.kernel_sigma = parse_double_value(kv.get_or("kernel_sigma", "1.0"), "kernel_sigma");
    cfg.corruptions = parse_index_value(kv.get_or("corruptions", "0"), "corruptions");
    cfg.corrupt_rows = parse_index_value(kv.get_or("corrupt_rows", "0"), "corrupt_rows");
    cfg.law = parse_law(kv.get_or("law", "abs_normal(3,2)"));
    cfg.cells = parse_cells(kv.require("cells"));
    cfg.iters = parse_index_value(kv.require("iters"), "iters");
    cfg.record_every = parse_index_value(kv.get_or("record_every", "1"), "record_every");
    cfg.seed = parse_u64_value(kv.get_or("seed", "0"), "seed");
    cfg.out = kv.require("out");
    cfg.export_frames = parse_bool_value(kv.get_or("export_frames", "true"), "export_frames");
    kv.finish();

    if (cfg.kernel_size < 1) throw config_error("kernel_size must be >= 1");
    if (!(cfg.kernel_sigma > 0.0)) throw config_error("kernel_sigma must be positive");
    if (cfg.corruptions < 0 || cfg.corrupt_rows < 0) {
        throw config_error("corruptions and corrupt_rows must be >= 0");
    }
    if (cfg.iters < 1) throw config_error("iters must be >= 1");
    if (cfg.record_every < 1) throw config_error("record_every must be >= 1");
    return cfg;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
    if (config.threads > 0) omp_set_num_threads(config.threads);
    std::filesystem::create_directories(config.out);

    const index_t grid_count =
        static_cast<index_t>(config.beta_tilde.size() * config.beta_row_tilde.size());
    const index_t cell_count = static_cast<index_t>(config.cells.size());
    const auto grid_beta = [&](index_t g) {
        return config.beta_tilde[static_cast<std::size_t>(g) / config.beta_row_tilde.size()];
    };
    const auto grid_beta_row = [&](index_t g) {
        return config.beta_row_tilde[static_cast<std::size_t>(g) % config.beta_row_tilde.size()];
    };

    std::vector<TrialData> trials(static_cast<std::size_t>(config.trials));

#pragma omp parallel for schedule(dynamic)
    for (index_t t = 0; t < config.trials; ++t) {
        TrialData& data = trials[static_cast<std::size_t>(t)];
        data.plan_hashes.assign(static_cast<std::size_t>(grid_count), 0);
        data.cells.assign(static_cast<std::size_t>(grid_count),
                          std::vector<CellTrialResult>(static_cast<std::size_t>(cell_count)));
        std::string fatal;
        try {
            const std::uint64_t ts = trial_seed(config.seed, static_cast<std::uint64_t>(t));
            Rng system_rng(stream_seed(ts, 1));
            const DenseTensor3 a = gaussian_tensor(config.m, config.l, config.n, system_rng);
            const DenseTensor3 xstar = gaussian_tensor(config.l, config.p, config.n, system_rng);
            const DenseTensor3 x0 = gaussian_tensor(config.l, config.p, config.n, system_rng);
            const DenseTensor3 bstar = tprod(a, xstar);
            const std::uint64_t solver_seed = stream_seed(ts, 2);

            for (index_t g = 0; g < grid_count; ++g) {
                const CorruptionPlan plan =
                    generate_plan(config.m, config.p, config.n, grid_beta(g), grid_beta_row(g),
                                  config.law, stream_seed(ts, 1000 + static_cast<std::uint64_t>(g)));
                data.plan_hashes[static_cast<std::size_t>(g)] = plan_hash(plan);
                const DenseTensor3 b = apply(bstar, plan);

                for (index_t c = 0; c < cell_count; ++c) {
                    CellTrialResult& slot =
                        data.cells[static_cast<std::size_t>(g)][static_cast<std::size_t>(c)];
                    const Cell& cell = config.cells[static_cast<std::size_t>(c)];
                    SolverConfig solver_config;
                    solver_config.variant = cell.variant;
                    solver_config.q = cell.q;
                    solver_config.max_iters = config.iters;
                    solver_config.seed = solver_seed;
                    solver_config.record_every = config.record_every;
                    const auto start = std::chrono::steady_clock::now();
                    try {
                        SolveResult result = solve(a, b, solver_config, &xstar, x0);
                        slot.trace = std::move(result.record.trace);
                        slot.stalls = result.record.stall_iterations;
                        slot.ok = true;
                    } catch (const error& e) {
                        slot.error = sanitize_message(e.what());
                    }
                    slot.wall_seconds =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                            .count();
                }
            }
        } catch (const std::exception& e) {
            fatal = sanitize_message(e.what());
        }
        if (!fatal.empty()) {
            for (auto& grid_cells : data.cells) {
                for (auto& slot : grid_cells) {
                    if (!slot.ok && slot.error.empty()) slot.error = fatal;
                }
            }
        }
    }

    ExperimentOutcome outcome;
    outcome.out_dir = config.out;

    std::ofstream timings = open_text(config.out / "timings.txt");
    std::ofstream curves = open_text(config.out / "median_curves.csv");
    curves << "grid,cell,variant,q,beta_tilde,beta_row_tilde,iter,median_rel_error,"
              "median_rel_residual\n";
    std::ofstream summary = open_text(config.out / "summary.csv");
    summary << "grid,cell,variant,q,beta_tilde,beta_row_tilde,law,trials_ok,trials_failed,"
               "final_median_rel_error,final_median_rel_residual,total_stalls,stall_rate\n";

    for (index_t g = 0; g < grid_count; ++g) {
        for (index_t c = 0; c < cell_count; ++c) {
            const Cell& cell = config.cells[static_cast<std::size_t>(c)];
            std::ofstream trace = open_text(config.out / trace_file_name(g, c, cell));
            trace << "# cell variant=" << variant_name(cell.variant) << " q="
                  << format_double(cell.q) << " beta_tilde=" << format_double(grid_beta(g))
                  << " beta_row_tilde=" << format_double(grid_beta_row(g))
                  << " law=" << law_label(config.law) << "\n";
            for (index_t t = 0; t < config.trials; ++t) {
                trace << "# plan_hash " << t << " "
                      << hash_hex(trials[static_cast<std::size_t>(t)]
                                      .plan_hashes[static_cast<std::size_t>(g)])
                      << "\n";
            }
            for (index_t t = 0; t < config.trials; ++t) {
                const CellTrialResult& slot = trials[static_cast<std::size_t>(t)]
                                                  .cells[static_cast<std::size_t>(g)]
                                                       [static_cast<std::size_t>(c)];
                if (!slot.ok) {
                    trace << "# trial_error " << t << " " << slot.error << "\n";
                }
            }
            trace << "trial,iter,rel_error,rel_residual,stalls_so_far\n";

            CellSummary cs;
            cs.grid_index = g;
            cs.cell_index = c;
            cs.variant = cell.variant;
            cs.q = cell.q;
            cs.beta_tilde = grid_beta(g);
            cs.beta_row_tilde = grid_beta_row(g);

            std::size_t trace_len = 0;
            double wall_sum = 0.0;
            for (index_t t = 0; t < config.trials; ++t) {
                const CellTrialResult& slot = trials[static_cast<std::size_t>(t)]
                                                  .cells[static_cast<std::size_t>(g)]
                                                       [static_cast<std::size_t>(c)];
                wall_sum += slot.wall_seconds;
                if (!slot.ok) {
                    ++cs.trials_failed;
                    continue;
                }
                ++cs.trials_ok;
                cs.total_stalls += slot.stalls;
                trace_len = slot.trace.size();
                for (const TraceRow& row : slot.trace) {
                    trace << t << "," << row.iter << "," << format_double(row.rel_error) << ","
                          << format_double(row.rel_residual) << "," << row.stalls_so_far << "\n";
                }
            }

            for (std::size_t r = 0; r < trace_len; ++r) {
                std::vector<double> errs, resids;
                index_t iter = 0;
                for (index_t t = 0; t < config.trials; ++t) {
                    const CellTrialResult& slot = trials[static_cast<std::size_t>(t)]
                                                      .cells[static_cast<std::size_t>(g)]
                                                           [static_cast<std::size_t>(c)];
                    if (!slot.ok) continue;
                    iter = slot.trace[r].iter;
                    errs.push_back(slot.trace[r].rel_error);
                    resids.push_back(slot.trace[r].rel_residual);
                }
                if (errs.empty()) continue;
                curves << g << "," << c << "," << variant_name(cell.variant) << ","
                       << format_double(cell.q) << "," << format_double(grid_beta(g)) << ","
                       << format_double(grid_beta_row(g)) << "," << iter << ","
                       << format_double(lower_median(errs)) << ","
                       << format_double(lower_median(resids)) << "\n";
                if (r + 1 == trace_len) {
                    cs.final_median_rel_error = lower_median(errs);
                    cs.final_median_rel_residual = lower_median(resids);
                }
            }
            if (cs.trials_ok == 0) {
                cs.final_median_rel_error = std::numeric_limits<double>::quiet_NaN();
                cs.final_median_rel_residual = std::numeric_limits<double>::quiet_NaN();
            }
            cs.stall_rate = cs.trials_ok > 0
                                ? static_cast<double>(cs.total_stalls) /
                                      (static_cast<double>(cs.trials_ok) *
                                       static_cast<double>(config.iters))
                                : 0.0;

            // The law label contains a comma, so the field is RFC 4180 quoted.
            summary << g << "," << c << "," << variant_name(cell.variant) << ","
                    << format_double(cell.q) << "," << format_double(cs.beta_tilde) << ","
                    << format_double(cs.beta_row_tilde) << ",\"" << law_label(config.law)
                    << "\"," << cs.trials_ok << "," << cs.trials_failed << ","
                    << format_double(cs.final_median_rel_error) << ","
                    << format_double(cs.final_median_rel_residual) << "," << cs.total_stalls
                    << "," << format_double(cs.stall_rate) << "\n";
            timings << "g" << g << " c" << c << " " << variant_name(cell.variant) << " q="
                    << format_double(cell.q) << " wall_seconds_sum=" << wall_sum << "\n";

            outcome.summaries.push_back(cs);
        }
    }
    return outcome;
}

nlohmann::ordered_json rates_reports(const ExperimentConfig& config) {
    std::filesystem::create_directories(config.out);
    const index_t grid_count =
        static_cast<index_t>(config.beta_tilde.size() * config.beta_row_tilde.size());
    const auto grid_beta = [&](index_t g) {
        return config.beta_tilde[static_cast<std::size_t>(g) / config.beta_row_tilde.size()];
    };
    const auto grid_beta_row = [&](index_t g) {
        return config.beta_row_tilde[static_cast<std::size_t>(g) % config.beta_row_tilde.size()];
    };

    const std::uint64_t ts = trial_seed(config.seed, 0);
    Rng system_rng(stream_seed(ts, 1));
    const DenseTensor3 a = gaussian_tensor(config.m, config.l, config.n, system_rng);
    const SingularExtremes extremes = bcirc_singular_extremes(a);
    const double eta_value = eta(a);

    auto items = nlohmann::ordered_json::array();
    for (index_t g = 0; g < grid_count; ++g) {
        const CorruptionPlan plan =
            generate_plan(config.m, config.p, config.n, grid_beta(g), grid_beta_row(g),
                          config.law, stream_seed(ts, 1000 + static_cast<std::uint64_t>(g)));
        const double beta = plan.beta();
        const double beta_row = plan.beta_row();
        const std::vector<index_t> clean_rows = plan.uncorrupted_rows();

        for (std::size_t c = 0; c < config.cells.size(); ++c) {
            const Cell& cell = config.cells[c];
            nlohmann::ordered_json item;
            item["grid"] = g;
            item["cell"] = c;
            item["variant"] = variant_name(cell.variant);
            item["beta_tilde"] = grid_beta(g);
            item["beta_row_tilde"] = grid_beta_row(g);
            item["plan_hash"] = hash_hex(plan_hash(plan));

            auto violations = nlohmann::ordered_json::array();
            nlohmann::ordered_json report;
            report["sigma_max_bcirc"] = extremes.sigma_max;
            report["eta"] = eta_value;

            double sigma_min_proj = std::numeric_limits<double>::quiet_NaN();
            bool have_sigma_min = false;
            try {
                sigma_min_proj = expected_projector_sigma_min(a, clean_rows);
                report["sigma_min_expected_projector"] = sigma_min_proj;
                have_sigma_min = true;
            } catch (const error& e) {
                violations.push_back(std::string(e.what()));
            }
            report["beta"] = beta;
            report["beta_row"] = beta_row;
            report["q"] = cell.q;

            bool vacuous = false;
            RateInputs inputs{config.m, extremes.sigma_max, eta_value,
                              sigma_min_proj, beta,          beta_row,
                              cell.q};
            if (have_sigma_min) {
                try {
                    const double r = rate_qtrk(inputs);
                    report["rate_qtrk"] = r;
                    if (r >= 1.0) vacuous = true;
                } catch (const error& e) {
                    violations.push_back(std::string(e.what()));
                }
                if (cell.variant == Variant::mqtrk) {
                    try {
                        const double rm = rate_mqtrk(inputs, config.p, config.n);
                        report["rate_mqtrk"] = rm;
                        if (rm >= 1.0) vacuous = true;
                    } catch (const error& e) {
                        violations.push_back(std::string(e.what()));
                    }
                }
            }
            item["report"] = std::move(report);
            item["vacuous"] = vacuous;
            item["violations"] = std::move(violations);
            items.push_back(std::move(item));
        }
    }

    std::ofstream os = open_text(config.out / "rates.json");
    os << items.dump(2) << "\n";
    return items;
}

DeblurOutcome run_deblur_command(const DeblurConfig& config) {
    std::filesystem::create_directories(config.out);

    VideoFrames frames;
    switch (config.source) {
        case DeblurConfig::Source::synthetic:
            frames = synthetic_frames(config.synth_height, config.synth_width,
                                      config.synth_count, config.synth_seed);
            break;
        case DeblurConfig::Source::pgm_dir:
            frames = read_pgm_dir(config.frames_dir);
            break;
        case DeblurConfig::Source::t3b:
            frames = tensor_to_video(read_t3b(config.input_t3b));
            break;
    }

    const BlurSpec spec = make_blur_spec(gaussian_kernel(config.kernel_size, config.kernel_sigma));

    // System tensor is width x frames x height after reordering.
    const index_t sys_m = frames.width;
    const index_t sys_p = static_cast<index_t>(frames.frames.size());
    const index_t sys_n = frames.height;
    const double grid = static_cast<double>(sys_m) * static_cast<double>(sys_p) *
                        static_cast<double>(sys_n);
    const double beta_tilde = static_cast<double>(config.corruptions) / grid;
    const double beta_row_tilde =
        static_cast<double>(config.corrupt_rows) / static_cast<double>(sys_m);
    const std::uint64_t ts = trial_seed(config.seed, 0);
    const CorruptionPlan plan = generate_plan(sys_m, sys_p, sys_n, beta_tilde, beta_row_tilde,
                                              config.law, stream_seed(ts, 3));
    const std::uint64_t solver_seed = stream_seed(ts, 2);

    DeblurOutcome outcome;
    outcome.out_dir = config.out;

    nlohmann::ordered_json metrics;
    metrics["plan_hash"] = hash_hex(plan_hash(plan));
    metrics["plan"] = plan_json(plan);
    auto cell_metrics = nlohmann::ordered_json::array();

    const index_t shift = config.kernel_size / 2;
    bool exported_static = false;
    for (std::size_t c = 0; c < config.cells.size(); ++c) {
        const Cell& cell = config.cells[c];
        SolverConfig solver_config;
        solver_config.variant = cell.variant;
        solver_config.q = cell.q;
        solver_config.max_iters = config.iters;
        solver_config.seed = solver_seed;
        solver_config.record_every = config.record_every;

        const DeblurResult result = run_deblur(frames, spec, plan, solver_config);

        const std::string label = variant_name(cell.variant) + "_q" + format_double(cell.q);
        std::ofstream trace = open_text(config.out / ("deblur_" + label + ".csv"));
        trace << "# cell variant=" << variant_name(cell.variant) << " q="
              << format_double(cell.q) << " kernel_size=" << config.kernel_size
              << " kernel_sigma=" << format_double(config.kernel_sigma)
              << " law=" << law_label(config.law) << "\n";
        trace << "# plan_hash 0 " << hash_hex(plan_hash(plan)) << "\n";
        trace << "trial,iter,rel_error,rel_residual,stalls_so_far\n";
        for (const TraceRow& row : result.record.trace) {
            trace << 0 << "," << row.iter << "," << format_double(row.rel_error) << ","
                  << format_double(row.rel_residual) << "," << row.stalls_so_far << "\n";
        }

        DeblurCellOutcome cell_outcome;
        cell_outcome.variant = cell.variant;
        cell_outcome.q = cell.q;
        cell_outcome.final_rel_residual = result.record.trace.back().rel_residual;
        cell_outcome.final_rel_error = result.record.trace.back().rel_error;
        cell_outcome.psnr = result.psnr_recovered;
        cell_outcome.stalls = result.record.stall_iterations;
        outcome.cells.push_back(cell_outcome);
        outcome.baseline_rel_residual = result.baseline_rel_residual;
        outcome.baseline_psnr = result.psnr_baseline;

        nlohmann::ordered_json mj;
        mj["variant"] = variant_name(cell.variant);
        mj["q"] = cell.q;
        mj["final_rel_residual"] = cell_outcome.final_rel_residual;
        mj["final_rel_error"] = cell_outcome.final_rel_error;
        mj["psnr_uncorrupted_rows"] = cell_outcome.psnr;
        mj["stall_iterations"] = cell_outcome.stalls;
        cell_metrics.push_back(std::move(mj));

        if (config.export_frames) {
            const std::filesystem::path frame_dir = config.out / "frames";
            std::filesystem::create_directories(frame_dir);
            const auto frame_index = [](std::size_t t) {
                std::string idx = std::to_string(t);
                while (idx.size() < 3) idx.insert(idx.begin(), '0');
                return idx;
            };
            for (std::size_t t = 0; t < result.recovered.frames.size(); ++t) {
                write_pgm(frame_dir / ("recovered_" + label + "_" + frame_index(t) + ".pgm"),
                          result.recovered.frames[t]);
            }
            if (!exported_static) {
                // Blur is circular, so undo the kernel's corner anchoring for display.
                const VideoFrames blurred =
                    tensor_to_video(reorder_from_system(result.blurred_system));
                const VideoFrames corrupted =
                    tensor_to_video(reorder_from_system(result.corrupted_system));
                for (std::size_t t = 0; t < frames.frames.size(); ++t) {
                    const std::string idx = frame_index(t);
                    write_pgm(frame_dir / ("original_" + idx + ".pgm"), frames.frames[t]);
                    write_pgm(frame_dir / ("blurred_" + idx + ".pgm"),
                              roll_frame(blurred.frames[t], -shift, -shift));
                    write_pgm(frame_dir / ("corrupted_" + idx + ".pgm"),
                              roll_frame(corrupted.frames[t], -shift, -shift));
                    write_pgm(frame_dir / ("baseline_" + idx + ".pgm"),
                              result.baseline.frames[t]);
                }
                exported_static = true;
            }
        }
    }

    metrics["baseline"] = {{"rel_residual", outcome.baseline_rel_residual},
                           {"psnr_uncorrupted_rows", outcome.baseline_psnr}};
    metrics["cells"] = std::move(cell_metrics);
    std::ofstream os = open_text(config.out / "deblur_metrics.json");
    os << metrics.dump(2) << "\n";
    return outcome;
}

} // namespace qtrk
