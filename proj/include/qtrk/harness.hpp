#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "qtrk/corruption.hpp"
#include "qtrk/deblur.hpp"
#include "qtrk/solver.hpp"

namespace qtrk {

struct Cell {
    Variant variant;
    double q;
};

struct ExperimentConfig {
    index_t m = 0, l = 0, p = 0, n = 0;
    index_t trials = 20;
    index_t iters = 0;
    index_t record_every = 1;
    std::uint64_t seed = 0;
    std::filesystem::path out;
    std::vector<Cell> cells;
    std::vector<double> beta_tilde{0.0};
    std::vector<double> beta_row_tilde{0.0};
    MagnitudeLaw law{MagnitudeLaw::Kind::normal, 100.0, 20.0};
    int threads = 0; // 0 = library default
};

struct DeblurConfig {
    enum class Source { synthetic, pgm_dir, t3b };
    Source source = Source::synthetic;
    index_t synth_height = 32, synth_width = 32, synth_count = 4;
    std::uint64_t synth_seed = 99;
    std::filesystem::path frames_dir;
    std::filesystem::path input_t3b;
    index_t kernel_size = 5;
    double kernel_sigma = 1.0;
    index_t corruptions = 0;
    index_t corrupt_rows = 0;
    MagnitudeLaw law{MagnitudeLaw::Kind::abs_normal, 3.0, 2.0};
    std::vector<Cell> cells;
    index_t iters = 0;
    index_t record_every = 1;
    std::uint64_t seed = 0;
    std::filesystem::path out;
    bool export_frames = true;
};

// Flat "key = value" config text: one pair per line, '#' lines and blank lines
// ignored, duplicate or unknown keys rejected.
std::map<std::string, std::string> parse_kv_file(const std::filesystem::path& path);
ExperimentConfig parse_experiment_config(const std::filesystem::path& path);
DeblurConfig parse_deblur_config(const std::filesystem::path& path);

// Shortest round-trip decimal form, used for every floating-point value written to
// CSV so that re-runs are byte-identical and parsers recover the exact double.
std::string format_double(double v);

// Median with the lower-median convention: after sorting, the element at index
// (count - 1) / 2.
double lower_median(std::vector<double> values);

// Seed derivation, documented: trial seed = master ^ splitmix64(trial); within a
// trial, stream `salt` = trial_seed ^ splitmix64(salt). Salt 1 drives system
// generation, salt 2 the solver (shared by every cell so runs are seed-matched),
// and salt 1000 + g the corruption plan of grid point g.
std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial);
std::uint64_t stream_seed(std::uint64_t trial_seed_value, std::uint64_t salt);

struct CellSummary {
    index_t grid_index = 0;
    index_t cell_index = 0;
    Variant variant = Variant::trk;
    double q = 1.0;
    double beta_tilde = 0.0;
    double beta_row_tilde = 0.0;
    index_t trials_ok = 0;
    index_t trials_failed = 0;
    double final_median_rel_error = 0.0;
    double final_median_rel_residual = 0.0;
    index_t total_stalls = 0;
    double stall_rate = 0.0;
};

struct ExperimentOutcome {
    std::vector<CellSummary> summaries; // grid-major, then cell order
    std::filesystem::path out_dir;
};

// Runs the full grid: per trial a fresh Gaussian system (A, Xstar, X0) shared by
// every cell, per grid point a fresh corruption plan, every cell solving the same
// (A, B, X0) with the same solver seed. Writes one trace CSV per (grid, cell),
// median_curves.csv, and summary.csv into config.out. Per-trial cell failures are
// recorded and excluded from medians; the run continues.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

// Rate reports for trial 0's realized system and plans: one JSON object per
// (grid point, cell) with the spectral constants, the realized beta and beta_row,
// the rate values where their hypotheses hold, violation strings where they do not,
// and a vacuous flag when a computed rate is >= 1. Written to out/rates.json.
nlohmann::ordered_json rates_reports(const ExperimentConfig& config);

struct DeblurCellOutcome {
    Variant variant = Variant::trk;
    double q = 1.0;
    double final_rel_residual = 0.0;
    double final_rel_error = 0.0;
    double psnr = 0.0;
    index_t stalls = 0;
};

struct DeblurOutcome {
    std::vector<DeblurCellOutcome> cells;
    double baseline_rel_residual = 0.0;
    double baseline_psnr = 0.0;
    std::filesystem::path out_dir;
};

// Deblurring pipeline: loads frames, builds the Gaussian blur spec, draws one
// corruption plan on the system shape, runs every cell seed-matched, writes per-cell
// trace CSVs, deblur_metrics.json, and (optionally) PGM frame exports.
DeblurOutcome run_deblur_command(const DeblurConfig& config);

} // namespace qtrk
