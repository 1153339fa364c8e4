#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qtrk/corruption.hpp"
#include "qtrk/harness.hpp"
#include "qtrk/rng.hpp"
#include "qtrk/solver.hpp"
#include "qtrk/spectral.hpp"
#include "qtrk/tensor.hpp"
#include "qtrk/tprod.hpp"

using namespace qtrk;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("qtrk_harness_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& name,
                                   const std::string& text) {
    const auto path = dir / name;
    std::ofstream(path) << text;
    return path;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(static_cast<bool>(is));
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream is(path);
    REQUIRE(static_cast<bool>(is));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return lines;
}

// Minimal RFC 4180 splitting: commas inside double-quoted fields do not separate.
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == ',' && !quoted) {
            out.push_back(field);
            field.clear();
        } else {
            field.push_back(ch);
        }
    }
    out.push_back(field);
    return out;
}

double parse_exact(const std::string& text) {
    return std::strtod(text.c_str(), nullptr);
}

} // namespace

TEST_CASE("kv files parse pairs and reject malformed lines") {
    TempDir dir("kv");
    const auto good = write_config(dir.path, "good.cfg",
                                   "# comment\n"
                                   "\n"
                                   "alpha = 1\n"
                                   "  beta=two words  \n"
                                   "gamma =\n");
    const auto kv = parse_kv_file(good);
    CHECK(kv.size() == 3);
    CHECK(kv.at("alpha") == "1");
    CHECK(kv.at("beta") == "two words");
    CHECK(kv.at("gamma") == "");

    const auto dup = write_config(dir.path, "dup.cfg", "a = 1\na = 2\n");
    CHECK_THROWS_WITH_AS(parse_kv_file(dup), doctest::Contains("duplicate key 'a'"),
                         config_error);
    const auto noeq = write_config(dir.path, "noeq.cfg", "a = 1\njust text\n");
    CHECK_THROWS_WITH_AS(parse_kv_file(noeq), doctest::Contains(":2:"), config_error);
    const auto nokey = write_config(dir.path, "nokey.cfg", "= 1\n");
    CHECK_THROWS_WITH_AS(parse_kv_file(nokey), doctest::Contains("empty key"), config_error);
    CHECK_THROWS_AS(parse_kv_file(dir.path / "missing.cfg"), config_error);
}

TEST_CASE("experiment config applies defaults and validates") {
    TempDir dir("expcfg");
    const std::string base = "m = 6\nl = 3\np = 2\nn = 4\niters = 30\n"
                             "cells = trk,qtrk:0.875\nout = " +
                             (dir.path / "out").string() + "\n";
    const ExperimentConfig config = parse_experiment_config(write_config(dir.path, "a.cfg", base));
    CHECK(config.m == 6);
    CHECK(config.l == 3);
    CHECK(config.p == 2);
    CHECK(config.n == 4);
    CHECK(config.iters == 30);
    CHECK(config.trials == 20);
    CHECK(config.record_every == 1);
    CHECK(config.seed == 0);
    CHECK(config.threads == 0);
    CHECK(config.beta_tilde == std::vector<double>{0.0});
    CHECK(config.beta_row_tilde == std::vector<double>{0.0});
    CHECK(law_label(config.law) == "normal(100,20)");
    REQUIRE(config.cells.size() == 2);
    CHECK(config.cells[0].variant == Variant::trk);
    CHECK(config.cells[0].q == 1.0);
    CHECK(config.cells[1].variant == Variant::qtrk);
    CHECK(config.cells[1].q == 0.875);

    CHECK_THROWS_WITH_AS(
        parse_experiment_config(write_config(dir.path, "b.cfg", base + "bogus = 1\n")),
        doctest::Contains("unknown config key"), config_error);
    CHECK_THROWS_AS(
        parse_experiment_config(write_config(dir.path, "c.cfg", "l = 3\np = 2\nn = 4\n")),
        config_error);
    CHECK_THROWS_AS(parse_experiment_config(write_config(
                        dir.path, "d.cfg", base + "beta_tilde = nope\n")),
                    config_error);

    // Cell q outside (0, 1] and malformed specs fail at parse time.
    std::string bad_cells = base;
    bad_cells.replace(bad_cells.find("trk,qtrk:0.875"), 14, "qtrk:1.5");
    CHECK_THROWS_AS(parse_experiment_config(write_config(dir.path, "e.cfg", bad_cells)),
                    config_error);
    std::string unknown_variant = base;
    unknown_variant.replace(unknown_variant.find("trk,qtrk:0.875"), 14, "qrk");
    CHECK_THROWS_AS(parse_experiment_config(write_config(dir.path, "f.cfg", unknown_variant)),
                    config_error);

    // Fractional corruption budgets are rejected before any run starts.
    CHECK_THROWS_WITH_AS(
        parse_experiment_config(write_config(
            dir.path, "g.cfg", base + "beta_tilde = 0.0203\nbeta_row_tilde = 0.5\n")),
        doctest::Contains("beta_tilde * m * p * n"), config_error);
    CHECK_THROWS_WITH_AS(
        parse_experiment_config(write_config(
            dir.path, "h.cfg", base + "beta_tilde = 0.125\nbeta_row_tilde = 0.3\n")),
        doctest::Contains("beta_row_tilde * m"), config_error);
}

TEST_CASE("deblur config requires exactly one frame source") {
    TempDir dir("deblurcfg");
    const std::string tail = "cells = qtrk:0.97\niters = 50\nout = " +
                             (dir.path / "out").string() + "\n";
    const DeblurConfig config = parse_deblur_config(
        write_config(dir.path, "a.cfg", "synthetic = 12x10x3\n" + tail));
    CHECK(config.source == DeblurConfig::Source::synthetic);
    CHECK(config.synth_height == 12);
    CHECK(config.synth_width == 10);
    CHECK(config.synth_count == 3);
    CHECK(config.synth_seed == 99);
    CHECK(config.kernel_size == 5);
    CHECK(config.kernel_sigma == 1.0);
    CHECK(config.corruptions == 0);
    CHECK(config.corrupt_rows == 0);
    CHECK(law_label(config.law) == "abs_normal(3,2)");
    CHECK(config.export_frames);

    CHECK_THROWS_AS(parse_deblur_config(write_config(dir.path, "b.cfg", tail)), config_error);
    CHECK_THROWS_AS(parse_deblur_config(write_config(
                        dir.path, "c.cfg",
                        "synthetic = 12x10x3\nframes_dir = /tmp/frames\n" + tail)),
                    config_error);
    CHECK_THROWS_AS(parse_deblur_config(write_config(dir.path, "d.cfg",
                                                     "synthetic = 12x10\n" + tail)),
                    config_error);
}

TEST_CASE("format_double round trips every written value") {
    const double values[] = {0.0,   1.0,        2.0,      -2.5,      0.1,  1.0 / 3.0,
                             1e300, 1.25e-300,  123456.75, -0.000091, 1e-9, 9.87654321e8};
    for (double v : values) {
        const std::string s = format_double(v);
        CHECK(parse_exact(s) == v);
    }
    CHECK(format_double(2.0) == "2");
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("lower_median picks the lower middle element") {
    CHECK(lower_median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(lower_median({4.0, 1.0, 3.0, 2.0}) == 2.0);
    CHECK(lower_median({7.0}) == 7.0);
    CHECK(lower_median({2.0, 1.0}) == 1.0);
    CHECK_THROWS_AS(lower_median({}), domain_error);
}

TEST_CASE("seed derivation is deterministic and salt-separated") {
    CHECK(trial_seed(7, 3) == trial_seed(7, 3));
    CHECK(trial_seed(7, 3) != trial_seed(7, 4));
    CHECK(trial_seed(7, 3) != trial_seed(8, 3));
    const std::uint64_t ts = trial_seed(7, 3);
    CHECK(stream_seed(ts, 1) == stream_seed(ts, 1));
    CHECK(stream_seed(ts, 1) != stream_seed(ts, 2));
    CHECK(stream_seed(ts, 1) != stream_seed(ts, 1000));
}

TEST_CASE("experiment run writes consistent, reproducible artifacts") {
    TempDir dir("exprun");
    const std::string cfg_text = "m = 6\nl = 3\np = 2\nn = 4\niters = 30\ntrials = 5\n"
                                 "record_every = 10\nseed = 7\n"
                                 "beta_tilde = 0,0.125\nbeta_row_tilde = 0.5\n"
                                 "law = normal(50,10)\n"
                                 "cells = trk,qtrk:1,qtrk:0.875,mqtrk:0.875\n"
                                 "out = " +
                                 (dir.path / "out1").string() + "\n";
    ExperimentConfig config = parse_experiment_config(write_config(dir.path, "run.cfg", cfg_text));
    const ExperimentOutcome outcome = run_experiment(config);
    REQUIRE(outcome.summaries.size() == 8); // 2 grid points x 4 cells

    const auto out = dir.path / "out1";
    const char* traces[8] = {
        "trace_g0_c0_trk_q1.csv",        "trace_g0_c1_qtrk_q1.csv",
        "trace_g0_c2_qtrk_q0.875.csv",   "trace_g0_c3_mqtrk_q0.875.csv",
        "trace_g1_c0_trk_q1.csv",        "trace_g1_c1_qtrk_q1.csv",
        "trace_g1_c2_qtrk_q0.875.csv",   "trace_g1_c3_mqtrk_q0.875.csv"};
    for (const char* name : traces) {
        CHECK(std::filesystem::exists(out / name));
    }
    CHECK(std::filesystem::exists(out / "median_curves.csv"));
    CHECK(std::filesystem::exists(out / "summary.csv"));
    CHECK(std::filesystem::exists(out / "timings.txt"));

    // Summary rows: all five trials succeed everywhere.
    const auto summary_lines = read_lines(out / "summary.csv");
    REQUIRE(summary_lines.size() == 9);
    CHECK(summary_lines[0] ==
          "grid,cell,variant,q,beta_tilde,beta_row_tilde,law,trials_ok,trials_failed,"
          "final_median_rel_error,final_median_rel_residual,total_stalls,stall_rate");
    for (std::size_t r = 1; r < summary_lines.size(); ++r) {
        const auto fields = split_csv(summary_lines[r]);
        REQUIRE(fields.size() == 13);
        CHECK(fields[6] == "normal(50,10)");
        CHECK(fields[7] == "5");
        CHECK(fields[8] == "0");
    }

    // Every cell of a grid point shares the per-trial plan hashes.
    const auto hash_lines = [&](const char* name) {
        std::vector<std::string> hashes;
        for (const auto& line : read_lines(out / name)) {
            if (line.rfind("# plan_hash", 0) == 0) hashes.push_back(line);
        }
        return hashes;
    };
    const auto g1_hashes = hash_lines("trace_g1_c0_trk_q1.csv");
    CHECK(g1_hashes.size() == 5);
    CHECK(g1_hashes == hash_lines("trace_g1_c2_qtrk_q0.875.csv"));
    CHECK(g1_hashes == hash_lines("trace_g1_c3_mqtrk_q0.875.csv"));
    CHECK(hash_lines("trace_g0_c0_trk_q1.csv") == hash_lines("trace_g0_c1_qtrk_q1.csv"));

    // With q = 1 nothing can exceed the max-residual threshold, so qtrk equals trk
    // row for row, on clean and corrupted grids alike.
    const auto data_lines = [&](const char* name) {
        std::vector<std::string> rows;
        for (const auto& line : read_lines(out / name)) {
            if (!line.empty() && line[0] != '#' && line.rfind("trial,", 0) != 0) {
                rows.push_back(line);
            }
        }
        return rows;
    };
    CHECK(data_lines("trace_g0_c0_trk_q1.csv") == data_lines("trace_g0_c1_qtrk_q1.csv"));
    CHECK(data_lines("trace_g1_c0_trk_q1.csv") == data_lines("trace_g1_c1_qtrk_q1.csv"));

    // Independent median recomputation from the raw traces must agree exactly with
    // median_curves.csv, including the final medians copied into summary.csv.
    std::map<std::string, std::pair<std::string, std::string>> curve_map;
    const auto curve_lines = read_lines(out / "median_curves.csv");
    CHECK(curve_lines[0] ==
          "grid,cell,variant,q,beta_tilde,beta_row_tilde,iter,median_rel_error,"
          "median_rel_residual");
    for (std::size_t r = 1; r < curve_lines.size(); ++r) {
        const auto fields = split_csv(curve_lines[r]);
        REQUIRE(fields.size() == 9);
        curve_map[fields[0] + "," + fields[1] + "," + fields[6]] = {fields[7], fields[8]};
    }
    index_t checked = 0;
    for (index_t g = 0; g < 2; ++g) {
        for (index_t c = 0; c < 4; ++c) {
            const std::string name = traces[static_cast<std::size_t>(g * 4 + c)];
            std::map<std::string, std::vector<double>> errs, resids;
            for (const auto& line : data_lines(name.c_str())) {
                const auto fields = split_csv(line);
                REQUIRE(fields.size() == 5);
                errs[fields[1]].push_back(parse_exact(fields[2]));
                resids[fields[1]].push_back(parse_exact(fields[3]));
            }
            CHECK(errs.size() == 4); // iters 0, 10, 20, 30
            for (auto& [iter, values] : errs) {
                REQUIRE(values.size() == 5);
                const auto key = std::to_string(g) + "," + std::to_string(c) + "," + iter;
                REQUIRE(curve_map.count(key) == 1);
                CHECK(curve_map[key].first == format_double(lower_median(values)));
                CHECK(curve_map[key].second == format_double(lower_median(resids[iter])));
                ++checked;
            }
            // Final medians propagate into summary.csv verbatim.
            const auto final_key = std::to_string(g) + "," + std::to_string(c) + ",30";
            const auto summary_fields =
                split_csv(summary_lines[static_cast<std::size_t>(1 + g * 4 + c)]);
            CHECK(summary_fields[9] == curve_map[final_key].first);
            CHECK(summary_fields[10] == curve_map[final_key].second);
        }
    }
    CHECK(checked == 32);

    // The plain solver cannot increase the error on the clean grid point.
    {
        std::map<std::string, std::vector<double>> by_trial;
        for (const auto& line : data_lines("trace_g0_c0_trk_q1.csv")) {
            const auto fields = split_csv(line);
            by_trial[fields[0]].push_back(parse_exact(fields[2]));
        }
        for (const auto& [trial, curve] : by_trial) {
            for (std::size_t k = 1; k < curve.size(); ++k) {
                CHECK(curve[k] <= curve[k - 1] + 1e-12);
            }
        }
    }

    // Outcome struct mirrors the CSV.
    for (const CellSummary& cs : outcome.summaries) {
        CHECK(cs.trials_ok == 5);
        CHECK(cs.trials_failed == 0);
        const auto fields = split_csv(
            summary_lines[static_cast<std::size_t>(1 + cs.grid_index * 4 + cs.cell_index)]);
        CHECK(fields[2] == variant_name(cs.variant));
        CHECK(fields[9] == format_double(cs.final_median_rel_error));
        CHECK(fields[12] == format_double(cs.stall_rate));
    }

    // Re-running the same config into a fresh directory reproduces every CSV byte.
    ExperimentConfig rerun = config;
    rerun.out = dir.path / "out2";
    run_experiment(rerun);
    for (const char* name : traces) {
        CHECK(read_file(out / name) == read_file(rerun.out / name));
    }
    CHECK(read_file(out / "median_curves.csv") == read_file(rerun.out / "median_curves.csv"));
    CHECK(read_file(out / "summary.csv") == read_file(rerun.out / "summary.csv"));
}

TEST_CASE("failed trials are recorded without aborting the run") {
    TempDir dir("expfail");
    // q * m * p * n = 0.48 rounds down to index zero: every trial raises the
    // quantile domain error, which the harness must capture per trial.
    const std::string cfg_text = "m = 6\nl = 3\np = 2\nn = 4\niters = 5\ntrials = 2\n"
                                 "seed = 3\ncells = qtrk:0.01\nout = " +
                                 (dir.path / "out").string() + "\n";
    const ExperimentConfig config =
        parse_experiment_config(write_config(dir.path, "fail.cfg", cfg_text));
    const ExperimentOutcome outcome = run_experiment(config);
    REQUIRE(outcome.summaries.size() == 1);
    CHECK(outcome.summaries[0].trials_ok == 0);
    CHECK(outcome.summaries[0].trials_failed == 2);
    CHECK(std::isnan(outcome.summaries[0].final_median_rel_error));

    const auto trace_lines = read_lines(dir.path / "out" / "trace_g0_c0_qtrk_q0.01.csv");
    index_t error_lines = 0;
    index_t data_lines = 0;
    for (const auto& line : trace_lines) {
        if (line.rfind("# trial_error", 0) == 0) {
            ++error_lines;
            CHECK(line.find("quantile index zero") != std::string::npos);
        } else if (!line.empty() && line[0] != '#' && line.rfind("trial,", 0) != 0) {
            ++data_lines;
        }
    }
    CHECK(error_lines == 2);
    CHECK(data_lines == 0);

    const auto summary_lines = read_lines(dir.path / "out" / "summary.csv");
    REQUIRE(summary_lines.size() == 2);
    const auto fields = split_csv(summary_lines[1]);
    CHECK(fields[7] == "0");
    CHECK(fields[8] == "2");
    CHECK(fields[9] == "nan");
    CHECK(fields[10] == "nan");
}

TEST_CASE("rates reports expose constants, hypotheses, and provenance") {
    TempDir dir("rates");
    const std::string clean_text = "m = 6\nl = 3\np = 2\nn = 4\niters = 5\ntrials = 2\n"
                                   "seed = 11\ncells = trk,qtrk:1,mqtrk:0.875\nout = " +
                                   (dir.path / "clean").string() + "\n";
    const ExperimentConfig clean =
        parse_experiment_config(write_config(dir.path, "clean.cfg", clean_text));
    const nlohmann::ordered_json items = rates_reports(clean);
    REQUIRE(items.is_array());
    REQUIRE(items.size() == 3);

    // The harness derives trial 0's system from documented seeds; replaying them
    // here must land on the same spectral constants.
    Rng system_rng(stream_seed(trial_seed(11, 0), 1));
    const DenseTensor3 a = gaussian_tensor(6, 3, 4, system_rng);
    std::vector<index_t> all_rows;
    for (index_t i = 0; i < 6; ++i) all_rows.push_back(i);
    const double sigma_min_proj = expected_projector_sigma_min(a, all_rows);
    const SingularExtremes extremes = bcirc_singular_extremes(a);

    const auto& trk_item = items[0];
    CHECK(trk_item["grid"] == 0);
    CHECK(trk_item["cell"] == 0);
    CHECK(trk_item["variant"] == "trk");
    CHECK(trk_item["beta_tilde"] == 0.0);
    CHECK(trk_item["report"]["beta"] == 0.0);
    CHECK(trk_item["report"]["beta_row"] == 0.0);
    CHECK(trk_item["report"]["q"] == 1.0);
    CHECK(trk_item["report"]["sigma_max_bcirc"].get<double>() ==
          doctest::Approx(extremes.sigma_max).epsilon(1e-14));
    CHECK(trk_item["report"]["sigma_min_expected_projector"].get<double>() ==
          doctest::Approx(sigma_min_proj).epsilon(1e-14));
    CHECK(trk_item["report"]["eta"].get<double>() == doctest::Approx(eta(a)).epsilon(1e-14));
    // beta_row = 0 with q = 1 drops the corrupted-row term entirely.
    CHECK(trk_item["report"]["rate_qtrk"].get<double>() ==
          doctest::Approx(1.0 - sigma_min_proj).epsilon(1e-13));
    CHECK(trk_item["vacuous"] == false);
    CHECK(trk_item["violations"].empty());
    CHECK(!trk_item["report"].contains("rate_mqtrk"));
    CHECK(items[1]["report"]["rate_qtrk"] == trk_item["report"]["rate_qtrk"]);

    // q = 0.875 equals 1 - 1/(p n) exactly, violating the strict masked-rate bound.
    const auto& mq_item = items[2];
    CHECK(!mq_item["report"].contains("rate_mqtrk"));
    bool found = false;
    for (const auto& v : mq_item["violations"]) {
        if (v.get<std::string>().find("1 - 1/(pn)") != std::string::npos) found = true;
    }
    CHECK(found);

    // The JSON written to disk is the returned array.
    std::ifstream is(dir.path / "clean" / "rates.json");
    REQUIRE(static_cast<bool>(is));
    nlohmann::ordered_json on_disk;
    is >> on_disk;
    CHECK(on_disk == items);

    // Corrupted grid: realized fractions come from the replayable trial-0 plan.
    const std::string dirty_text = "m = 6\nl = 3\np = 2\nn = 4\niters = 5\ntrials = 2\n"
                                   "seed = 11\nbeta_tilde = 0.125\nbeta_row_tilde = 0.5\n"
                                   "cells = qtrk:0.5\nout = " +
                                   (dir.path / "dirty").string() + "\n";
    const ExperimentConfig dirty =
        parse_experiment_config(write_config(dir.path, "dirty.cfg", dirty_text));
    const nlohmann::ordered_json dirty_items = rates_reports(dirty);
    REQUIRE(dirty_items.size() == 1);
    const CorruptionPlan plan = generate_plan(6, 2, 4, 0.125, 0.5, dirty.law,
                                              stream_seed(trial_seed(11, 0), 1000));
    CHECK(dirty_items[0]["report"]["beta"].get<double>() ==
          doctest::Approx(plan.beta()).epsilon(1e-15));
    CHECK(dirty_items[0]["report"]["beta_row"].get<double>() ==
          doctest::Approx(plan.beta_row()).epsilon(1e-15));
    CHECK(dirty_items[0]["report"]["sigma_min_expected_projector"].get<double>() ==
          doctest::Approx(expected_projector_sigma_min(a, plan.uncorrupted_rows()))
              .epsilon(1e-14));
    CHECK(dirty_items[0]["report"].contains("rate_qtrk")); // radicand 6(1-beta-0.5) > 0
}

TEST_CASE("median contraction stays within the theoretical rate") {
    // Clean consistent system: the guaranteed factor reduces to 1 - sigma_min of the
    // expected projector, and the observed per-step factor must not exceed it.
    Rng rng(77);
    const DenseTensor3 a = gaussian_tensor(25, 5, 10, rng);
    const DenseTensor3 xstar = gaussian_tensor(5, 4, 10, rng);
    const DenseTensor3 x0 = gaussian_tensor(5, 4, 10, rng);
    const DenseTensor3 b = tprod(a, xstar);

    std::vector<index_t> all_rows;
    for (index_t i = 0; i < 25; ++i) all_rows.push_back(i);
    const SingularExtremes extremes = bcirc_singular_extremes(a);
    const RateInputs inputs{25, extremes.sigma_max, eta(a),
                            expected_projector_sigma_min(a, all_rows), 0.0, 0.0, 1.0};
    const double rate = rate_qtrk(inputs);
    CHECK(rate == 1.0 - inputs.sigma_min_expected_projector);
    REQUIRE(rate < 1.0);
    REQUIRE(rate > 0.0);

    const index_t iters = 200;
    std::vector<double> factors;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SolverConfig config;
        config.variant = Variant::qtrk;
        config.q = 1.0;
        config.max_iters = iters;
        config.seed = 500 + seed;
        config.record_every = iters;
        const SolveResult result = solve(a, b, config, &xstar, x0);
        const double e0 = result.record.trace.front().rel_error;
        const double ek = result.record.trace.back().rel_error;
        REQUIRE(e0 > 0.0);
        factors.push_back(std::pow(ek / e0, 1.0 / static_cast<double>(iters)));
    }
    CHECK(lower_median(factors) <= rate);
}

TEST_CASE("deblur command writes traces, metrics, and frames") {
    TempDir dir("deblurrun");
    const std::string cfg_text = "synthetic = 12x12x2\nkernel_size = 3\nkernel_sigma = 1\n"
                                 "corruptions = 4\ncorrupt_rows = 2\niters = 150\n"
                                 "record_every = 50\nseed = 5\ncells = qtrk:0.97\n"
                                 "out = " +
                                 (dir.path / "out1").string() + "\n";
    DeblurConfig config = parse_deblur_config(write_config(dir.path, "run.cfg", cfg_text));
    const DeblurOutcome outcome = run_deblur_command(config);
    REQUIRE(outcome.cells.size() == 1);
    CHECK(outcome.cells[0].variant == Variant::qtrk);
    CHECK(outcome.baseline_rel_residual > 0.0);

    const auto out = dir.path / "out1";
    CHECK(std::filesystem::exists(out / "deblur_qtrk_q0.97.csv"));
    CHECK(std::filesystem::exists(out / "deblur_metrics.json"));
    for (const char* name : {"original", "blurred", "corrupted", "baseline"}) {
        CHECK(std::filesystem::exists(out / "frames" / (std::string(name) + "_000.pgm")));
        CHECK(std::filesystem::exists(out / "frames" / (std::string(name) + "_001.pgm")));
    }
    CHECK(std::filesystem::exists(out / "frames" / "recovered_qtrk_q0.97_000.pgm"));
    CHECK(std::filesystem::exists(out / "frames" / "recovered_qtrk_q0.97_001.pgm"));

    nlohmann::ordered_json metrics;
    std::ifstream(out / "deblur_metrics.json") >> metrics;
    CHECK(metrics["plan"]["m"] == 12);
    CHECK(metrics["plan"]["p"] == 2);
    CHECK(metrics["plan"]["n"] == 12);
    CHECK(metrics["plan"]["entries"].size() <= 4);
    CHECK(metrics["baseline"]["rel_residual"].get<double>() ==
          doctest::Approx(outcome.baseline_rel_residual).epsilon(1e-15));
    REQUIRE(metrics["cells"].size() == 1);
    CHECK(metrics["cells"][0]["variant"] == "qtrk");
    CHECK(metrics["cells"][0]["q"] == 0.97);
    CHECK(metrics["cells"][0]["final_rel_residual"].get<double>() ==
          doctest::Approx(outcome.cells[0].final_rel_residual).epsilon(1e-15));

    // The iteration actually makes progress on this small instance.
    const auto trace_lines = read_lines(out / "deblur_qtrk_q0.97.csv");
    std::vector<std::vector<std::string>> rows;
    for (const auto& line : trace_lines) {
        if (!line.empty() && line[0] != '#' && line.rfind("trial,", 0) != 0) {
            rows.push_back(split_csv(line));
        }
    }
    REQUIRE(rows.size() >= 2);
    CHECK(parse_exact(rows.back()[3]) < parse_exact(rows.front()[3]));

    // Byte-stable across re-runs.
    DeblurConfig rerun = config;
    rerun.out = dir.path / "out2";
    run_deblur_command(rerun);
    CHECK(read_file(out / "deblur_qtrk_q0.97.csv") ==
          read_file(rerun.out / "deblur_qtrk_q0.97.csv"));
    CHECK(read_file(out / "deblur_metrics.json") ==
          read_file(rerun.out / "deblur_metrics.json"));
    CHECK(read_file(out / "frames" / "recovered_qtrk_q0.97_000.pgm") ==
          read_file(rerun.out / "frames" / "recovered_qtrk_q0.97_000.pgm"));
}
