#include <charconv>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qtrk/harness.hpp"
#include "qtrk/tensor.hpp"

namespace {

qtrk::index_t parse_dim(const std::string& text, const char* what) {
    qtrk::index_t value = 0;
    const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
    if (result.ec != std::errc{} || result.ptr != text.data() + text.size() || value < 1) {
        throw qtrk::config_error(std::string("invalid ") + what + ": '" + text + "'");
    }
    return value;
}

void run_experiment_command(const std::string& config_path) {
    const qtrk::ExperimentConfig config = qtrk::parse_experiment_config(config_path);
    const qtrk::ExperimentOutcome outcome = qtrk::run_experiment(config);
    for (const qtrk::CellSummary& s : outcome.summaries) {
        std::printf("g%lld c%lld %s q=%s bt=%s brt=%s ok=%lld failed=%lld "
                    "final_median_rel_error=%s stall_rate=%s\n",
                    static_cast<long long>(s.grid_index), static_cast<long long>(s.cell_index),
                    qtrk::variant_name(s.variant).c_str(), qtrk::format_double(s.q).c_str(),
                    qtrk::format_double(s.beta_tilde).c_str(),
                    qtrk::format_double(s.beta_row_tilde).c_str(),
                    static_cast<long long>(s.trials_ok), static_cast<long long>(s.trials_failed),
                    qtrk::format_double(s.final_median_rel_error).c_str(),
                    qtrk::format_double(s.stall_rate).c_str());
    }
    std::printf("wrote %s\n", outcome.out_dir.string().c_str());
}

void run_rates_command(const std::string& config_path) {
    const qtrk::ExperimentConfig config = qtrk::parse_experiment_config(config_path);
    const nlohmann::ordered_json items = qtrk::rates_reports(config);
    std::printf("%s\n", items.dump(2).c_str());
    std::printf("wrote %s\n", (config.out / "rates.json").string().c_str());
}

void run_deblur_cli(const std::string& config_path) {
    const qtrk::DeblurConfig config = qtrk::parse_deblur_config(config_path);
    const qtrk::DeblurOutcome outcome = qtrk::run_deblur_command(config);
    std::printf("baseline rel_residual=%s psnr=%s\n",
                qtrk::format_double(outcome.baseline_rel_residual).c_str(),
                qtrk::format_double(outcome.baseline_psnr).c_str());
    for (const qtrk::DeblurCellOutcome& cell : outcome.cells) {
        std::printf("%s q=%s rel_residual=%s psnr=%s stalls=%lld\n",
                    qtrk::variant_name(cell.variant).c_str(), qtrk::format_double(cell.q).c_str(),
                    qtrk::format_double(cell.final_rel_residual).c_str(),
                    qtrk::format_double(cell.psnr).c_str(), static_cast<long long>(cell.stalls));
    }
    std::printf("wrote %s\n", outcome.out_dir.string().c_str());
}

void run_gen_tensor(const std::string& shape, std::uint64_t seed, const std::string& out) {
    std::vector<std::string> dims;
    std::size_t start = 0;
    for (;;) {
        const auto pos = shape.find('x', start);
        if (pos == std::string::npos) {
            dims.push_back(shape.substr(start));
            break;
        }
        dims.push_back(shape.substr(start, pos - start));
        start = pos + 1;
    }
    if (dims.size() != 3) {
        throw qtrk::config_error("shape must be <rows>x<cols>x<depth>: '" + shape + "'");
    }
    qtrk::Rng rng(seed);
    const qtrk::DenseTensor3 tensor =
        qtrk::gaussian_tensor(parse_dim(dims[0], "rows"), parse_dim(dims[1], "cols"),
                              parse_dim(dims[2], "depth"), rng);
    qtrk::write_t3b(out, tensor);
    std::printf("wrote %s\n", out.c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tensor linear system solver: quantile-filtered randomized Kaczmarz"};
    app.require_subcommand(1);

    std::string experiment_config, rates_config, deblur_config;
    std::string shape, gen_out;
    std::uint64_t gen_seed = 0;

    CLI::App* experiment =
        app.add_subcommand("experiment", "Run a solver comparison grid from a config file");
    experiment->add_option("config", experiment_config, "key = value config file")->required();

    CLI::App* rates =
        app.add_subcommand("rates", "Report convergence-rate constants for a config's cells");
    rates->add_option("config", rates_config, "key = value config file")->required();

    CLI::App* deblur = app.add_subcommand("deblur", "Run the video deblurring pipeline");
    deblur->add_option("config", deblur_config, "key = value config file")->required();

    CLI::App* gen = app.add_subcommand("gen-tensor", "Write a seeded Gaussian tensor as .t3b");
    gen->add_option("shape", shape, "dimensions, e.g. 25x5x10")->required();
    gen->add_option("seed", gen_seed, "RNG seed")->required();
    gen->add_option("out", gen_out, "output path (.t3b)")->required();

    try {
        app.parse(argc, argv);
        if (experiment->parsed()) run_experiment_command(experiment_config);
        if (rates->parsed()) run_rates_command(rates_config);
        if (deblur->parsed()) run_deblur_cli(deblur_config);
        if (gen->parsed()) run_gen_tensor(shape, gen_seed, gen_out);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // bad usage is a config error
    } catch (const qtrk::numerical_error& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    } catch (const qtrk::error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
