// ncl: command-line driver for scenario runs, sweeps, spectral queries and oracle checks.

#include "ncl/runner.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Common {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("config", c.config, "JSON config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", c.out, "Output directory (default: the config's 'output')");
    cmd->add_option("--seed", c.seed, "Override the config seed");
    cmd->add_option("--threads", c.threads, "Worker threads (also NCL_THREADS)")->check(CLI::PositiveNumber);
}

int resolve_threads(const std::optional<int>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("NCL_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
        throw ncl::ConfigError(std::string("NCL_THREADS must be a positive integer, got '") + env + "'");
    }
    return 1;
}

ncl::ScenarioConfig scenario(const Common& c) {
    ncl::ScenarioConfig s = ncl::load_scenario(c.config);
    if (c.seed) s.seed = *c.seed;
    return s;
}

std::filesystem::path out_dir(const Common& c, const std::string& fallback) {
    return c.out ? std::filesystem::path(*c.out) : std::filesystem::path(fallback);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nonlocal competition: classification, sweeps and spectral queries"};
    app.set_version_flag("--version", std::string(ncl::kVersion));
    app.require_subcommand(1);

    Common run_opts, sweep_opts, spec_opts, oracle_opts;
    std::string target;
    std::optional<std::string> profiles;

    auto* run = app.add_subcommand("run", "Classify one scenario and write report.json");
    add_common(run, run_opts);
    auto* sweep = app.add_subcommand("sweep", "Phase-map sweep over up to two parameters");
    add_common(sweep, sweep_opts);
    auto* spectrum = app.add_subcommand("spectrum", "Principal spectral bound of a linearization");
    add_common(spectrum, spec_opts);
    spectrum->add_option("--target", target, "lambda_d | lambda_D | mu | nu")->required();
    auto* oracle = app.add_subcommand("oracle", "Run the oracle suite on profiles stored by 'run'");
    add_common(oracle, oracle_opts);
    oracle->add_option("--profiles", profiles, "Directory holding stored profiles (default: output directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ncl::kExitConfig;
    }

    try {
        if (*run) {
            const auto cfg = scenario(run_opts);
            const auto dir = out_dir(run_opts, cfg.output);
            const ncl::RunResult r = ncl::run_scenario(cfg, dir, resolve_threads(run_opts.threads));
            std::cout << "case " << r.report.case_string() << " (" << ncl::to_string(r.report.status) << ")";
            if (r.report.indices) {
                std::cout << "  mu " << r.report.indices->mu.lambda << "  nu " << r.report.indices->nu.lambda;
            }
            std::cout << "\nreport " << (dir / "report.json").string() << "\n";
            if (r.report.falsification) std::cerr << "falsification: " << r.report.falsification->message << "\n";
            return r.exit_code;
        }
        if (*sweep) {
            ncl::SweepConfig cfg = ncl::load_sweep(sweep_opts.config);
            if (sweep_opts.seed) cfg.base.seed = *sweep_opts.seed;
            std::optional<int> threads;
            if (sweep_opts.threads || std::getenv("NCL_THREADS")) threads = resolve_threads(sweep_opts.threads);
            const auto dir = out_dir(sweep_opts, cfg.base.output);
            const ncl::SweepResult r = ncl::run_sweep(cfg, dir, threads);
            std::size_t failed = 0;
            for (const auto& row : r.rows) failed += row.error.empty() ? 0 : 1;
            std::cout << r.rows.size() << " cells (" << failed << " failed)\nphase map "
                      << (dir / "phase_map.csv").string() << "\n";
            return ncl::kExitOk;
        }
        if (*spectrum) {
            const auto cfg = scenario(spec_opts);
            const auto dir = out_dir(spec_opts, cfg.output);
            const ncl::SpectralResult r = ncl::spectrum_query(cfg, ncl::parse_spectrum_target(target), dir);
            std::cout.precision(17);
            std::cout << target << " " << r.lambda << "  method " << ncl::to_string(r.method) << "  residual "
                      << r.residual << "\n";
            return ncl::kExitOk;
        }
        if (*oracle) {
            const auto cfg = scenario(oracle_opts);
            const auto dir = out_dir(oracle_opts, cfg.output);
            const ncl::OracleRun r = ncl::run_oracles(cfg, profiles ? std::filesystem::path(*profiles) : dir, dir);
            bool all = true;
            for (const auto& o : r.reports) {
                std::cout << (o.passed() ? "ok   " : "FAIL ") << o.name << "  lhs " << o.lhs << "  rhs " << o.rhs
                          << "\n";
                all = all && o.passed();
            }
            return all ? ncl::kExitOk : ncl::kExitFalsified;
        }
    } catch (const ncl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return ncl::kExitConfig;
    } catch (const ncl::MissingSemiTrivialError& e) {
        std::cerr << "missing semi-trivial state: " << e.what() << "\n";
        return ncl::kExitNumeric;
    } catch (const ncl::InvalidArgument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return ncl::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return ncl::kExitNumeric;
    }
    return ncl::kExitOk;
}
