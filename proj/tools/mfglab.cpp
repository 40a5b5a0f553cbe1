#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mfglab/cli.hpp"

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("mfglab");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("MFGLAB_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::info);

    CLI::App app{"mean-field-game inverse problem laboratory"};
    app.set_version_flag("--version", mfglab::kToolVersion);
    app.require_subcommand(1);

    std::string config;
    mfglab::RunOptions opts;
    int workers = 0;
    std::string out;
    auto* run = app.add_subcommand("run", "run the experiment described by a config file");
    run->add_option("config", config, "experiment config (JSON)")->required();
    run->add_option("--workers", workers, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
    run->add_option("--out", out, "output directory (overrides the config)");
    auto* verify = app.add_subcommand("verify", "validate a config and print the resolved plan");
    verify->add_option("config", config, "experiment config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (*verify) return mfglab::verify_experiment(config, std::cout);
    if (workers > 0) opts.workers = workers;
    if (!out.empty()) opts.out = out;
    return mfglab::run_experiment(config, opts, std::cerr);
}
