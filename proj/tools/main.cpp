#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "bspde/studies.hpp"

int main(int argc, char** argv) {
    CLI::App app{
        "bspde: convergence studies for Crank-Nicolson finite element\n"
        "discretizations of the fourth-order stochastic heat equation"};

    std::string study;
    std::string config_file;
    std::string out_dir;
    std::uint64_t seed = 0;
    int samples = 0;
    int threads = 0;

    app.add_option("--study", study,
                   "study to run: time-rate | space-rate | model-error-modes | "
                   "model-error-dt | deterministic-rates | sample-path | selftest");
    app.add_option("--config", config_file, "key = value configuration file");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--samples", samples, "Monte Carlo sample count");
    app.add_option("--out", out_dir, "output directory for results.csv and summary.txt");
    app.add_option("--threads", threads, "worker threads (affects wall time only)");

    CLI11_PARSE(app, argc, argv);

    try {
        bspde::StudyConfig config;
        if (!config_file.empty()) config = bspde::parse_config_file(config_file);
        if (!study.empty()) config.study = study;
        if (seed != 0) config.seed = seed;
        if (samples != 0) config.samples = samples;
        if (threads != 0) config.threads = threads;
        if (!out_dir.empty()) config.out_dir = out_dir;
        if (config.study.empty()) {
            std::fprintf(stderr, "error: no study selected (use --study or a config file)\n");
            return 2;
        }

        const auto result = bspde::run_study(config);
        std::fputs(result.summary_text.c_str(), stdout);
        std::printf("results: %s\n", result.results_csv.string().c_str());
        return result.exit_code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
