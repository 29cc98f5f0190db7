// rns_lab <experiment> --config FILE [--out DIR] [--threads N] [--xi-nodes N] [--tmax-exp K] [--j J...]
#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "rns/pipelines.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Spectral verification lab for the Rao-Nakra sandwich beam"};
    app.require_subcommand(1, 1);

    std::string config, out;
    int threads = 0, xi_nodes = 0, tmax_exp = 0;
    std::vector<int> j;

    for (const auto& [name, fn] : rns::pipelines()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", config, "key=value config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory (default out/<experiment>)");
        sub->add_option("--threads", threads, "worker threads, 0 = hardware (RNS_THREADS overrides)")->check(CLI::NonNegativeNumber);
        sub->add_option("--xi-nodes", xi_nodes, "override [grid] xi_nodes")->check(CLI::PositiveNumber);
        sub->add_option("--tmax-exp", tmax_exp, "override [grid] tmax_exp")->check(CLI::Range(1, 40));
        sub->add_option("--j", j, "override [decay] j (derivative orders)")->check(CLI::NonNegativeNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : rns::EXIT_ERROR;
    }

    const std::string experiment = app.get_subcommands().front()->get_name();
    if (out.empty()) out = "out/" + experiment;
    if (const char* env = std::getenv("RNS_THREADS")) {
        try {
            threads = std::stoi(env);
        } catch (...) {
            std::cerr << "configuration error: RNS_THREADS must be an integer, got '" << env << "'\n";
            return rns::EXIT_ERROR;
        }
    }
    if (xi_nodes % 2) {
        std::cerr << "configuration error: --xi-nodes must be even\n";
        return rns::EXIT_ERROR;
    }

    rns::RunOptions opts;
    opts.threads = threads;
    return rns::run_experiment(experiment, config, out, opts, std::cout, std::cerr, [&](rns::ExperimentConfig& c) {
        if (xi_nodes) c.grid.xi_nodes = xi_nodes;
        if (tmax_exp) c.grid.tmax_exp = tmax_exp;
        if (!j.empty()) c.decay.j = j;
    });
}
