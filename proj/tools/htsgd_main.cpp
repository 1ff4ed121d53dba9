// htsgd: reproducibly seeded simulation experiments for SGD under
// heavy-tailed gradient noise. One experiment per invocation:
//   htsgd <experiment> --config <file> [--seed N] [--out DIR] [--no-plots] [--threads K]

#include "htsgd/experiments.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

using htsgd::experiments::ExperimentConfig;
using nlohmann::json;

namespace {

ExperimentConfig load_config(const std::string& experiment, const std::string& config_path) {
    json j = json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw htsgd::ConfigError("cannot open config file " + config_path);
        in >> j;
    }
    auto config = ExperimentConfig::from_json(j);
    config.experiment = experiment;
    return config;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and verification harness for SGD with infinite-variance noise"};
    app.require_subcommand(1);

    const std::vector<std::string> experiments{"constant-path", "decay-hist",   "coverage",
                                               "logistic-path", "logistic-hist",
                                               "stationary-density", "angular-check"};
    struct Flags {
        std::string config_path;
        std::string out_dir;
        std::uint64_t seed = 0;
        bool seed_given = false;
        bool no_plots = false;
        int threads = -1;
    };
    Flags flags;
    for (const auto& name : experiments) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", flags.config_path, "JSON config file");
        auto* seed_opt = sub->add_option("--seed", flags.seed, "master seed override");
        sub->add_option("--out", flags.out_dir, "output directory override");
        sub->add_flag("--no-plots", flags.no_plots, "skip SVG rendering");
        sub->add_option("--threads", flags.threads, "worker thread count (0 = hardware)");
        sub->callback([&flags, seed_opt] { flags.seed_given = seed_opt->count() > 0; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        const std::string experiment = app.get_subcommands().front()->get_name();
        auto config = load_config(experiment, flags.config_path);
        if (flags.seed_given) {
            config.master_seed = flags.seed;
        } else if (const char* env_seed = std::getenv("HTSGD_SEED")) {
            config.master_seed = std::strtoull(env_seed, nullptr, 10);
        }
        if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
        if (flags.no_plots) config.no_plots = true;
        if (flags.threads >= 0) config.threads = flags.threads;

        const auto manifest = htsgd::experiments::run_experiment(config);
        std::cout << manifest.data["summary"].dump(2) << '\n'
                  << "wrote " << config.out_dir << "/manifest.json" << '\n';
        return 0;
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << '\n';
        return 1;
    }
}
