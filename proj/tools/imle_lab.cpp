// imle-lab: command-line front door for the experiment suite.
//
//   imle-lab <mode-coverage|mnist-pca|progressive-sr|traverse|dci-bench>
//            --config <path> [--seed N] [--out DIR]
//
// Settings come from the JSON config file; --seed and --out override the
// corresponding config entries (flag wins). The IMLE_LAB_THREADS environment
// variable caps worker threads; 0 (the default) is sequential deterministic
// mode.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "imle/experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"imle-lab: one-to-many prediction experiments"};
    app.require_subcommand(1);

    const std::vector<std::string> commands = {"mode-coverage", "mnist-pca", "progressive-sr",
                                               "traverse", "dci-bench"};
    struct Args {
        std::string config;
        std::string out;
        uint64_t seed = 0;
        bool seed_set = false;
        bool out_set = false;
    };
    Args args;
    std::string chosen;
    for (const auto& name : commands) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", args.config, "JSON config file");
        sub->add_option("--seed", args.seed, "override config seed")
            ->each([&](const std::string&) { args.seed_set = true; });
        sub->add_option("--out", args.out, "override output directory")
            ->each([&](const std::string&) { args.out_set = true; });
        sub->callback([&chosen, name] { chosen = name; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        nlohmann::json cfg = args.config.empty() ? nlohmann::json::object()
                                                 : imle::load_config_file(args.config);
        if (args.seed_set) cfg["seed"] = args.seed;
        if (args.out_set) cfg["out_dir"] = args.out;
        imle::run_command(chosen, std::move(cfg));
    } catch (const std::exception& e) {
        std::cerr << "imle-lab: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
