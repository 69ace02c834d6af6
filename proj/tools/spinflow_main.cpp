#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "spinflow/cli.hpp"
#include "spinflow/config.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Boltzmann-machine learning on Ising data with exact oracles, block-spin "
                 "coarse-graining, Wishart-cone verification and Monge-Ampere transport checks"};
    app.allow_extras();  // --section.key=value overrides

    std::string command;
    app.add_option("command", command,
                   "one of: ising-sample ising-exact rbm-train rbm-eval coarsegrain "
                   "wishart-verify transport-check pipeline");
    std::string config_path;
    app.add_option("--config", config_path, "config file (flat key = value with sections)");
    std::string out_dir = ".";
    app.add_option("--out", out_dir, "output directory for artifacts and manifest");
    std::uint64_t seed = 0;
    const auto* seed_opt = app.add_option("--seed", seed, "master seed recorded in the manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_name() == "CallForHelp" ? 0 : 2;
    }

    try {
        spinflow::RunConfig config;
        if (!config_path.empty()) config = spinflow::RunConfig::load(config_path);
        for (std::string extra : app.remaining()) {
            if (extra.rfind("--", 0) == 0) extra = extra.substr(2);
            config.apply_override(extra);
        }
        if (seed_opt->count() > 0) config.set("run", "seed", std::to_string(seed));

        if (command.empty() && config.has("", "command")) command = config.get("", "command");
        if (command.empty()) {
            std::fputs(spinflow::cli::usage_text(), stderr);
            return 2;
        }
        return spinflow::cli::run_command(command, std::move(config), out_dir);
    } catch (const spinflow::Error& e) {
        std::fprintf(stderr, "error: code=2 kind=invalid-config msg=%s\n", e.what());
        return 2;
    }
}
