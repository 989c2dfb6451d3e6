#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ssfl/experiment.hpp"

namespace {

std::string env_out_root() {
    const char* root = std::getenv("SSFLSIM_OUT_ROOT");
    return root ? root : "";
}

ssfl::ExperimentConfig load_with_overrides(const std::string& path,
                                           std::optional<std::uint64_t> seed,
                                           std::optional<std::string> out) {
    ssfl::ExperimentConfig config = ssfl::load_config(path);
    ssfl::apply_overrides(config, seed, out, env_out_root());
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic federated-learning simulator with saliency-based sparsity"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::size_t jobs = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "experiment config file")->required();
        cmd->add_option("--seed", seed, "run only this seed (overrides run.seeds)");
        cmd->add_option("--out", out, "output directory (overrides output.dir)");
        cmd->add_option("--jobs", jobs, "parallel (variant, seed) runs")
            ->check(CLI::PositiveNumber);
    };

    CLI::App* cmd_run = app.add_subcommand("run", "execute all (variant, seed) runs");
    add_common(cmd_run);
    CLI::App* cmd_study =
        app.add_subcommand("mask-study", "mask error vs aggregated minibatch count");
    add_common(cmd_study);
    CLI::App* cmd_validate = app.add_subcommand("validate", "parse and check a config");
    add_common(cmd_validate);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            ssfl::run_experiment(load_with_overrides(config_path, seed, out), jobs);
        } else if (cmd_study->parsed()) {
            ssfl::run_mask_study(load_with_overrides(config_path, seed, out));
        } else {
            ssfl::ExperimentConfig config = load_with_overrides(config_path, seed, out);
            std::cout << ssfl::resolved_config_text(config);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
