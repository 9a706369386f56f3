// combtrack: simulate dual-comb records, characterize phase noise, rebuild figures.

#include "combtrack/errors.hpp"
#include "combtrack/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Args {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string method;
    std::string out;
    std::string signal;
    std::optional<int> figure;
};

void add_common(CLI::App* cmd, Args& args)
{
    cmd->add_option("--config", args.config, "JSON config file")->required();
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--method", args.method, "ml or conventional");
    cmd->add_option("--out", args.out, "output directory");
}

combtrack::ExperimentConfig resolve(const Args& args)
{
    auto config = combtrack::load_config(args.config);
    if (args.seed) config.seed = *args.seed;
    if (!args.method.empty()) config.method = args.method;
    if (!args.out.empty()) config.output_dir = args.out;
    if (!args.signal.empty()) config.signal_path = args.signal;
    if (args.figure) config.figure.id = *args.figure;
    config.validate();
    return config;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Dual-comb phase-noise characterization"};
    app.require_subcommand(1);
    Args args;

    auto* simulate = app.add_subcommand("simulate", "write a synthetic signal file and its ground truth");
    add_common(simulate, args);
    auto* characterize = app.add_subcommand("characterize", "estimate phases, correlations and variance curves");
    add_common(characterize, args);
    characterize->add_option("--signal", args.signal, "signal file (overrides signal_path)");
    auto* figure = app.add_subcommand("reproduce-fig", "run the numerical study behind figure 2 or 3");
    add_common(figure, args);
    figure->add_option("--figure", args.figure, "figure number (overrides figure.id)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const auto config = resolve(args);
        if (simulate->parsed()) {
            combtrack::cmd_simulate(config, config.output_dir);
        } else if (characterize->parsed()) {
            combtrack::cmd_characterize(config, config.output_dir);
        } else {
            combtrack::cmd_reproduce_fig(config, config.output_dir);
        }
    } catch (const combtrack::ConfigError& e) {
        std::cerr << "combtrack: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "combtrack: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
