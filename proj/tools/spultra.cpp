#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "spultra/config.hpp"
#include "spultra/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Shifted-Poisson ULTRA CT reconstruction experiments"};
    app.require_subcommand(1, 1);

    std::string config_path, out_dir, method;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;

    for (const char* name : {"simulate", "learn", "reconstruct", "evaluate", "all"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "INI experiment config")->required();
        sub->add_option("--out", out_dir, "output directory (overrides [io] out_dir)");
        sub->add_option("--seed", seed, "random seed override");
        sub->add_option("--method", method, "spultra, pwls-ultra, pwls-ep or fbp")
            ->check(CLI::IsMember({"spultra", "pwls-ultra", "pwls-ep", "fbp"}));
        sub->add_flag("--deterministic-noise", deterministic, "replace noise draws by their means (test mode)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : spultra::exit_code::config;
    }

    spultra::PipelineOptions opts;
    try {
        opts.sub = spultra::parse_subcommand(app.get_subcommands().front()->get_name());
        spultra::ExperimentConfig cfg = spultra::parse_config(config_path, opts.sub);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed) cfg.seed = *seed;
        if (!method.empty()) opts.method = spultra::parse_method(method);
        opts.deterministic_noise = deterministic;
        return spultra::run_pipeline(cfg, opts, std::cerr);
    } catch (const spultra::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return spultra::exit_code::config;
    }
}
