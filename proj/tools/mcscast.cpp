// Command-line front end for the MCS success-probability forecasting pipeline.
// Stages: generate -> preprocess -> train -> evaluate -> bench -> report.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mcscast/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitMissingArtifact = 2;
constexpr int kExitNumericFailure = 3;

struct CliOptions {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool out_set = false;
};

mcscast::RunConfig resolve_config(const CliOptions& opt) {
    mcscast::RunConfig cfg =
        opt.config_path.empty() ? mcscast::RunConfig{} : mcscast::load_run_config(opt.config_path);
    if (opt.seed_set) cfg.seed = opt.seed;
    if (opt.out_set) cfg.out_dir = opt.out_dir;
    return cfg;
}

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--config", opt.config_path, "JSON run configuration")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", opt.seed, "override the global seed")
        ->each([&opt](const std::string&) { opt.seed_set = true; });
    cmd->add_option("--out", opt.out_dir, "override the output directory")
        ->each([&opt](const std::string&) { opt.out_set = true; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UE-side MCS success-probability forecasting toolkit"};
    app.require_subcommand(1);

    CliOptions opt;
    int stage = -1;
    const char* names[] = {"generate", "preprocess", "train", "evaluate", "bench", "report"};
    const char* descriptions[] = {
        "synthesize slot-level telemetry traces",
        "align, filter, engineer features, build datasets",
        "train the forecaster (and the MSE twin)",
        "run the GOP-paced policy comparison",
        "measure single-window inference latency",
        "render loss curves and metric charts",
    };
    for (int i = 0; i < 6; ++i) {
        CLI::App* cmd = app.add_subcommand(names[i], descriptions[i]);
        add_common_flags(cmd, opt);
        cmd->callback([&stage, i]() { stage = i; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        const mcscast::RunConfig cfg = resolve_config(opt);
        switch (stage) {
            case 0: mcscast::cmd_generate(cfg, std::cout); break;
            case 1: mcscast::cmd_preprocess(cfg, std::cout); break;
            case 2: mcscast::cmd_train(cfg, std::cout); break;
            case 3: mcscast::cmd_evaluate(cfg, std::cout); break;
            case 4: mcscast::cmd_bench(cfg, std::cout); break;
            case 5: mcscast::cmd_report(cfg, std::cout); break;
            default: return kExitUsage;
        }
    } catch (const mcscast::MissingArtifactError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingArtifact;
    } catch (const mcscast::NumericFailureError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumericFailure;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingArtifact;
    }
    return kExitOk;
}
