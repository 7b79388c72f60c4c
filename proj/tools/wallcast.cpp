// Command-line driver: generate data, prepare windows, train base and meta
// models, roll out, evaluate, attribute, and emit report files.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "wallcast/run.hpp"

namespace {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
int run_command(const std::string& cmd, const wallcast::RunConfig& cfg,
                const std::string& field_csv) {
    using namespace wallcast;
    try {
        if (cmd == "gen") cmd_gen(cfg, std::cout);
        else if (cmd == "prep") cmd_prep(cfg, std::cout);
        else if (cmd == "train") cmd_train(cfg, std::cout);
        else if (cmd == "stack") cmd_stack(cfg, std::cout);
        else if (cmd == "rollout") cmd_rollout(cfg, std::cout, field_csv);
        else if (cmd == "eval") cmd_eval(cfg, std::cout);
        else if (cmd == "shap") cmd_shap(cfg, std::cout, field_csv);
        else if (cmd == "report") cmd_report(cfg, std::cout);
        else if (cmd == "all") run_all(cfg, std::cout);
        else {
            std::cerr << "unknown command: " << cmd << "\n";
            return 1;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        std::cerr << "error: " << what << "\n";
        return what.find("diverged") != std::string::npos ||
                       what.find("non-finite") != std::string::npos
                   ? 3
                   : 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"staged-excavation wall-deflection forecasting engine"};
    app.require_subcommand(1);

    std::string config_path;
    std::string scale = "paper";
    std::string field_csv;
    wallcast::RunConfig cfg;
    bool seed_set = false, threads_set = false;
    std::uint64_t seed = 0;
    int threads = 1;

    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "RNG seed (overrides config)")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_option("--threads", threads, "worker threads (1 = fully deterministic)")
        ->each([&](const std::string&) { threads_set = true; });
    app.add_option("--scale", scale, "desk|paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--run-dir", cfg.run_dir, "run directory for all artifacts");
    app.add_option("--field", field_csv, "field CSV for rollout/shap");

    for (const char* name : {"gen", "prep", "train", "stack", "rollout", "eval",
                             "shap", "report", "all"})
        app.add_subcommand(name)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "error: cannot open config " << config_path << "\n";
            return 1;
        }
        try {
            wallcast::config_from_json(wallcast::json::parse(in), cfg);
        } catch (const std::exception& e) {
            std::cerr << "error: bad config: " << e.what() << "\n";
            return 1;
        }
    }
    if (scale == "desk") wallcast::apply_desk_scale(cfg);
    if (seed_set) cfg.seed = seed;
    if (threads_set) cfg.threads = threads;

    return run_command(app.get_subcommands().front()->get_name(), cfg, field_csv);
}
