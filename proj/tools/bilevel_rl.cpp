#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "birl/config.hpp"
#include "birl/runner.hpp"
#include "birl/trace_io.hpp"
#include "birl/verify.hpp"

namespace {

std::string default_out_dir() {
    const char* env = std::getenv("BILEVEL_RL_OUT");
    return env ? env : "out";
}

birl::RunConfig load_with_overrides(const std::string& config_path,
                                    const std::vector<std::string>& overrides,
                                    bool seed_set, std::uint64_t seed) {
    birl::RunConfig cfg =
        config_path.empty() ? birl::RunConfig{} : birl::load_config_file(config_path);
    for (const std::string& ov : overrides) birl::apply_override(cfg, ov);
    if (seed_set) cfg.seed = seed;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bi-level RL experiment harness"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path;
    std::string out_dir = default_out_dir();
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 1;
    std::vector<std::string> overrides;

    app.add_option("--config", config_path, "Config file path");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--seed", seed, "Seed override")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--jobs", jobs, "Parallel workers");
    app.add_option("--override", overrides, "section.key=value override (repeatable)");

    auto* cmd_run = app.add_subcommand("run", "Execute one configured run and write its trace");
    auto* cmd_sweep = app.add_subcommand("sweep", "Cartesian sweep over keys and seeds");
    auto* cmd_verify =
        app.add_subcommand("verify", "Run the invariant and acceptance check suite");
    auto* cmd_sweep_phi =
        app.add_subcommand("sweep-phi", "Evaluate the bi-level objective on the goal lattice");

    std::vector<std::string> sweep_axes;
    std::string seeds_arg = "1";
    cmd_sweep->add_option("--axis", sweep_axes,
                          "Sweep axis key=v1|v2|... (repeatable)");
    cmd_sweep->add_option("--seeds", seeds_arg, "Comma-separated seed list");

    std::vector<std::string> check_names;
    bool acceptance_only = false;
    cmd_verify->add_option("--check", check_names, "Run only the named checks (repeatable)");
    cmd_verify->add_flag("--acceptance", acceptance_only, "Run only the acceptance criteria");
    bool list_checks = false;
    cmd_verify->add_flag("--list", list_checks, "List check names and exit");

    CLI11_PARSE(app, argc, argv);

    try {
        namespace fs = std::filesystem;
        if (cmd_run->parsed()) {
            const birl::RunConfig cfg =
                load_with_overrides(config_path, overrides, seed_set, seed);
            const auto trace = birl::execute_run(cfg);
            fs::create_directories(out_dir);
            const std::string path =
                (fs::path(out_dir) / (cfg.environment + "_" + cfg.algorithm + "_seed" +
                                      std::to_string(cfg.seed) + ".csv"))
                    .string();
            birl::write_trace(path, trace);
            std::printf("wrote %s (%zu records, final phi %.6f)\n", path.c_str(), trace.size(),
                        trace.back().phi);
            return 0;
        }
        if (cmd_sweep->parsed()) {
            const birl::RunConfig base =
                load_with_overrides(config_path, overrides, seed_set, seed);
            std::vector<std::uint64_t> seeds;
            std::stringstream ss(seeds_arg);
            std::string cell;
            while (std::getline(ss, cell, ',')) seeds.push_back(std::stoull(cell));
            const int failures = birl::run_sweep(base, sweep_axes, seeds, out_dir, jobs);
            std::printf("sweep finished, %d failed cells, index at %s/index.csv\n", failures,
                        out_dir.c_str());
            return failures == 0 ? 0 : 1;
        }
        if (cmd_verify->parsed()) {
            if (list_checks) {
                for (const auto& spec : birl::check_registry()) {
                    std::printf("%s%s\n", spec.name.c_str(),
                                spec.criterion > 0
                                    ? (" (criterion " + std::to_string(spec.criterion) + ")")
                                          .c_str()
                                    : "");
                }
                return 0;
            }
            return birl::run_checks(check_names, acceptance_only, jobs) == 0 ? 0 : 1;
        }
        if (cmd_sweep_phi->parsed()) {
            const birl::RunConfig cfg =
                load_with_overrides(config_path, overrides, seed_set, seed);
            fs::create_directories(out_dir);
            const std::string path = (fs::path(out_dir) / "phi_sweep.csv").string();
            const std::string summary = birl::run_phi_sweep(cfg, path);
            std::printf("%s\nwrote %s\n", summary.c_str(), path.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
