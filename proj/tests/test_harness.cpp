#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "birl/config.hpp"
#include "birl/runner.hpp"
#include "birl/trace_io.hpp"

using namespace birl;

namespace {

const char* kSmallConfig =
    "[run]\n"
    "environment = gridworld\n"
    "algorithm = proposed\n"
    "iterations = 50\n"
    "seed = 11\n"
    "checkpoint_ratio = 2.0\n"
    "record_residuals = off\n"
    "[schedules]\n"
    "zeta0 = 0.01\n"
    "alpha0 = 0.002\n"
    "beta0 = 0.3\n"
    "w0 = 0.5\n"
    "tau0 = 1.0\n"
    "[oracle]\n"
    "gd_tol = 1e-6\n"
    "[gridworld]\n"
    "width = 4\n"
    "height = 4\n"
    "lambda = 2.0\n";

}  // namespace

TEST_CASE("config parsing round trip and overrides") {
    RunConfig cfg = parse_config(kSmallConfig, "small.cfg");
    CHECK(cfg.iterations == 50);
    CHECK(cfg.gridworld.width == 4);
    CHECK(cfg.record_residuals == false);
    apply_override(cfg, "run.iterations=25");
    CHECK(cfg.iterations == 25);
    CHECK_THROWS(apply_override(cfg, "run.iterations=notanumber"));
    CHECK_THROWS(parse_config("[run]\nunknown_key = 1\n", "x.cfg"));
}

TEST_CASE("execute_run produces comparable deterministic traces") {
    const RunConfig cfg = parse_config(kSmallConfig, "small.cfg");
    const auto t1 = execute_run(cfg);
    const auto t2 = execute_run(cfg);
    CHECK(format_trace(t1) == format_trace(t2));
    CHECK(t1.front().k == 0);
    CHECK(t1.back().k == 50);
    CHECK(t1.back().samples == 100);
}

TEST_CASE("trace files round trip bit-exactly") {
    const RunConfig cfg = parse_config(kSmallConfig, "small.cfg");
    const auto trace = execute_run(cfg);
    const auto path = std::filesystem::temp_directory_path() / "birl_test_trace.csv";
    write_trace(path.string(), trace);
    const auto parsed = read_trace(path.string());
    CHECK(format_trace(parsed) == format_trace(trace));
    std::filesystem::remove(path);
}

TEST_CASE("sweep expansion covers the product with seeds") {
    const auto cells = expand_sweep({"schedules.tau0=0.5|1.0", "run.mode=markovian|iid"}, {1, 2});
    CHECK(cells.size() == 8);
    for (const auto& cell : cells) {
        CHECK(cell.overrides.size() == 3);  // two axes plus the seed
    }

    const auto single = expand_sweep({}, {7});
    CHECK(single.size() == 1);
    CHECK(single[0].overrides.size() == 1);
}

TEST_CASE("sweep writes one file per cell plus an index") {
    namespace fs = std::filesystem;
    const RunConfig base = parse_config(kSmallConfig, "small.cfg");
    const auto dir = fs::temp_directory_path() / "birl_sweep_test";
    fs::remove_all(dir);
    const int failures = run_sweep(base, {"run.iterations=5|10"}, {1, 2}, dir.string(), 2);
    CHECK(failures == 0);
    CHECK(fs::exists(dir / "index.csv"));
    int csv_count = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".csv") ++csv_count;
    }
    CHECK(csv_count == 5);  // four cells plus the index
    fs::remove_all(dir);
}

TEST_CASE("phi sweep on a small grid reports the corner") {
    RunConfig cfg = parse_config(kSmallConfig, "small.cfg");
    apply_override(cfg, "gridworld.lambda=4.0");
    const auto path = std::filesystem::temp_directory_path() / "birl_phi_sweep.csv";
    const std::string summary = run_phi_sweep(cfg, path.string());
    CHECK(summary.find("argmin (3, 3)") != std::string::npos);
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "x_0,x_1,phi");
    int rows = 0;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 16);
    std::filesystem::remove(path);
}

TEST_CASE("iid mode runs end to end on a small instance") {
    RunConfig cfg = parse_config(kSmallConfig, "small.cfg");
    apply_override(cfg, "run.mode=iid");
    apply_override(cfg, "run.iterations=20");
    const auto trace = execute_run(cfg);
    CHECK(trace.back().k == 20);
    CHECK(trace.back().samples == 40);
}

TEST_CASE("preference environment runs end to end and improves the loss") {
    RunConfig cfg;
    cfg.environment = "preference";
    cfg.algorithm = "proposed";
    cfg.iterations = 4000;
    cfg.seed = 1;
    cfg.record_residuals = false;
    cfg.schedules.zeta0 = 0.05;
    cfg.schedules.alpha0 = 0.5;
    cfg.schedules.beta0 = 0.5;
    cfg.schedules.w0 = 0.5;
    cfg.schedules.tau0 = 0.5;
    cfg.oracle.gd_tol = 1e-7;
    cfg.validate();
    const auto trace = execute_run(cfg);
    // The pairwise loss starts at log 2 under the zero reward table and must
    // improve as the table aligns with the hidden scorer.
    CHECK(trace.front().phi == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(trace.back().phi < trace.front().phi - 0.01);
}
