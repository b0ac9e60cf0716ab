#include "birl/runner.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "birl/baselines.hpp"
#include "birl/trace_io.hpp"

namespace birl {

BoundProblem bind_problem(const RunConfig& cfg) {
    BoundProblem bound;
    if (cfg.environment == "gridworld") {
        bound.problem = make_gridworld_problem(cfg.gridworld);
    } else {
        bound.preference_env = std::make_shared<PreferenceEnvironment>(cfg.preference);
        bound.problem = bound.preference_env->problem();
    }
    bound.problem.mdp.validate();
    return bound;
}

RunOptions build_run_options(const RunConfig& cfg) {
    RunOptions opt;
    opt.iterations = cfg.iterations;
    opt.seed = cfg.seed;
    opt.mode = cfg.mode == "iid" ? SamplingMode::iid : SamplingMode::markovian;
    opt.schedules = cfg.schedules;
    opt.oracle = cfg.oracle;
    opt.checkpoint_ratio = cfg.checkpoint_ratio;
    opt.strict_theory = cfg.strict_theory;
    opt.td_target_uses_restart = cfg.td_target_uses_restart;
    opt.operator_options.subtract_value_baseline = cfg.subtract_value_baseline;
    opt.recenter_every = cfg.recenter_every;
    opt.record_residuals = cfg.record_residuals;
    if (cfg.algorithm == "proposed_fixed_tau") {
        ScheduleSet s = ScheduleSet::fixed_tau_preset(cfg.baseline.fixed_tau);
        s.zeta0 = cfg.schedules.zeta0;
        s.alpha0 = cfg.schedules.alpha0;
        s.beta0 = cfg.schedules.beta0;
        s.w0 = cfg.schedules.w0;
        opt.schedules = s;
    }
    return opt;
}

std::vector<TraceRecord> execute_run(const RunConfig& cfg) {
    const BoundProblem bound = bind_problem(cfg);
    const RunOptions opt = build_run_options(cfg);

    if (cfg.algorithm == "proposed" || cfg.algorithm == "proposed_fixed_tau") {
        SingleLoopDriver driver(bound.problem, opt);
        return driver.run();
    }
    if (cfg.algorithm == "partial_sgd") {
        PartialSgdDriver driver(bound.problem, opt);
        return driver.run();
    }
    if (cfg.algorithm == "finite_difference") {
        FiniteDifferenceDriver driver(bound.problem, opt, cfg.baseline);
        return driver.run();
    }
    if (cfg.algorithm == "nested_loop") {
        NestedLoopDriver driver(bound.problem, opt, cfg.baseline);
        return driver.run();
    }
    throw std::invalid_argument("execute_run: unknown algorithm " + cfg.algorithm);
}

namespace {

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) {
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::vector<SweepCell> expand_sweep(const std::vector<std::string>& axes,
                                    const std::vector<std::uint64_t>& seeds) {
    std::vector<std::vector<std::string>> choices;  // per axis: key=value strings
    for (const std::string& axis : axes) {
        const auto eq = axis.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("sweep axis must look like key=v1|v2: " + axis);
        }
        const std::string key = axis.substr(0, eq);
        std::vector<std::string> cell;
        for (const std::string& v : split(axis.substr(eq + 1), '|')) {
            cell.push_back(key + "=" + v);
        }
        choices.push_back(std::move(cell));
    }

    std::vector<SweepCell> cells;
    std::vector<std::size_t> idx(choices.size(), 0);
    while (true) {
        for (std::uint64_t seed : seeds) {
            SweepCell cell;
            std::string name;
            for (std::size_t i = 0; i < choices.size(); ++i) {
                cell.overrides.push_back(choices[i][idx[i]]);
                name += sanitize(choices[i][idx[i]]) + "__";
            }
            cell.overrides.push_back("run.seed=" + std::to_string(seed));
            cell.file_name = name + "seed" + std::to_string(seed) + ".csv";
            cells.push_back(std::move(cell));
        }
        // advance the mixed-radix counter
        std::size_t i = 0;
        for (; i < choices.size(); ++i) {
            if (++idx[i] < choices[i].size()) break;
            idx[i] = 0;
        }
        if (i == choices.size()) break;
        if (choices.empty()) break;
    }
    return cells;
}

int run_sweep(const RunConfig& base, const std::vector<std::string>& axes,
              const std::vector<std::uint64_t>& seeds, const std::string& out_dir, int jobs) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::vector<SweepCell> cells = expand_sweep(axes, seeds);

    std::atomic<std::size_t> next{0};
    std::atomic<int> failures{0};
    std::mutex log_mutex;
    std::vector<std::string> index_rows(cells.size());

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            RunConfig cfg = base;
            std::string status = "ok";
            try {
                for (const std::string& ov : cells[i].overrides) apply_override(cfg, ov);
                const auto trace = execute_run(cfg);
                write_trace((fs::path(out_dir) / cells[i].file_name).string(), trace);
            } catch (const std::exception& e) {
                status = std::string("failed: ") + e.what();
                failures.fetch_add(1);
                std::lock_guard<std::mutex> lock(log_mutex);
                std::fprintf(stderr, "sweep cell %s %s\n", cells[i].file_name.c_str(), e.what());
            }
            std::string overrides_joined;
            for (const std::string& ov : cells[i].overrides) {
                if (!overrides_joined.empty()) overrides_joined += ";";
                overrides_joined += ov;
            }
            index_rows[i] = cells[i].file_name + "," + overrides_joined + "," + status;
        }
    };

    std::vector<std::thread> pool;
    const int n_threads = std::max(1, jobs);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    // The coordinator writes the index once, after all cells finished.
    std::ofstream index((fs::path(out_dir) / "index.csv").string(), std::ios::binary);
    index << "file,overrides,status\n";
    for (const std::string& row : index_rows) index << row << "\n";
    return failures.load();
}

std::string run_phi_sweep(const RunConfig& cfg, const std::string& out_path) {
    if (cfg.environment != "gridworld") {
        throw std::invalid_argument("sweep-phi requires the gridworld environment");
    }
    Eigen::MatrixXd table;
    const auto [best, best_phi] =
        gridworld_phi_sweep(cfg.gridworld, cfg.oracle.phi_eval_tau, &table);

    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw std::runtime_error("sweep-phi: cannot open " + out_path);
    f << "x_0,x_1,phi\n";
    char buf[160];
    for (int row = 0; row < table.rows(); ++row) {
        for (int col = 0; col < table.cols(); ++col) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", col, row, table(row, col));
            f << buf;
        }
    }
    std::snprintf(buf, sizeof(buf), "argmin (%g, %g), phi %.17g", best[0], best[1], best_phi);
    return buf;
}

}  // namespace birl
