#pragma once

#include <memory>
#include <string>
#include <vector>

#include "birl/config.hpp"

namespace birl {

/// A problem instance bound to a config, with the owning environment kept
/// alive alongside the problem view.
struct BoundProblem {
    BilevelProblem problem;
    std::shared_ptr<PreferenceEnvironment> preference_env;  // null for gridworld
};

BoundProblem bind_problem(const RunConfig& cfg);

RunOptions build_run_options(const RunConfig& cfg);

// Executes the configured algorithm and returns its trace.
std::vector<TraceRecord> execute_run(const RunConfig& cfg);

/// One sweep cell: the base config with a set of overrides applied.
struct SweepCell {
    std::vector<std::string> overrides;
    std::string file_name;
};

// Cartesian product of `key=v1|v2|...` axes crossed with the seed list.
std::vector<SweepCell> expand_sweep(const std::vector<std::string>& axes,
                                    const std::vector<std::uint64_t>& seeds);

// Runs every cell (up to `jobs` in parallel), writing one trace CSV per cell
// into out_dir plus an index.csv mapping cells to files. Returns the number of
// failed cells.
int run_sweep(const RunConfig& base, const std::vector<std::string>& axes,
              const std::vector<std::uint64_t>& seeds, const std::string& out_dir, int jobs);

// Lattice sweep of the bi-level objective over integer goals; writes a CSV of
// (x_0, x_1, phi) and returns the argmin row.
std::string run_phi_sweep(const RunConfig& cfg, const std::string& out_path);

}  // namespace birl
