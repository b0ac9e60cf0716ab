#pragma once

#include <cstdint>
#include <string>

#include "birl/algorithm.hpp"
#include "birl/baselines.hpp"
#include "birl/gridworld.hpp"
#include "birl/oracles.hpp"
#include "birl/preference.hpp"
#include "birl/schedules.hpp"

namespace birl {

/// Everything a run needs, parsed from `key = value` text grouped in
/// [sections]. Unknown sections or keys are hard errors.
struct RunConfig {
    // [run]
    std::string environment = "gridworld";  // gridworld | preference
    std::string algorithm = "proposed";     // proposed | proposed_fixed_tau | partial_sgd |
                                            // finite_difference | nested_loop
    long long iterations = 1000;
    std::uint64_t seed = 1;
    std::string mode = "markovian";  // markovian | iid
    double checkpoint_ratio = 1.2;
    bool strict_theory = false;
    bool record_residuals = true;
    bool td_target_uses_restart = false;
    bool subtract_value_baseline = true;
    long long recenter_every = 10000;

    // [schedules]
    std::string preset = "decaying_tau";  // decaying_tau | fixed_tau | custom
    ScheduleSet schedules = ScheduleSet::decaying_tau_preset();

    // [oracle]
    OracleConfig oracle;

    // [gridworld] / [preference] / [baseline]
    GridWorldSpec gridworld;
    PreferenceProblemSpec preference;
    BaselineConfig baseline;

    void validate() const;  // cross-field checks; throws std::invalid_argument
};

// Parses config text; `source` labels diagnostics. Throws with line/key info.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");

RunConfig load_config_file(const std::string& path);

// Applies one `section.key=value` override in place.
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace birl
