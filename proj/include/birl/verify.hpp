#pragma once

#include <functional>
#include <string>
#include <vector>

namespace birl {

/// Outcome of one named verification check.
struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct CheckSpec {
    std::string name;
    int criterion = 0;  // acceptance criterion number, 0 for module invariants
    std::function<CheckResult()> fn;
};

// The full registry: every module invariant plus the ten acceptance criteria.
const std::vector<CheckSpec>& check_registry();

CheckResult run_check(const std::string& name);

// Runs the listed checks (all when names is empty), printing one line each to
// stdout. Returns the number of failures.
int run_checks(const std::vector<std::string>& names, bool acceptance_only = false,
               int jobs = 1);

}  // namespace birl
