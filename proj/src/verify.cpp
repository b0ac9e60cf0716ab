#include "birl/verify.hpp"

#include <atomic>
#include <cstdio>
#include <stdexcept>
#include <thread>

#include "verify_detail.hpp"

namespace birl {

namespace {

using detail::timed_check;

std::vector<CheckSpec> build_registry() {
    using namespace detail;
    std::vector<CheckSpec> reg;
    auto add = [&](const std::string& name, int criterion, void (*fn)(Checker&)) {
        reg.push_back(CheckSpec{name, criterion, [name, fn] { return timed_check(name, fn); }});
    };

    // Acceptance criteria, in order.
    add("gradients.fd-agreement", 1, check_gradient_fd_agreement);
    add("operators.expected-identities", 2, check_expected_operator_identities);
    add("oracle.soft-value-iteration", 3, check_soft_value_iteration);
    add("oracle.best-response-cauchy-rate", 4, check_best_response_cauchy_rate);
    add("oracle.penalty-bias-linear", 5, check_penalty_bias_linear_in_w);
    add("sampling.stationarity", 6, check_sampling_stationarity);
    add("run.bound-safety", 7, check_run_bound_safety);
    add("run.gridworld-ordering", 8, check_gridworld_ordering);
    add("run.descent-trend", 9, check_descent_trend);
    add("run.determinism", 10, check_run_determinism);

    // Module invariants.
    add("mdp.visitation-restart-fixed-point", 0, check_visitation_restart_fixed_point);
    add("mdp.value-monotone-in-tau", 0, check_value_monotone_in_tau);
    add("mdp.return-tau-lipschitz", 0, check_return_tau_lipschitz);
    add("policy.log-grad-fd", 0, check_log_policy_grad_fd);
    add("policy.log-grad-norm-bound", 0, check_log_policy_grad_norm_bound);
    add("oracle.grad-zero-at-best-response", 0, check_grad_zero_at_best_response);
    add("oracle.entropy-selection", 0, check_entropy_selection);
    add("oracle.penalty-hypergrad-fd", 0, check_penalty_hypergrad_fd);
    add("oracle.phi-refinement", 0, check_phi_refinement);
    add("oracle.residual-dual-path", 0, check_residual_nonneg_dual_path);
    add("operators.monte-carlo-consistency", 0, check_operator_monte_carlo);
    add("operators.bound-sweep", 0, check_operator_bound_sweep);
    add("algorithm.schedule-examples", 0, check_schedule_examples);
    add("algorithm.hand-traced-step", 0, check_hand_traced_step);
    add("algorithm.theta-ascent-residual", 0, check_theta_ascent_residual);
    add("baselines.partial-decomposition", 0, check_partial_decomposition);
    add("baselines.fd-oracle-substitution", 0, check_fd_oracle_substitution);
    add("baselines.nested-inner-convergence", 0, check_nested_inner_convergence);
    add("env.gridworld-formulas", 0, check_gridworld_formulas);
    add("env.gridworld-corner-sweep", 0, check_gridworld_corner_sweep);
    add("env.preference-model", 0, check_preference_model);
    add("harness.trace-roundtrip", 0, check_trace_roundtrip);
    add("harness.config-errors", 0, check_config_errors);
    return reg;
}

}  // namespace

const std::vector<CheckSpec>& check_registry() {
    static const std::vector<CheckSpec> registry = build_registry();
    return registry;
}

CheckResult run_check(const std::string& name) {
    for (const CheckSpec& spec : check_registry()) {
        if (spec.name == name) return spec.fn();
    }
    throw std::invalid_argument("unknown check: " + name);
}

int run_checks(const std::vector<std::string>& names, bool acceptance_only, int jobs) {
    std::vector<const CheckSpec*> selected;
    for (const CheckSpec& spec : check_registry()) {
        if (acceptance_only && spec.criterion == 0) continue;
        if (!names.empty()) {
            bool wanted = false;
            for (const std::string& n : names) wanted = wanted || n == spec.name;
            if (!wanted) continue;
        }
        selected.push_back(&spec);
    }
    if (selected.empty()) {
        std::fprintf(stderr, "no checks selected\n");
        return 1;
    }

    std::vector<CheckResult> results(selected.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= selected.size()) return;
            results[i] = selected[i]->fn();
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::max(1, jobs); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    int failures = 0;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        const CheckResult& r = results[i];
        if (!r.pass) ++failures;
        std::string tag = selected[i]->criterion > 0
                              ? "criterion " + std::to_string(selected[i]->criterion) + " "
                              : "";
        std::printf("%s %s%s (%.2fs) %s\n", r.pass ? "PASS" : "FAIL", tag.c_str(),
                    r.name.c_str(), r.seconds, r.detail.c_str());
    }
    std::printf("%zu/%zu checks passed\n", selected.size() - failures, selected.size());
    return failures;
}

}  // namespace birl
