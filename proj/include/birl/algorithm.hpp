#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "birl/mdp.hpp"
#include "birl/operators.hpp"
#include "birl/oracles.hpp"
#include "birl/problem.hpp"
#include "birl/rng.hpp"
#include "birl/schedules.hpp"

namespace birl {

/// All coupled iterates of the single-loop driver.
struct RunState {
    Eigen::VectorXd x;
    Eigen::MatrixXd theta;      // policy logits
    Eigen::MatrixXd theta_pen;  // penalized-policy logits
    Eigen::VectorXd v_hat;
    Eigen::VectorXd v_hat_pen;
    int cursor1 = 0;
    int cursor2 = 0;
    long long k = 0;
    long long samples = 0;
    Rng rng{0};
};

/// One checkpoint row of a run. Oracle quantities (phi, grad_norm, residuals)
/// are evaluated only at checkpoints.
struct TraceRecord {
    long long k = 0;
    long long samples = 0;
    double phi = 0.0;
    double grad_norm = 0.0;
    LyapunovResiduals residuals;
    Eigen::VectorXd x;
    ScheduleSet::Values sched{};
};

enum class SamplingMode { markovian, iid };

struct RunOptions {
    long long iterations = 0;
    std::uint64_t seed = 1;
    SamplingMode mode = SamplingMode::markovian;
    ScheduleSet schedules;
    OracleConfig oracle;
    double checkpoint_ratio = 1.2;  // geometric cadence of trace records
    bool strict_theory = false;     // enforce the base ordering
    bool td_target_uses_restart = false;  // feed the restarted cursor to the TD target
    OperatorOptions operator_options;
    double tau_cap = 1.0;  // widens the critic box when tau0 exceeds it
    long long recenter_every = 10000;  // logit re-centering period
    // Oracle evaluation of the residual columns can be disabled when traces
    // are consumed for phi only (keeps long sweeps cheap); the columns are
    // emitted as nan.
    bool record_residuals = true;
};

/// Thrown when an iterate becomes non-finite; carries the last finite
/// checkpoint for diagnosis.
struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& what, TraceRecord last_good_)
        : std::runtime_error(what), last_good(std::move(last_good_)) {}
    TraceRecord last_good;
};

/// One environment interaction drawn by the restart chain.
struct TrajectoryStep {
    int s = 0;
    int a = 0;
    int s_next = 0;      // true environment next state (TD target)
    int new_cursor = 0;  // restarted with probability 1-gamma
};

// Advance the gamma-restart trajectory by one step: act from `cursor`, then
// restart the cursor from rho with probability 1-gamma.
TrajectoryStep advance_trajectory(const TabularMdp& mdp, const PolicyTable& pi, int cursor,
                                  Rng& rng);

// Draw (s, a, s') with s from the exact discounted visitation of pi.
TrajectoryStep iid_sample(const TabularMdp& mdp, const PolicyTable& pi, Rng& rng);

// Same draw with the visitation supplied by the caller (for fixed-policy
// sampling loops).
TrajectoryStep iid_sample_with(const TabularMdp& mdp, const PolicyTable& pi,
                               const Eigen::VectorXd& visitation, Rng& rng);

/// Per-iteration observer hook; receives the sampled operator values before
/// they are applied. Used by the bound-safety checks.
struct StepSamples {
    long long k;
    ScheduleSet::Values sched;
    const OperatorSample<Eigen::VectorXd>& control;
    const OperatorSample<Eigen::MatrixXd>& policy;
    const OperatorSample<Eigen::MatrixXd>& policy_pen;
    const OperatorSample<Eigen::VectorXd>& critic;
    const OperatorSample<Eigen::VectorXd>& critic_pen;
    const Eigen::VectorXd& v_hat;
    const Eigen::VectorXd& v_hat_pen;
};
using StepObserver = std::function<void(const StepSamples&)>;

class SingleLoopDriver {
  public:
    SingleLoopDriver(const BilevelProblem& problem, const RunOptions& options);

    RunState make_initial_state() const;

    // One synchronous update of all five iterates from iteration-k samples.
    void step(RunState& state, const StepObserver& observer = nullptr) const;

    // Full run with geometric checkpointing. Deterministic per (options, seed).
    std::vector<TraceRecord> run(const StepObserver& observer = nullptr) const;

    TraceRecord checkpoint(const RunState& state) const;

    const OperatorBounds& bounds() const { return bounds_; }

  private:
    const BilevelProblem& problem_;
    RunOptions options_;
    OperatorBounds bounds_;
};

// Shared by all drivers: appends a checkpoint when k hits the cadence.
bool checkpoint_due(long long k, long long iterations, double ratio, long long last_recorded);

}  // namespace birl
