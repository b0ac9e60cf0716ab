#pragma once

#include <vector>

#include <Eigen/Core>

#include "birl/algorithm.hpp"
#include "birl/problem.hpp"

namespace birl {

struct BaselineConfig {
    long long inner_iters = 2000;  // inner solves of the nested and fd drivers
    double fd_epsilon = 0.45;      // perturbation radius of the fd driver
    double fixed_tau = 1.0;        // constant-regularization variant
    double inner_tau = 0.01;       // entropy weight inside inner actor-critic solves
    double inner_decay = 0.5;      // power-law exponent of the inner step sizes
};

/// Alternating ascent/descent on the partial gradients: the control variable
/// follows the direct gradient of f only, while the policy runs an
/// unregularized actor-critic on the current reward.
class PartialSgdDriver {
  public:
    PartialSgdDriver(const BilevelProblem& problem, const RunOptions& options);

    struct State {
        Eigen::VectorXd x;
        Eigen::MatrixXd theta;
        Eigen::VectorXd v_hat;
        int cursor = 0;
        long long k = 0;
        long long samples = 0;
        Rng rng{0};
    };

    State make_initial_state() const;
    void step(State& state) const;
    std::vector<TraceRecord> run() const;
    TraceRecord checkpoint(const State& state) const;

  private:
    const BilevelProblem& problem_;
    RunOptions options_;
    OperatorBounds bounds_;
};

/// Hypergradient by perturbing the control variable and re-solving the policy:
/// two inner actor-critic solves per outer step give the best responses at
/// x +/- eps * direction; a simultaneous-perturbation chain rule assembles the
/// control update. Inner solves warm-start from the previous outer step.
class FiniteDifferenceDriver {
  public:
    FiniteDifferenceDriver(const BilevelProblem& problem, const RunOptions& options,
                           const BaselineConfig& baseline);

    struct State {
        Eigen::VectorXd x;
        Eigen::MatrixXd theta_plus, theta_minus;
        Eigen::VectorXd v_plus, v_minus;
        int cursor_plus = 0, cursor_minus = 0;
        long long k = 0;
        long long samples = 0;
        Rng rng{0};
    };

    State make_initial_state() const;
    void step(State& state) const;
    std::vector<TraceRecord> run() const;
    TraceRecord checkpoint(const State& state) const;

    // Chain-rule direction given the two perturbed best responses; exposed so
    // tests can substitute oracle policies for the inner solver output.
    Eigen::VectorXd assemble_direction(const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& direction,
                                       const PolicyTable& pi_plus, const PolicyTable& pi_minus,
                                       Rng& rng) const;

  private:
    void inner_solve(Eigen::VectorXd& x_eval, Eigen::MatrixXd& theta, Eigen::VectorXd& v_hat,
                     int& cursor, Rng& rng) const;

    const BilevelProblem& problem_;
    RunOptions options_;
    BaselineConfig baseline_;
    OperatorBounds bounds_;
};

/// Nested-loop variant of the single-loop driver: per outer step the four fast
/// iterates run `inner_iters` updates at frozen x, then one control update is
/// taken from fresh samples at the inner solutions.
class NestedLoopDriver {
  public:
    NestedLoopDriver(const BilevelProblem& problem, const RunOptions& options,
                     const BaselineConfig& baseline);

    RunState make_initial_state() const;
    void outer_step(RunState& state) const;
    std::vector<TraceRecord> run() const;
    TraceRecord checkpoint(const RunState& state, long long outer_k) const;

  private:
    const BilevelProblem& problem_;
    RunOptions options_;
    BaselineConfig baseline_;
    OperatorBounds bounds_;
};

}  // namespace birl
