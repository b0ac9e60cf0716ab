#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "birl/mdp.hpp"
#include "birl/upper.hpp"

namespace birl {

struct OracleConfig {
    double svi_tol = 1e-12;       // sup-norm Bellman residual target
    int svi_max_iter = 200000;
    double gd_tol = 1e-9;         // gradient-norm target for the Lagrangian solver
    int gd_max_iter = 200000;
    double fd_step = 1e-5;        // central-difference step, scaled per coordinate
    double phi_eval_tau = 1e-6;   // small-tau proxy for the unregularized selection
};

/// Thrown when an iterative oracle fails to reach its tolerance; carries the
/// residual it stopped at.
struct ConvergenceFailure : std::runtime_error {
    ConvergenceFailure(const std::string& what, double residual_)
        : std::runtime_error(what), residual(residual_) {}
    double residual;
};

struct SoftSolution {
    Eigen::VectorXd value;  // fixed point of the log-sum-exp backup
    PolicyTable policy;     // row s proportional to exp(Q(s,.)/tau)
    double residual = 0.0;
    int iterations = 0;
};

// Entropy-regularized optimal policy and value by log-sum-exp value iteration.
// Requires tau > 0.
SoftSolution soft_value_iteration(const TabularMdp& mdp, const RewardModel& reward,
                                  const Eigen::VectorXd& x, double tau,
                                  const OracleConfig& cfg = {});

// Scalar objective used by the Lagrangian solver and its finite differences:
//   w * L(x, pi) = w f(x, pi) + max_pi' J_tau(x, pi') - J_tau(x, pi).
double scaled_lagrangian(const TabularMdp& mdp, const RewardModel& reward,
                         const UpperObjective& upper, const Eigen::VectorXd& x,
                         const PolicyTable& pi, double w, double tau,
                         const OracleConfig& cfg = {});

struct LagrangianSolution {
    PolicyTable policy;
    Eigen::MatrixXd theta;
    double scaled_objective = 0.0;  // w * L at the solution
    double grad_norm = 0.0;
    int iterations = 0;
};

// argmin_pi of the penalized objective above, solved by spectral-step gradient
// descent on softmax logits with a backtracking safeguard. Warm-started from
// the entropy-regularized best response. Requires w > 0, tau > 0.
LagrangianSolution lagrangian_minimizer(const TabularMdp& mdp, const RewardModel& reward,
                                        const UpperObjective& upper, const Eigen::VectorXd& x,
                                        double w, double tau, const OracleConfig& cfg = {});

// First-order hypergradient of the penalized surrogate at oracle policies:
//   grad_x f(x, pi_pen) + (grad_x J_tau(x, pi_reg) - grad_x J_tau(x, pi_pen)) / w,
// where pi_reg / pi_pen are the regularized and penalized best responses. Both
// reward-gradient terms carry the 1/(1-gamma) return convention, so the result
// is the exact derivative of the penalized surrogate objective.
Eigen::VectorXd penalty_hypergrad(const TabularMdp& mdp, const RewardModel& reward,
                                  const UpperObjective& upper, const Eigen::VectorXd& x,
                                  double w, double tau, const OracleConfig& cfg = {});

// Central finite differences of x -> f(x, best_response_tau(x)); bypasses all
// second-order terms. Step per coordinate: fd_step * max(1, |x_i|).
Eigen::VectorXd fd_hypergrad(const TabularMdp& mdp, const RewardModel& reward,
                             const UpperObjective& upper, const Eigen::VectorXd& x,
                             double tau, const OracleConfig& cfg = {});

// Surrogate upper objective f(x, best_response_tau(x)).
double phi_at_tau(const TabularMdp& mdp, const RewardModel& reward,
                  const UpperObjective& upper, const Eigen::VectorXd& x, double tau,
                  const OracleConfig& cfg = {});

// Bi-level objective with the max-entropy selection approximated at
// cfg.phi_eval_tau.
double phi_exact(const TabularMdp& mdp, const RewardModel& reward,
                 const UpperObjective& upper, const Eigen::VectorXd& x,
                 const OracleConfig& cfg = {});

/// Tracking errors of the four fast iterates against their oracle targets.
struct LyapunovResiduals {
    double eps_theta = 0.0;    // return gap of the policy iterate
    double eps_theta_pen = 0.0;  // scaled Lagrangian gap of the penalized iterate
    double eps_v = 0.0;        // squared critic error
    double eps_v_pen = 0.0;    // squared penalized-critic error
};

LyapunovResiduals lyapunov_residuals(const TabularMdp& mdp, const RewardModel& reward,
                                     const UpperObjective& upper, const Eigen::VectorXd& x,
                                     const Eigen::MatrixXd& theta, const Eigen::MatrixXd& theta_pen,
                                     const Eigen::VectorXd& v_hat, const Eigen::VectorXd& v_hat_pen,
                                     double w, double tau, const OracleConfig& cfg = {});

}  // namespace birl
