#pragma once

#include <Eigen/Core>

#include "birl/mdp.hpp"
#include "birl/oracles.hpp"
#include "birl/upper.hpp"

namespace birl {

/// Norm bounds for the three sampled update operators, derived from the value
/// box and the reward range. For rewards in [0,1] these reduce to
///   B_D = 3 L_r,  B_G = (1+gamma) B_V + log|A| + 1,  B_F = 2 B_G + L_r,
/// and they hold on every draw whenever w <= L_r/L_f and tau <= tau_cap.
struct OperatorBounds {
    double b_d = 0.0;
    double b_f = 0.0;
    double b_g = 0.0;
    ValueBox box;

    static OperatorBounds derive(const TabularMdp& mdp, const RewardModel& reward,
                                 const UpperObjective& upper, double tau_cap = 1.0);
};

/// Options resolving the ambiguities in the sampled policy operator.
/// `subtract_value_baseline` keeps the -V(s) term of the abstract operator
/// (the update rule as printed omits it; expectations agree either way).
/// `bracket` selects the regularization term inside the TD bracket: the
/// bounded per-state entropy bonus used by the update rule, or the
/// likelihood-ratio form -tau*log pi(a|s) whose mean is exactly
/// (1-gamma) * grad_theta_return at an exact critic.
struct OperatorOptions {
    enum class TdBracket { entropy_bonus, log_policy };
    bool subtract_value_baseline = true;
    TdBracket bracket = TdBracket::entropy_bonus;
};

/// A sampled operator value paired with the bound that applied at draw time.
template <typename Value>
struct OperatorSample {
    Value value;
    double bound_used = 0.0;
};

// Control-variable operator:
//   sampled_grad_x_f(x, pi_pen) + (grad_x r(s,a) - grad_x r(sb,ab)) / w.
OperatorSample<Eigen::VectorXd> sample_control_step(
    const RewardModel& reward, const Eigen::VectorXd& x, const UpperGradSample& xi,
    int s, int a, int sb, int ab, double w, const OperatorBounds& bounds);

// Policy operator:
//   (r + tau H(pi_theta, s) + gamma V(s') [- V(s)]) * dtheta log pi(a|s)
//   - w * sampled_grad_theta_f.
// The f term arrives as a gradient in pi and is mapped through the softmax.
OperatorSample<Eigen::MatrixXd> sample_policy_step(
    const TabularMdp& mdp, const RewardModel& reward, const Eigen::VectorXd& x,
    const Eigen::MatrixXd& theta, const PolicyTable& pi, const Eigen::VectorXd& v_hat,
    int s, int a, int s_next, const UpperGradSample* xi, double w, double tau,
    const OperatorBounds& bounds, const OperatorOptions& opts = {});

// Critic operator: e_s * (r + tau H(pi_theta, s) + gamma V(s') - V(s)).
OperatorSample<Eigen::VectorXd> sample_critic_step(
    const TabularMdp& mdp, const RewardModel& reward, const Eigen::VectorXd& x,
    const PolicyTable& pi, const Eigen::VectorXd& v_hat, int s, int a, int s_next,
    double tau, const OperatorBounds& bounds);

// ---------------------------------------------------------------------------
// Exact expectations. These are the means the update directions estimate, in
// the convention where they coincide with the true derivatives:
//   expected_policy_step(w=0, exact V)  = grad_theta_return
//   expected_policy_step(w, exact V)    = -(d/dtheta)(w * Lagrangian)
//   expected_critic_step(exact V)       = 0
//   expected_control_step(at oracles)   = penalty_hypergrad
// The reward-difference and TD terms therefore carry the 1/(1-gamma) return
// normalization that the sampled operators omit (the omission rescales the
// effective step sizes, not the direction).
// ---------------------------------------------------------------------------

Eigen::VectorXd expected_control_step(const TabularMdp& mdp, const RewardModel& reward,
                                      const UpperObjective& upper, const Eigen::VectorXd& x,
                                      const PolicyTable& pi, const PolicyTable& pi_pen, double w);

Eigen::MatrixXd expected_policy_step(const TabularMdp& mdp, const RewardModel& reward,
                                     const UpperObjective& upper, const Eigen::VectorXd& x,
                                     const Eigen::MatrixXd& theta, const Eigen::VectorXd& v,
                                     double w, double tau);

Eigen::VectorXd expected_critic_step(const TabularMdp& mdp, const RewardModel& reward,
                                     const Eigen::VectorXd& x, const Eigen::MatrixXd& theta,
                                     const Eigen::VectorXd& v, double tau);

// Exact mean of sample_policy_step under s ~ d_rho^pi, a ~ pi, s' ~ P (the
// literal sampled form, entropy bonus and no return normalization). Backs the
// Monte Carlo consistency tests; differs from expected_policy_step by the
// (1-gamma) scale and an entropy-gradient term that vanishes as tau -> 0.
Eigen::MatrixXd mean_sampled_policy_step(const TabularMdp& mdp, const RewardModel& reward,
                                         const UpperObjective& upper, const Eigen::VectorXd& x,
                                         const Eigen::MatrixXd& theta, const Eigen::VectorXd& v_hat,
                                         double w, double tau,
                                         const OperatorOptions& opts = {});

}  // namespace birl
