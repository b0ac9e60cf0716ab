#pragma once

#include <functional>
#include <utility>

#include <Eigen/Core>

namespace birl {

// Row-stochastic |S| x |A| table; row s is the action distribution at s.
using PolicyTable = Eigen::MatrixXd;

/// Finite MDP with an exogenously parameterized reward. Transitions are stored
/// as a (|S|*|A|) x |S| matrix whose row s*|A|+a is the distribution P(.|s,a).
struct TabularMdp {
    int num_states = 0;
    int num_actions = 0;
    Eigen::MatrixXd transition;  // (S*A) x S
    double gamma = 0.99;
    Eigen::VectorXd rho;  // initial state distribution

    int sa_index(int s, int a) const { return s * num_actions + a; }

    // Throws std::invalid_argument when a transition row or rho is not a
    // distribution (1e-12 slack) or rho is not bounded away from zero.
    void validate(double rho_min = 1e-6) const;
};

/// Reward r_x(s,a) differentiable in the control vector x. `r_lo`/`r_hi` bound
/// the reward over the admissible control domain and `grad_bound` bounds
/// ||grad_x r||; both feed the critic box and the operator norm bounds.
struct RewardModel {
    int dim_x = 0;
    double r_lo = 0.0;
    double r_hi = 1.0;
    double grad_bound = 1.0;  // L_r
    std::function<double(const Eigen::VectorXd& x, int s, int a)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd& x, int s, int a)> grad_x;
};

/// Projection interval for critic iterates. The width equals
/// (r_hi - r_lo + tau_cap*log|A|)/(1-gamma) and the interval starts at
/// r_lo/(1-gamma), so the true regularized values always fit for tau <= tau_cap.
/// For rewards in [0,1] and tau_cap = 1 this is the usual (1+log|A|)/(1-gamma) box.
struct ValueBox {
    double lo = 0.0;
    double width = 0.0;  // B_V

    double hi() const { return lo + width; }
    double clamp(double v) const;

    static ValueBox from_reward_range(double r_lo, double r_hi, int num_actions,
                                      double gamma, double tau_cap = 1.0);
};

/// Value estimate together with the box it is projected to.
struct ValueVector {
    Eigen::VectorXd values;
    ValueBox box;
};

// State-to-state chain P^pi(s'|s) = sum_a pi(a|s) P(s'|s,a).
Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const PolicyTable& pi);

// Discounted visitation d solving d = (1-gamma) rho + gamma (P^pi)^T d.
Eigen::VectorXd discounted_visitation(const TabularMdp& mdp, const PolicyTable& pi);

// Entropy-regularized value: (I - gamma P^pi) V = rbar_pi + tau * H_pi,
// with rbar_pi(s) = sum_a pi(a|s) r_x(s,a) and H_pi(s) the policy entropy at s.
Eigen::VectorXd exact_value(const TabularMdp& mdp, const RewardModel& reward,
                            const Eigen::VectorXd& x, const PolicyTable& pi, double tau);

// rho^T V.
double exact_return(const TabularMdp& mdp, const Eigen::VectorXd& v);

// Q(s,a) = r + gamma sum_s' P(s'|s,a) V(s');  A(s,a) = Q - tau log pi(a|s) - V(s).
// Rows where pi(a|s) = 0 use the convention tau*log pi = -inf -> A = +inf is
// avoided by requiring strictly positive pi when tau > 0.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> q_and_advantage(
    const TabularMdp& mdp, const RewardModel& reward, const Eigen::VectorXd& x,
    const PolicyTable& pi, double tau, const Eigen::VectorXd& v);

// d/dx of exact_return: E_{s~d, a~pi}[grad_x r_x(s,a)] / (1-gamma).
// The 1/(1-gamma) factor makes this the true derivative of rho^T V.
Eigen::VectorXd grad_x_return(const TabularMdp& mdp, const RewardModel& reward,
                              const Eigen::VectorXd& x, const PolicyTable& pi);

// d/dtheta of exact_return under softmax logits theta:
// entry (s,a) = d(s) * pi(a|s) * A_tau(s,a) / (1-gamma).
Eigen::MatrixXd grad_theta_return(const TabularMdp& mdp, const RewardModel& reward,
                                  const Eigen::VectorXd& x, const Eigen::MatrixXd& theta,
                                  double tau);

}  // namespace birl
