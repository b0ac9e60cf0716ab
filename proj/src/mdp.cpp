#include "birl/mdp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "birl/softmax.hpp"

namespace birl {

namespace {

void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

}  // namespace

void TabularMdp::validate(double rho_min) const {
    require(num_states > 0 && num_actions > 0, "TabularMdp: empty state or action space");
    require(gamma > 0.0 && gamma < 1.0, "TabularMdp: gamma must lie in (0,1)");
    require(transition.rows() == static_cast<long>(num_states) * num_actions &&
                transition.cols() == num_states,
            "TabularMdp: transition tensor has wrong shape");
    require(rho.size() == num_states, "TabularMdp: rho has wrong length");

    for (int s = 0; s < num_states; ++s) {
        for (int a = 0; a < num_actions; ++a) {
            const auto row = transition.row(sa_index(s, a));
            require(row.minCoeff() >= 0.0, "TabularMdp: negative transition probability");
            require(std::abs(row.sum() - 1.0) <= 1e-12,
                    "TabularMdp: transition row does not sum to 1");
        }
    }
    require(std::abs(rho.sum() - 1.0) <= 1e-12, "TabularMdp: rho does not sum to 1");
    require(rho.minCoeff() >= rho_min, "TabularMdp: rho entry below rho_min");
}

double ValueBox::clamp(double v) const {
    if (v < lo) return lo;
    if (v > hi()) return hi();
    return v;
}

ValueBox ValueBox::from_reward_range(double r_lo, double r_hi, int num_actions,
                                     double gamma, double tau_cap) {
    ValueBox box;
    box.lo = r_lo / (1.0 - gamma);
    box.width = (r_hi - r_lo + tau_cap * std::log(static_cast<double>(num_actions))) /
                (1.0 - gamma);
    return box;
}

Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const PolicyTable& pi) {
    require(pi.rows() == mdp.num_states && pi.cols() == mdp.num_actions,
            "policy_transition: policy shape does not match mdp");
    Eigen::MatrixXd p(mdp.num_states, mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(mdp.num_states);
        for (int a = 0; a < mdp.num_actions; ++a) {
            row.noalias() += pi(s, a) * mdp.transition.row(mdp.sa_index(s, a));
        }
        p.row(s) = row;
    }
    return p;
}

Eigen::VectorXd discounted_visitation(const TabularMdp& mdp, const PolicyTable& pi) {
    const Eigen::MatrixXd p = policy_transition(mdp, pi);
    const int n = mdp.num_states;
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - mdp.gamma * p.transpose();
    Eigen::VectorXd d = system.partialPivLu().solve((1.0 - mdp.gamma) * mdp.rho);
    // (I - gamma P^T) is nonsingular for gamma < 1; a failed solve is a bug.
    if (!d.allFinite()) throw std::runtime_error("discounted_visitation: solve failed");
    return d;
}

Eigen::VectorXd exact_value(const TabularMdp& mdp, const RewardModel& reward,
                            const Eigen::VectorXd& x, const PolicyTable& pi, double tau) {
    require(tau >= 0.0, "exact_value: tau must be nonnegative");
    const int n = mdp.num_states;
    Eigen::VectorXd r_pi(n);
    for (int s = 0; s < n; ++s) {
        double acc = 0.0;
        for (int a = 0; a < mdp.num_actions; ++a) {
            if (pi(s, a) > 0.0) acc += pi(s, a) * reward.value(x, s, a);
        }
        r_pi[s] = acc + tau * entropy(pi, s);
    }
    const Eigen::MatrixXd p = policy_transition(mdp, pi);
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - mdp.gamma * p;
    return system.partialPivLu().solve(r_pi);
}

double exact_return(const TabularMdp& mdp, const Eigen::VectorXd& v) {
    return mdp.rho.dot(v);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> q_and_advantage(
    const TabularMdp& mdp, const RewardModel& reward, const Eigen::VectorXd& x,
    const PolicyTable& pi, double tau, const Eigen::VectorXd& v) {
    const int ns = mdp.num_states;
    const int na = mdp.num_actions;
    Eigen::MatrixXd q(ns, na);
    Eigen::MatrixXd adv(ns, na);
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            q(s, a) = reward.value(x, s, a) + mdp.gamma * mdp.transition.row(mdp.sa_index(s, a)).dot(v);
            // Clamp keeps the advantage finite at underflowed policy entries,
            // where its product with pi is zero in the limit anyway.
            const double log_pi = std::log(std::max(pi(s, a), 1e-300));
            adv(s, a) = q(s, a) - tau * log_pi - v[s];
        }
    }
    return {q, adv};
}

Eigen::VectorXd grad_x_return(const TabularMdp& mdp, const RewardModel& reward,
                              const Eigen::VectorXd& x, const PolicyTable& pi) {
    const Eigen::VectorXd d = discounted_visitation(mdp, pi);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(reward.dim_x);
    for (int s = 0; s < mdp.num_states; ++s) {
        for (int a = 0; a < mdp.num_actions; ++a) {
            const double weight = d[s] * pi(s, a);
            if (weight > 0.0) g.noalias() += weight * reward.grad_x(x, s, a);
        }
    }
    return g / (1.0 - mdp.gamma);
}

Eigen::MatrixXd grad_theta_return(const TabularMdp& mdp, const RewardModel& reward,
                                  const Eigen::VectorXd& x, const Eigen::MatrixXd& theta,
                                  double tau) {
    const PolicyTable pi = softmax(theta);
    const Eigen::VectorXd v = exact_value(mdp, reward, x, pi, tau);
    const auto [q, adv] = q_and_advantage(mdp, reward, x, pi, tau, v);
    const Eigen::VectorXd d = discounted_visitation(mdp, pi);
    Eigen::MatrixXd g(mdp.num_states, mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s) {
        for (int a = 0; a < mdp.num_actions; ++a) {
            g(s, a) = d[s] * pi(s, a) * adv(s, a) / (1.0 - mdp.gamma);
        }
    }
    return g;
}

}  // namespace birl
