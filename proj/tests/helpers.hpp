#pragma once

#include <Eigen/Dense>

#include "birl/mdp.hpp"
#include "birl/random_instances.hpp"
#include "birl/rng.hpp"

namespace birl::testing {

inline Eigen::MatrixXd random_logits(Rng& rng, int ns, int na, double scale = 1.0) {
    Eigen::MatrixXd theta(ns, na);
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) theta(s, a) = scale * (2.0 * rng.uniform() - 1.0);
    }
    return theta;
}

inline Eigen::VectorXd random_vector(Rng& rng, int n, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * (2.0 * rng.uniform() - 1.0);
    return v;
}

// Reward that ignores the control vector.
inline RewardModel fixed_reward_table(const Eigen::MatrixXd& table) {
    RewardModel r;
    r.dim_x = 1;
    r.r_lo = table.minCoeff();
    r.r_hi = table.maxCoeff();
    r.grad_bound = 0.0;
    r.value = [table](const Eigen::VectorXd&, int s, int a) { return table(s, a); };
    r.grad_x = [](const Eigen::VectorXd&, int, int) { return Eigen::VectorXd::Zero(1); };
    return r;
}

inline TabularMdp single_state_mdp(int num_actions, double gamma) {
    TabularMdp mdp;
    mdp.num_states = 1;
    mdp.num_actions = num_actions;
    mdp.gamma = gamma;
    mdp.transition = Eigen::MatrixXd::Ones(num_actions, 1);
    mdp.rho = Eigen::VectorXd::Ones(1);
    return mdp;
}

}  // namespace birl::testing
