#include "birl/random_instances.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

namespace birl {

TabularMdp random_mdp(Rng& rng, int num_states, int num_actions, double gamma) {
    TabularMdp mdp;
    mdp.num_states = num_states;
    mdp.num_actions = num_actions;
    mdp.gamma = gamma;
    mdp.transition = Eigen::MatrixXd::Zero(static_cast<long>(num_states) * num_actions,
                                           num_states);
    for (int s = 0; s < num_states; ++s) {
        for (int a = 0; a < num_actions; ++a) {
            Eigen::VectorXd row(num_states);
            for (int sp = 0; sp < num_states; ++sp) row[sp] = 0.05 + rng.uniform();
            mdp.transition.row(mdp.sa_index(s, a)) = (row / row.sum()).transpose();
        }
    }
    Eigen::VectorXd rho(num_states);
    for (int s = 0; s < num_states; ++s) rho[s] = 0.2 + rng.uniform();
    mdp.rho = rho / rho.sum();
    return mdp;
}

BilevelProblem random_instance(std::uint64_t seed, const RandomInstanceOptions& opts) {
    auto rng = std::make_shared<Rng>(seed);
    BilevelProblem p;
    p.name = "random";
    p.mdp = random_mdp(*rng, opts.num_states, opts.num_actions, opts.gamma);

    const int ns = opts.num_states;
    const int na = opts.num_actions;
    const int d = opts.dim_x;

    auto base = std::make_shared<Eigen::MatrixXd>(ns, na);
    auto features = std::make_shared<std::vector<Eigen::VectorXd>>();
    double max_feature_norm = 0.0;
    double max_abs_feature_l1 = 0.0;
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            (*base)(s, a) = 0.5 * opts.reward_scale * rng->uniform();
            Eigen::VectorXd phi(d);
            for (int i = 0; i < d; ++i) {
                phi[i] = opts.reward_scale * (rng->uniform() - 0.5) / std::sqrt(double(d));
            }
            features->push_back(phi);
            max_feature_norm = std::max(max_feature_norm, phi.norm());
            max_abs_feature_l1 = std::max(max_abs_feature_l1, phi.lpNorm<1>());
        }
    }

    p.reward.dim_x = d;
    p.reward.r_lo = -max_abs_feature_l1;  // x clamped to [-1,1]^d
    p.reward.r_hi = 0.5 * opts.reward_scale + max_abs_feature_l1;
    p.reward.grad_bound = max_feature_norm;
    p.reward.value = [base, features, na](const Eigen::VectorXd& x, int s, int a) {
        return (*base)(s, a) + x.dot((*features)[s * na + a]);
    };
    p.reward.grad_x = [features, na](const Eigen::VectorXd& x, int s, int a) {
        (void)x;
        return (*features)[s * na + a];
    };

    auto x_ref = std::make_shared<Eigen::VectorXd>(d);
    for (int i = 0; i < d; ++i) (*x_ref)[i] = rng->uniform() - 0.5;
    auto policy_cost = std::make_shared<Eigen::MatrixXd>(ns, na);
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            (*policy_cost)(s, a) = opts.policy_cost_scale * (rng->uniform() - 0.5);
        }
    }

    p.upper.dim_x = d;
    p.upper.grad_bound =
        std::sqrt(double(d)) * 2.0 + policy_cost->norm();
    p.upper.value = [x_ref, policy_cost](const Eigen::VectorXd& x, const PolicyTable& pi) {
        return 0.5 * (x - *x_ref).squaredNorm() + (policy_cost->array() * pi.array()).sum();
    };
    p.upper.grad_x = [x_ref](const Eigen::VectorXd& x, const PolicyTable& pi) {
        (void)pi;
        return Eigen::VectorXd(x - *x_ref);
    };
    p.upper.grad_pi = [policy_cost](const Eigen::VectorXd& x, const PolicyTable& pi) {
        (void)x;
        (void)pi;
        return *policy_cost;
    };

    p.x0 = Eigen::VectorXd::Zero(d);
    p.project_x = [](Eigen::VectorXd& x) {
        for (int i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], -1.0, 1.0);
    };
    return p;
}

}  // namespace birl
