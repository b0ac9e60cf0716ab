#pragma once

#include <functional>

#include <Eigen/Core>

#include "birl/mdp.hpp"
#include "birl/rng.hpp"

namespace birl {

/// Stochastic gradient sample of the upper objective at one noise draw.
struct UpperGradSample {
    Eigen::VectorXd grad_x;
    Eigen::MatrixXd grad_pi;  // |S| x |A|
};

/// Upper-level objective f(x, pi) with exact-gradient hooks and an unbiased
/// stochastic sampler. Deterministic objectives leave `sample_grads` empty and
/// the sampler falls back to the exact hooks.
struct UpperObjective {
    int dim_x = 0;
    double grad_bound = 1.0;  // L_f: bound on both stochastic gradient norms

    std::function<double(const Eigen::VectorXd& x, const PolicyTable& pi)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd& x, const PolicyTable& pi)> grad_x;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd& x, const PolicyTable& pi)> grad_pi;
    std::function<UpperGradSample(const Eigen::VectorXd& x, const PolicyTable& pi, Rng& rng)>
        sample_grads;

    UpperGradSample draw(const Eigen::VectorXd& x, const PolicyTable& pi, Rng& rng) const {
        if (sample_grads) return sample_grads(x, pi, rng);
        return UpperGradSample{grad_x(x, pi), grad_pi(x, pi)};
    }
};

// Chain rule through the softmax rows:
// (d f / d theta)(s,a) = pi(s,a) * (g(s,a) - sum_a' pi(s,a') g(s,a'))
// for g = d f / d pi.
Eigen::MatrixXd grad_pi_to_grad_theta(const PolicyTable& pi, const Eigen::MatrixXd& grad_pi);

}  // namespace birl
