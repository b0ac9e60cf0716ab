#pragma once

#include <cstdint>

#include "birl/problem.hpp"
#include "birl/rng.hpp"

namespace birl {

/// Randomly generated bi-level instances backing the verification suite.
/// The reward is affine in the control vector, r_x(s,a) = b(s,a) + x . phi(s,a),
/// with x clamped to [-1, 1]^d so the reward range and gradient bound are known
/// exactly. The upper objective is a smooth quadratic in x plus a linear term
/// in the policy table, so its gradients are exact and deterministic.
struct RandomInstanceOptions {
    int num_states = 4;
    int num_actions = 3;
    int dim_x = 3;
    double gamma = 0.9;
    double reward_scale = 1.0;     // scale of both b and phi
    double policy_cost_scale = 1.0;  // scale of the upper objective's pi term
};

TabularMdp random_mdp(Rng& rng, int num_states, int num_actions, double gamma);

BilevelProblem random_instance(std::uint64_t seed, const RandomInstanceOptions& opts = {});

}  // namespace birl
