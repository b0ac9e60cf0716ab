#pragma once

#include <functional>
#include <string>

#include <Eigen/Core>

#include "birl/mdp.hpp"
#include "birl/upper.hpp"

namespace birl {

/// A concrete bi-level instance: the environment MDP, its parameterized
/// reward, the upper objective, an initial control point, and an optional
/// projection of the control variable onto its admissible set.
struct BilevelProblem {
    std::string name;
    TabularMdp mdp;
    RewardModel reward;
    UpperObjective upper;
    Eigen::VectorXd x0;
    std::function<void(Eigen::VectorXd&)> project_x;  // optional clamp

    void project(Eigen::VectorXd& x) const {
        if (project_x) project_x(x);
    }
};

}  // namespace birl
