#pragma once

#include <Eigen/Core>

#include "birl/problem.hpp"

namespace birl {

/// Goal-placement problem on a rectangular grid. The four actions move one
/// cell; moves off the boundary leave the state unchanged. The control vector
/// is the continuous goal coordinate, clamped to the grid rectangle. The
/// reward is the negated squared distance to the goal; the upper objective
/// penalizes goal distance from the grid center and rewards policy mass on
/// DOWN and RIGHT.
struct GridWorldSpec {
    int width = 10;
    int height = 10;
    double gamma = 0.95;
    double lambda = 2.0;  // direction-bias weight

    enum Action { UP = 0, DOWN = 1, LEFT = 2, RIGHT = 3 };
    static constexpr int kNumActions = 4;

    int state_of(int col, int row) const { return row * width + col; }
    double coor1(int s) const { return static_cast<double>(s % width); }   // column
    double coor2(int s) const { return static_cast<double>(s / width); }   // row
    Eigen::Vector2d center() const {
        return {0.5 * (width - 1), 0.5 * (height - 1)};
    }
    Eigen::Vector2d corner() const {
        return {static_cast<double>(width - 1), static_cast<double>(height - 1)};
    }
};

double gridworld_reward(const GridWorldSpec& spec, const Eigen::VectorXd& goal, int s);
Eigen::VectorXd gridworld_reward_grad(const GridWorldSpec& spec, const Eigen::VectorXd& goal,
                                      int s);

double gridworld_upper(const GridWorldSpec& spec, const Eigen::VectorXd& goal,
                       const PolicyTable& pi);

BilevelProblem make_gridworld_problem(const GridWorldSpec& spec);

// Exhaustive evaluation of the bi-level objective over all lattice goals;
// returns (best goal, best value) plus the full table via out-parameter.
std::pair<Eigen::Vector2d, double> gridworld_phi_sweep(
    const GridWorldSpec& spec, double phi_eval_tau,
    Eigen::MatrixXd* phi_table = nullptr);

}  // namespace birl
