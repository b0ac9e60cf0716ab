#include "birl/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "birl/oracles.hpp"

namespace birl {

double gridworld_reward(const GridWorldSpec& spec, const Eigen::VectorXd& goal, int s) {
    const double d1 = spec.coor1(s) - goal[0];
    const double d2 = spec.coor2(s) - goal[1];
    return -(d1 * d1) - (d2 * d2);
}

Eigen::VectorXd gridworld_reward_grad(const GridWorldSpec& spec, const Eigen::VectorXd& goal,
                                      int s) {
    Eigen::VectorXd g(2);
    g[0] = 2.0 * (spec.coor1(s) - goal[0]);
    g[1] = 2.0 * (spec.coor2(s) - goal[1]);
    return g;
}

double gridworld_upper(const GridWorldSpec& spec, const Eigen::VectorXd& goal,
                       const PolicyTable& pi) {
    const Eigen::Vector2d c = spec.center();
    double f = (goal[0] - c[0]) * (goal[0] - c[0]) + (goal[1] - c[1]) * (goal[1] - c[1]);
    double bias = 0.0;
    for (int s = 0; s < pi.rows(); ++s) {
        bias += pi(s, GridWorldSpec::DOWN) + pi(s, GridWorldSpec::RIGHT);
    }
    return f - spec.lambda * bias;
}

BilevelProblem make_gridworld_problem(const GridWorldSpec& spec) {
    const int ns = spec.width * spec.height;
    const int na = GridWorldSpec::kNumActions;

    BilevelProblem p;
    p.name = "gridworld";
    p.mdp.num_states = ns;
    p.mdp.num_actions = na;
    p.mdp.gamma = spec.gamma;
    p.mdp.rho = Eigen::VectorXd::Constant(ns, 1.0 / ns);
    p.mdp.transition = Eigen::MatrixXd::Zero(static_cast<long>(ns) * na, ns);

    const int dcol[] = {0, 0, -1, 1};  // UP, DOWN, LEFT, RIGHT
    const int drow[] = {-1, 1, 0, 0};
    for (int row = 0; row < spec.height; ++row) {
        for (int col = 0; col < spec.width; ++col) {
            const int s = spec.state_of(col, row);
            for (int a = 0; a < na; ++a) {
                const int nc = std::clamp(col + dcol[a], 0, spec.width - 1);
                const int nr = std::clamp(row + drow[a], 0, spec.height - 1);
                p.mdp.transition(p.mdp.sa_index(s, a), spec.state_of(nc, nr)) = 1.0;
            }
        }
    }

    const double max_sq =
        static_cast<double>((spec.width - 1) * (spec.width - 1) +
                            (spec.height - 1) * (spec.height - 1));
    p.reward.dim_x = 2;
    p.reward.r_lo = -max_sq;
    p.reward.r_hi = 0.0;
    p.reward.grad_bound = 2.0 * std::sqrt(max_sq);
    p.reward.value = [spec](const Eigen::VectorXd& x, int s, int /*a*/) {
        return gridworld_reward(spec, x, s);
    };
    p.reward.grad_x = [spec](const Eigen::VectorXd& x, int s, int /*a*/) {
        return gridworld_reward_grad(spec, x, s);
    };

    p.upper.dim_x = 2;
    // Bounds on ||grad_x f|| = 2||x - center|| and ||grad_pi f|| = lambda sqrt(2|S|);
    // the largest ||x - center|| over the clamp box is half the grid diagonal.
    const double gx = std::sqrt(max_sq);
    const double gpi = spec.lambda * std::sqrt(2.0 * ns);
    p.upper.grad_bound = std::max(gx, gpi);
    p.upper.value = [spec](const Eigen::VectorXd& x, const PolicyTable& pi) {
        return gridworld_upper(spec, x, pi);
    };
    p.upper.grad_x = [spec](const Eigen::VectorXd& x, const PolicyTable&) {
        Eigen::VectorXd g(2);
        const Eigen::Vector2d c = spec.center();
        g[0] = 2.0 * (x[0] - c[0]);
        g[1] = 2.0 * (x[1] - c[1]);
        return g;
    };
    p.upper.grad_pi = [spec, ns, na](const Eigen::VectorXd&, const PolicyTable&) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(ns, na);
        g.col(GridWorldSpec::DOWN).setConstant(-spec.lambda);
        g.col(GridWorldSpec::RIGHT).setConstant(-spec.lambda);
        return g;
    };

    p.x0 = spec.center();
    p.project_x = [spec](Eigen::VectorXd& x) {
        x[0] = std::clamp(x[0], 0.0, static_cast<double>(spec.width - 1));
        x[1] = std::clamp(x[1], 0.0, static_cast<double>(spec.height - 1));
    };
    return p;
}

std::pair<Eigen::Vector2d, double> gridworld_phi_sweep(const GridWorldSpec& spec,
                                                       double phi_eval_tau,
                                                       Eigen::MatrixXd* phi_table) {
    const BilevelProblem p = make_gridworld_problem(spec);
    OracleConfig cfg;
    cfg.phi_eval_tau = phi_eval_tau;

    Eigen::MatrixXd table(spec.height, spec.width);
    Eigen::Vector2d best{0, 0};
    double best_phi = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x(2);
    for (int row = 0; row < spec.height; ++row) {
        for (int col = 0; col < spec.width; ++col) {
            x[0] = col;
            x[1] = row;
            const double phi = phi_exact(p.mdp, p.reward, p.upper, x, cfg);
            table(row, col) = phi;
            if (phi < best_phi) {
                best_phi = phi;
                best = {x[0], x[1]};
            }
        }
    }
    if (phi_table) *phi_table = table;
    return {best, best_phi};
}

}  // namespace birl
