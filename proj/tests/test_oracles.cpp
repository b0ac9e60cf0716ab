#include <doctest.h>

#include <cmath>

#include "birl/oracles.hpp"
#include "birl/softmax.hpp"
#include "helpers.hpp"

using namespace birl;
using namespace birl::testing;

TEST_CASE("soft value iteration approaches uniform for huge regularization") {
    Rng rng(8);
    const BilevelProblem p = random_instance(8);
    const SoftSolution sol =
        soft_value_iteration(p.mdp, p.reward, Eigen::VectorXd::Zero(p.reward.dim_x), 1e3);
    CHECK((sol.policy.array() - 1.0 / p.mdp.num_actions).abs().maxCoeff() < 1e-3);
    CHECK_THROWS_AS(
        soft_value_iteration(p.mdp, p.reward, Eigen::VectorXd::Zero(p.reward.dim_x), 0.0),
        std::invalid_argument);

    OracleConfig starved;
    starved.svi_max_iter = 2;
    starved.svi_tol = 1e-15;
    CHECK_THROWS_AS(soft_value_iteration(p.mdp, p.reward,
                                         Eigen::VectorXd::Zero(p.reward.dim_x), 0.5, starved),
                    ConvergenceFailure);
}

TEST_CASE("lagrangian minimizer tracks the soft best response as w vanishes") {
    const BilevelProblem p = random_instance(9);
    const Eigen::VectorXd x = Eigen::VectorXd::Zero(p.reward.dim_x);
    const double tau = 0.5;
    const OracleConfig oracle;

    const SoftSolution soft = soft_value_iteration(p.mdp, p.reward, x, tau, oracle);
    const LagrangianSolution tiny_w =
        lagrangian_minimizer(p.mdp, p.reward, p.upper, x, 1e-8, tau, oracle);
    CHECK((tiny_w.policy - soft.policy).lpNorm<1>() < 1e-4);
    CHECK(tiny_w.grad_norm <= oracle.gd_tol);

    // Zero upper objective reduces the solver to the best response exactly.
    BilevelProblem p0 = p;
    p0.upper.value = [](const Eigen::VectorXd&, const PolicyTable&) { return 0.0; };
    p0.upper.grad_x = [&](const Eigen::VectorXd& xx, const PolicyTable&) {
        return Eigen::VectorXd::Zero(xx.size());
    };
    p0.upper.grad_pi = [&](const Eigen::VectorXd&, const PolicyTable& pi) {
        return Eigen::MatrixXd::Zero(pi.rows(), pi.cols());
    };
    const LagrangianSolution plain =
        lagrangian_minimizer(p0.mdp, p0.reward, p0.upper, x, 0.3, tau, oracle);
    CHECK((plain.policy - soft.policy).lpNorm<1>() < 1e-6);

    // Minimality spot check against perturbed policies.
    const LagrangianSolution sol =
        lagrangian_minimizer(p.mdp, p.reward, p.upper, x, 0.2, tau, oracle);
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::MatrixXd perturbed = sol.theta;
        for (int s = 0; s < perturbed.rows(); ++s) {
            for (int a = 0; a < perturbed.cols(); ++a) {
                perturbed(s, a) += 0.3 * (2.0 * rng.uniform() - 1.0);
            }
        }
        const double obj = scaled_lagrangian(p.mdp, p.reward, p.upper, x,
                                             softmax(perturbed), 0.2, tau, oracle);
        CHECK(obj >= sol.scaled_objective - 1e-9);
    }
}

TEST_CASE("fd hypergradient of a policy-independent objective is the direct gradient") {
    BilevelProblem p = random_instance(11);
    p.upper.value = [](const Eigen::VectorXd& x, const PolicyTable&) { return x.squaredNorm(); };
    p.upper.grad_x = [](const Eigen::VectorXd& x, const PolicyTable&) {
        return Eigen::VectorXd(2.0 * x);
    };
    p.upper.grad_pi = [](const Eigen::VectorXd&, const PolicyTable& pi) {
        return Eigen::MatrixXd::Zero(pi.rows(), pi.cols());
    };
    Rng rng(12);
    const Eigen::VectorXd x = random_vector(rng, p.reward.dim_x, 0.5);
    const Eigen::VectorXd g = fd_hypergrad(p.mdp, p.reward, p.upper, x, 0.3);
    CHECK((g - 2.0 * x).lpNorm<Eigen::Infinity>() < 1e-7);

    // Step halving leaves the estimate nearly unchanged (Richardson check).
    OracleConfig halved;
    halved.fd_step = 0.5e-5;
    const Eigen::VectorXd g2 = fd_hypergrad(p.mdp, p.reward, p.upper, x, 0.3, halved);
    CHECK((g - g2).norm() / std::max(1.0, g.norm()) < 1e-3);
}

TEST_CASE("penalty hypergradient of an x-independent problem vanishes") {
    BilevelProblem p = random_instance(13);
    // Freeze both the reward and the upper objective in x.
    p.reward.value = [](const Eigen::VectorXd&, int s, int a) {
        return 0.1 * (s + 1) + 0.05 * a;
    };
    p.reward.grad_x = [&](const Eigen::VectorXd& x, int, int) {
        return Eigen::VectorXd::Zero(x.size());
    };
    p.upper.value = [](const Eigen::VectorXd&, const PolicyTable& pi) { return pi(0, 0); };
    p.upper.grad_x = [](const Eigen::VectorXd& x, const PolicyTable&) {
        return Eigen::VectorXd::Zero(x.size());
    };
    p.upper.grad_pi = [](const Eigen::VectorXd&, const PolicyTable& pi) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(pi.rows(), pi.cols());
        g(0, 0) = 1.0;
        return g;
    };
    const Eigen::VectorXd x = Eigen::VectorXd::Zero(p.reward.dim_x);
    const Eigen::VectorXd g = penalty_hypergrad(p.mdp, p.reward, p.upper, x, 0.1, 0.4);
    CHECK(g.lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("phi_exact reduces to f when the policy does not matter") {
    BilevelProblem p = random_instance(14);
    p.upper.value = [](const Eigen::VectorXd& x, const PolicyTable&) {
        return 3.0 + x.squaredNorm();
    };
    Rng rng(15);
    const Eigen::VectorXd x = random_vector(rng, p.reward.dim_x, 0.5);
    CHECK(phi_exact(p.mdp, p.reward, p.upper, x) ==
          doctest::Approx(3.0 + x.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("lyapunov residuals at the oracle optimum are tiny") {
    const BilevelProblem p = random_instance(16);
    const Eigen::VectorXd x = Eigen::VectorXd::Zero(p.reward.dim_x);
    const double w = 0.1, tau = 0.4;
    const OracleConfig oracle;

    const SoftSolution soft = soft_value_iteration(p.mdp, p.reward, x, tau, oracle);
    const LagrangianSolution pen =
        lagrangian_minimizer(p.mdp, p.reward, p.upper, x, w, tau, oracle);
    const Eigen::MatrixXd theta_star = soft.policy.array().log().matrix();
    const Eigen::VectorXd v_star = exact_value(p.mdp, p.reward, x, soft.policy, tau);
    const Eigen::VectorXd v_pen = exact_value(p.mdp, p.reward, x, pen.policy, tau);

    const LyapunovResiduals res = lyapunov_residuals(
        p.mdp, p.reward, p.upper, x, theta_star, pen.theta, v_star, v_pen, w, tau, oracle);
    CHECK(std::abs(res.eps_theta) < 1e-8);
    CHECK(std::abs(res.eps_theta_pen) < 1e-8);
    CHECK(res.eps_v < 1e-16);
    CHECK(res.eps_v_pen < 1e-16);

    // eps_v is the plain squared distance when the estimate is zeroed.
    const LyapunovResiduals res0 = lyapunov_residuals(
        p.mdp, p.reward, p.upper, x, theta_star, pen.theta,
        Eigen::VectorXd::Zero(p.mdp.num_states), v_pen, w, tau, oracle);
    CHECK(res0.eps_v == doctest::Approx(v_star.squaredNorm()).epsilon(1e-10));
}
