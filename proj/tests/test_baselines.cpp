#include <doctest.h>

#include <cmath>

#include "birl/baselines.hpp"
#include "birl/gridworld.hpp"
#include "birl/softmax.hpp"
#include "helpers.hpp"

using namespace birl;
using namespace birl::testing;

TEST_CASE("partial SGD leaves x alone when f ignores it") {
    BilevelProblem p = random_instance(41);
    p.upper.value = [](const Eigen::VectorXd&, const PolicyTable& pi) { return pi(0, 0); };
    p.upper.grad_x = [](const Eigen::VectorXd& x, const PolicyTable&) {
        return Eigen::VectorXd::Zero(x.size());
    };
    p.upper.grad_pi = [](const Eigen::VectorXd&, const PolicyTable& pi) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(pi.rows(), pi.cols());
        g(0, 0) = 1.0;
        return g;
    };
    RunOptions opt;
    opt.iterations = 200;
    opt.seed = 5;
    opt.schedules.zeta0 = 0.1;
    opt.schedules.alpha0 = 0.05;
    opt.schedules.beta0 = 0.3;
    PartialSgdDriver driver(p, opt);
    auto st = driver.make_initial_state();
    const Eigen::VectorXd x0 = st.x;
    for (int i = 0; i < 200; ++i) driver.step(st);
    CHECK((st.x - x0).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(st.samples == 200);  // one environment sample per iteration
}

TEST_CASE("fd driver on a scalar control matches the two-point difference") {
    // One-dimensional control: the direction is deterministic (+1), so the
    // assembled update equals the classic central difference chain rule.
    BilevelProblem p = random_instance(42, {4, 2, 1, 0.8, 1.0, 1.0});
    RunOptions opt;
    opt.seed = 2;
    BaselineConfig base;
    base.fd_epsilon = 1e-3;
    base.inner_tau = 0.3;
    FiniteDifferenceDriver driver(p, opt, base);

    Rng rng(43);
    Eigen::VectorXd x(1);
    x << 0.2;
    const OracleConfig oracle;
    const PolicyTable pi_plus =
        soft_value_iteration(p.mdp, p.reward, x + base.fd_epsilon * Eigen::VectorXd::Ones(1),
                             0.3, oracle)
            .policy;
    const PolicyTable pi_minus =
        soft_value_iteration(p.mdp, p.reward, x - base.fd_epsilon * Eigen::VectorXd::Ones(1),
                             0.3, oracle)
            .policy;
    const Eigen::VectorXd dir =
        driver.assemble_direction(x, Eigen::VectorXd::Ones(1), pi_plus, pi_minus, rng);

    const PolicyTable pi_mid = 0.5 * (pi_plus + pi_minus);
    const double manual =
        p.upper.grad_x(x, pi_mid)[0] +
        (p.upper.grad_pi(x, pi_mid).array() * (pi_plus - pi_minus).array()).sum() /
            (2.0 * base.fd_epsilon);
    CHECK(dir[0] == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("fd driver accounts two inner solves per outer step") {
    GridWorldSpec spec;
    spec.width = 3;
    spec.height = 3;
    const BilevelProblem p = make_gridworld_problem(spec);
    RunOptions opt;
    opt.iterations = 2;
    opt.seed = 4;
    opt.schedules.zeta0 = 1e-3;
    opt.schedules.alpha0 = 0.01;
    opt.schedules.beta0 = 0.3;
    opt.oracle.gd_tol = 1e-6;
    BaselineConfig base;
    base.inner_iters = 50;
    base.fd_epsilon = 0.2;
    FiniteDifferenceDriver driver(p, opt, base);
    auto st = driver.make_initial_state();
    driver.step(st);
    CHECK(st.samples == 100);
    driver.step(st);
    CHECK(st.samples == 200);
}

TEST_CASE("nested loop with a single inner iteration still advances") {
    GridWorldSpec spec;
    spec.width = 3;
    spec.height = 3;
    const BilevelProblem p = make_gridworld_problem(spec);
    RunOptions opt;
    opt.iterations = 3;
    opt.seed = 6;
    opt.schedules.zeta0 = 1e-3;
    opt.schedules.alpha0 = 0.01;
    opt.schedules.beta0 = 0.3;
    opt.schedules.w0 = 0.5;
    opt.schedules.tau0 = 1.0;
    BaselineConfig base;
    base.inner_iters = 1;
    NestedLoopDriver driver(p, opt, base);
    RunState st = driver.make_initial_state();
    const Eigen::VectorXd x0 = st.x;
    driver.outer_step(st);
    CHECK(st.k == 1);
    CHECK(st.samples == 4);  // two inner samples plus the control-update pair
    driver.outer_step(st);
    CHECK(st.samples == 8);
    CHECK((st.x - x0).norm() >= 0.0);
}

TEST_CASE("fixed-regularization schedules keep tau constant") {
    const ScheduleSet s = ScheduleSet::fixed_tau_preset(3.0);
    CHECK(s.at(0).tau == 3.0);
    CHECK(s.at(123456).tau == 3.0);
    CHECK(s.at(10).w < s.at(0).w);
}
