#include <doctest.h>

#include <cmath>

#include "birl/algorithm.hpp"
#include "birl/gridworld.hpp"
#include "birl/softmax.hpp"
#include "helpers.hpp"

using namespace birl;
using namespace birl::testing;

TEST_CASE("schedule_at evaluates the power laws") {
    ScheduleSet s = ScheduleSet::decaying_tau_preset();
    s.alpha0 = 0.1;
    s.w0 = 0.5;
    CHECK(s.at(0).alpha == 0.1);
    CHECK(s.at(1023).alpha == doctest::Approx(0.1 / 32.0).epsilon(1e-12));
    CHECK(s.at((1LL << 20) - 1).w == doctest::Approx(0.5 / 8.0).epsilon(1e-12));
    CHECK_THROWS_AS(s.at(-1), std::invalid_argument);

    ScheduleSet bad = ScheduleSet::decaying_tau_preset();
    bad.zeta0 = 0.9;
    bad.alpha0 = 0.1;
    CHECK_THROWS_AS(bad.enforce_base_ordering(), std::invalid_argument);
}

TEST_CASE("advance_trajectory on degenerate chains") {
    const TabularMdp single = single_state_mdp(2, 0.9);
    const PolicyTable pi = PolicyTable::Constant(1, 2, 0.5);
    Rng rng(30);
    for (int i = 0; i < 100; ++i) {
        const TrajectoryStep t = advance_trajectory(single, pi, 0, rng);
        CHECK(t.s == 0);
        CHECK(t.s_next == 0);
        CHECK(t.new_cursor == 0);
    }

    // Near-undiscounted deterministic cycle follows the chain.
    TabularMdp cycle;
    cycle.num_states = 3;
    cycle.num_actions = 1;
    cycle.gamma = 0.999999;
    cycle.transition = Eigen::MatrixXd::Zero(3, 3);
    cycle.transition(0, 1) = 1.0;
    cycle.transition(1, 2) = 1.0;
    cycle.transition(2, 0) = 1.0;
    cycle.rho = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    const PolicyTable one = PolicyTable::Ones(3, 1);
    int cursor = 0;
    for (int i = 0; i < 30; ++i) {
        const TrajectoryStep t = advance_trajectory(cycle, one, cursor, rng);
        CHECK(t.s_next == (t.s + 1) % 3);
        cursor = t.new_cursor;
    }
}

TEST_CASE("iid_sample hits a point-mass visitation") {
    TabularMdp two;
    two.num_states = 2;
    two.num_actions = 1;
    two.gamma = 0.5;
    two.transition = Eigen::MatrixXd::Zero(2, 2);
    two.transition(0, 0) = 1.0;
    two.transition(1, 1) = 1.0;
    two.rho = Eigen::VectorXd::Zero(2);
    two.rho[0] = 1.0;
    const PolicyTable pi = PolicyTable::Ones(2, 1);
    Rng rng(31);
    for (int i = 0; i < 50; ++i) {
        CHECK(iid_sample(two, pi, rng).s == 0);
    }
}

TEST_CASE("zero step sizes leave iterates fixed while cursors advance") {
    GridWorldSpec spec;
    spec.width = 4;
    spec.height = 4;
    const BilevelProblem p = make_gridworld_problem(spec);
    RunOptions opt;
    opt.iterations = 50;
    opt.seed = 7;
    opt.schedules.zeta0 = 1e-300;
    opt.schedules.alpha0 = 1e-300;
    opt.schedules.beta0 = 1e-300;
    opt.schedules.w0 = 0.5;
    opt.schedules.tau0 = 1.0;
    SingleLoopDriver driver(p, opt);
    RunState st = driver.make_initial_state();
    const Eigen::VectorXd x0 = st.x;
    const Eigen::MatrixXd theta0 = st.theta;
    for (int i = 0; i < 50; ++i) driver.step(st);
    CHECK((st.x - x0).lpNorm<Eigen::Infinity>() < 1e-290);
    CHECK((st.theta - theta0).lpNorm<Eigen::Infinity>() < 1e-290);
    CHECK(st.k == 50);
    CHECK(st.samples == 100);
}

TEST_CASE("run with zero iterations emits a single record") {
    GridWorldSpec spec;
    spec.width = 3;
    spec.height = 3;
    const BilevelProblem p = make_gridworld_problem(spec);
    RunOptions opt;
    opt.iterations = 0;
    opt.seed = 1;
    opt.oracle.gd_tol = 1e-6;
    SingleLoopDriver driver(p, opt);
    const auto trace = driver.run();
    CHECK(trace.size() == 1);
    CHECK(trace[0].k == 0);
    CHECK(trace[0].samples == 0);
}

TEST_CASE("policy ascent shrinks the policy residual with frozen control") {
    RandomInstanceOptions opts;
    opts.num_states = 5;
    opts.num_actions = 3;
    const BilevelProblem p = random_instance(777, opts);
    const double tau = 0.02;
    const OperatorBounds bounds = OperatorBounds::derive(p.mdp, p.reward, p.upper, 1.0);
    const Eigen::VectorXd x = p.x0;
    const OracleConfig oracle;
    const double j_star =
        exact_return(p.mdp, soft_value_iteration(p.mdp, p.reward, x, tau, oracle).value);

    Rng rng(32);
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(5, 3);
    const double eps0 =
        j_star - exact_return(p.mdp, exact_value(p.mdp, p.reward, x, softmax(theta), tau));
    int cursor = rng.categorical(p.mdp.rho);
    Eigen::VectorXd v = exact_value(p.mdp, p.reward, x, softmax(theta), tau);
    for (int k = 0; k < 10000; ++k) {
        const PolicyTable pi = softmax(theta);
        if (k % 50 == 0) v = exact_value(p.mdp, p.reward, x, pi, tau);
        const TrajectoryStep t = advance_trajectory(p.mdp, pi, cursor, rng);
        const auto f = sample_policy_step(p.mdp, p.reward, x, theta, pi, v, t.s, t.a, t.s_next,
                                          nullptr, 0.0, tau, bounds, {});
        theta += 0.3 / std::sqrt(double(k + 1)) * f.value;
        cursor = t.new_cursor;
    }
    const double eps1 =
        j_star - exact_return(p.mdp, exact_value(p.mdp, p.reward, x, softmax(theta), tau));
    CHECK(eps1 < 0.75 * eps0);
}

TEST_CASE("divergence raises a structured error") {
    // Unprojected control with a linear-in-x upper gradient compounds under a
    // huge step size and overflows within two iterations.
    BilevelProblem p = random_instance(55);
    p.project_x = nullptr;
    RunOptions opt;
    opt.iterations = 10;
    opt.seed = 3;
    opt.schedules.zeta0 = 1e308;
    opt.schedules.alpha0 = 1e-3;
    opt.schedules.beta0 = 0.3;
    opt.schedules.w0 = 0.5;
    opt.schedules.tau0 = 1.0;
    SingleLoopDriver driver(p, opt);
    RunState st = driver.make_initial_state();
    bool threw = false;
    try {
        for (int i = 0; i < 10; ++i) driver.step(st);
    } catch (const DivergenceError&) {
        threw = true;
    } catch (const std::invalid_argument&) {
        threw = true;  // softmax rejects non-finite logits first
    }
    CHECK(threw);
}
