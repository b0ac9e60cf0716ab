#include <doctest.h>

#include <cmath>

#include "birl/operators.hpp"
#include "birl/softmax.hpp"
#include "helpers.hpp"

using namespace birl;
using namespace birl::testing;

namespace {

struct Fixture {
    BilevelProblem p = random_instance(21);
    OperatorBounds bounds = OperatorBounds::derive(p.mdp, p.reward, p.upper, 1.0);
};

}  // namespace

TEST_CASE("control operator composes its three pieces") {
    Fixture f;
    Rng rng(22);
    const PolicyTable pi = softmax(random_logits(rng, f.p.mdp.num_states, f.p.mdp.num_actions));
    const Eigen::VectorXd x = random_vector(rng, f.p.reward.dim_x, 0.5);
    const UpperGradSample xi = f.p.upper.draw(x, pi, rng);
    const double w = 0.1;

    const auto smp = sample_control_step(f.p.reward, x, xi, 1, 0, 2, 1, w, f.bounds);
    const Eigen::VectorXd expected =
        xi.grad_x + (f.p.reward.grad_x(x, 1, 0) - f.p.reward.grad_x(x, 2, 1)) / w;
    CHECK((smp.value - expected).lpNorm<Eigen::Infinity>() < 1e-15);
    CHECK(smp.bound_used == doctest::Approx(f.bounds.b_d / w));

    // Cancellation: both samples at the same state-action, zero f gradient.
    UpperGradSample zero_xi;
    zero_xi.grad_x = Eigen::VectorXd::Zero(f.p.reward.dim_x);
    zero_xi.grad_pi = Eigen::MatrixXd::Zero(f.p.mdp.num_states, f.p.mdp.num_actions);
    const auto cancel = sample_control_step(f.p.reward, x, zero_xi, 1, 0, 1, 0, w, f.bounds);
    CHECK(cancel.value.norm() == 0.0);

    CHECK_THROWS_AS(sample_control_step(f.p.reward, x, xi, 0, 0, 0, 0, 0.0, f.bounds),
                    std::invalid_argument);
}

TEST_CASE("policy operator TD form") {
    Fixture f;
    const int ns = f.p.mdp.num_states, na = f.p.mdp.num_actions;

    // Zero discount-free TD: with w=0, tau=0, zero estimate and unit reward the
    // sample is exactly the log-policy gradient.
    BilevelProblem unit = f.p;
    unit.reward.value = [](const Eigen::VectorXd&, int, int) { return 1.0; };
    const Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(ns, na);
    const PolicyTable pi = softmax(theta);
    const Eigen::VectorXd v0 = Eigen::VectorXd::Zero(ns);
    const auto smp = sample_policy_step(unit.mdp, unit.reward, Eigen::VectorXd::Zero(1), theta,
                                        pi, v0, 1, 0, 2, nullptr, 0.0, 0.0, f.bounds, {});
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(ns, na);
    expected.row(1) = -pi.row(1);
    expected(1, 0) += 1.0;
    CHECK((smp.value - expected).lpNorm<Eigen::Infinity>() < 1e-15);

    // The penalized variant requires the upper-gradient draw.
    CHECK_THROWS_AS(sample_policy_step(unit.mdp, unit.reward, Eigen::VectorXd::Zero(1), theta,
                                       pi, v0, 1, 0, 2, nullptr, 0.1, 0.0, f.bounds, {}),
                    std::invalid_argument);
}

TEST_CASE("critic operator is supported on the visited state") {
    Fixture f;
    Rng rng(23);
    const int ns = f.p.mdp.num_states;
    const PolicyTable pi = softmax(random_logits(rng, ns, f.p.mdp.num_actions));
    const Eigen::VectorXd x = random_vector(rng, f.p.reward.dim_x, 0.5);
    Eigen::VectorXd v_hat(ns);
    for (int s = 0; s < ns; ++s) v_hat[s] = f.bounds.box.clamp(rng.uniform());

    const auto smp =
        sample_critic_step(f.p.mdp, f.p.reward, x, pi, v_hat, 2, 1, 0, 0.3, f.bounds);
    for (int s = 0; s < ns; ++s) {
        if (s != 2) CHECK(smp.value[s] == 0.0);
    }
    const double td = f.p.reward.value(x, 2, 1) + 0.3 * entropy(pi, 2) +
                      f.p.mdp.gamma * v_hat[0] - v_hat[2];
    CHECK(smp.value[2] == doctest::Approx(td).epsilon(1e-14));

    // Zero TD error produces a zero sample: rig the estimate accordingly.
    Eigen::VectorXd v_rig = v_hat;
    v_rig[2] = f.p.reward.value(x, 2, 1) + 0.3 * entropy(pi, 2) + f.p.mdp.gamma * v_hat[0];
    const auto zero =
        sample_critic_step(f.p.mdp, f.p.reward, x, pi, v_rig, 2, 1, 0, 0.3, f.bounds);
    CHECK(zero.value.norm() < 1e-14);
}

TEST_CASE("expected operators match their defining identities on a fresh instance") {
    const BilevelProblem p = random_instance(24);
    Rng rng(25);
    const Eigen::MatrixXd theta = random_logits(rng, p.mdp.num_states, p.mdp.num_actions, 1.5);
    const Eigen::VectorXd x = random_vector(rng, p.reward.dim_x, 0.6);
    const double tau = 0.25;
    const PolicyTable pi = softmax(theta);
    const Eigen::VectorXd v = exact_value(p.mdp, p.reward, x, pi, tau);

    const Eigen::MatrixXd f_bar = expected_policy_step(p.mdp, p.reward, p.upper, x, theta, v,
                                                       0.0, tau);
    const Eigen::MatrixXd g_ref = grad_theta_return(p.mdp, p.reward, x, theta, tau);
    CHECK((f_bar - g_ref).lpNorm<Eigen::Infinity>() < 1e-10);

    const Eigen::VectorXd g_bar = expected_critic_step(p.mdp, p.reward, x, theta, v, tau);
    CHECK(g_bar.lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("derived bounds reduce to the unit-reward constants") {
    // Rewards in [0,1], gamma = 0.9, four actions.
    BilevelProblem p = random_instance(26);
    p.reward.r_lo = 0.0;
    p.reward.r_hi = 1.0;
    p.reward.grad_bound = 2.0;
    p.mdp.gamma = 0.9;
    const OperatorBounds b = OperatorBounds::derive(p.mdp, p.reward, p.upper, 1.0);
    const double log_a = std::log(static_cast<double>(p.mdp.num_actions));
    const double b_v = (1.0 + log_a) / 0.1;
    CHECK(b.box.width == doctest::Approx(b_v).epsilon(1e-12));
    CHECK(b.b_d == doctest::Approx(3.0 * 2.0).epsilon(1e-12));
    CHECK(b.b_g == doctest::Approx(1.9 * b_v + log_a + 1.0).epsilon(1e-12));
    CHECK(b.b_f == doctest::Approx(2.0 * b.b_g + 2.0).epsilon(1e-12));
}
