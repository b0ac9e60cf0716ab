#include <doctest.h>

#include <cmath>

#include "birl/mdp.hpp"
#include "birl/softmax.hpp"
#include "helpers.hpp"

using namespace birl;
using namespace birl::testing;

TEST_CASE("policy_transition on degenerate and composed chains") {
    const TabularMdp single = single_state_mdp(2, 0.9);
    const PolicyTable pi = PolicyTable::Constant(1, 2, 0.5);
    const Eigen::MatrixXd p = policy_transition(single, pi);
    CHECK(p.rows() == 1);
    CHECK(p(0, 0) == doctest::Approx(1.0).epsilon(1e-14));

    // Deterministic two-state chain: s0 -> s1 -> s1 under action 0.
    TabularMdp chain;
    chain.num_states = 2;
    chain.num_actions = 2;
    chain.gamma = 0.9;
    chain.transition = Eigen::MatrixXd::Zero(4, 2);
    chain.transition(chain.sa_index(0, 0), 1) = 1.0;
    chain.transition(chain.sa_index(0, 1), 0) = 1.0;
    chain.transition(chain.sa_index(1, 0), 1) = 1.0;
    chain.transition(chain.sa_index(1, 1), 0) = 1.0;
    chain.rho = Eigen::VectorXd::Constant(2, 0.5);
    PolicyTable det = PolicyTable::Zero(2, 2);
    det.col(0).setOnes();
    const Eigen::MatrixXd pc = policy_transition(chain, det);
    CHECK(pc(0, 1) == 1.0);
    CHECK(pc(1, 1) == 1.0);

    Rng rng(1);
    const TabularMdp random = random_mdp(rng, 3, 2, 0.9);
    const PolicyTable uniform = PolicyTable::Constant(3, 2, 0.5);
    const Eigen::MatrixXd pr = policy_transition(random, uniform);
    for (int s = 0; s < 3; ++s) {
        const Eigen::RowVectorXd mean = 0.5 * (random.transition.row(random.sa_index(s, 0)) +
                                               random.transition.row(random.sa_index(s, 1)));
        CHECK((pr.row(s) - mean).lpNorm<Eigen::Infinity>() < 1e-14);
        CHECK(pr.row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }

    PolicyTable wrong_shape = PolicyTable::Constant(2, 2, 0.5);
    CHECK_THROWS_AS(policy_transition(random, wrong_shape), std::invalid_argument);
}

TEST_CASE("discounted_visitation matches the truncated series") {
    const TabularMdp single = single_state_mdp(1, 0.7);
    const PolicyTable pi1 = PolicyTable::Ones(1, 1);
    CHECK(discounted_visitation(single, pi1)(0) == doctest::Approx(1.0).epsilon(1e-12));

    // Absorbing start: rho = (1, 0) and a policy that stays at s0.
    TabularMdp two;
    two.num_states = 2;
    two.num_actions = 1;
    two.gamma = 0.8;
    two.transition = Eigen::MatrixXd::Zero(2, 2);
    two.transition(0, 0) = 1.0;
    two.transition(1, 1) = 1.0;
    two.rho = Eigen::VectorXd::Zero(2);
    two.rho[0] = 1.0;
    const Eigen::VectorXd d2 = discounted_visitation(two, PolicyTable::Ones(2, 1));
    CHECK(d2[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d2[1] == doctest::Approx(0.0).epsilon(1e-12));

    Rng rng(2);
    const TabularMdp random = random_mdp(rng, 4, 3, 0.9);
    const PolicyTable pi = softmax(random_logits(rng, 4, 3));
    const Eigen::VectorXd d = discounted_visitation(random, pi);
    CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK((d.array() >= (1.0 - random.gamma) * random.rho.array() - 1e-12).all());

    const Eigen::MatrixXd pt = policy_transition(random, pi).transpose();
    Eigen::VectorXd series = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd term = random.rho;
    for (int k = 0; k <= 200; ++k) {
        series += (1.0 - random.gamma) * term;
        term = random.gamma * (pt * term);
    }
    CHECK((d - series).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("exact_value solves the regularized evaluation equation") {
    // Zero reward, any deterministic policy, no regularization.
    TabularMdp chain = single_state_mdp(2, 0.6);
    const RewardModel zero = fixed_reward_table(Eigen::MatrixXd::Zero(1, 2));
    PolicyTable det = PolicyTable::Zero(1, 2);
    det(0, 0) = 1.0;
    const Eigen::VectorXd v0 =
        exact_value(chain, zero, Eigen::VectorXd::Zero(1), det, 0.0);
    CHECK(v0.lpNorm<Eigen::Infinity>() < 1e-14);

    // Single state, two actions, rewards (1, 0), uniform policy, gamma 1/2.
    Eigen::MatrixXd table(1, 2);
    table << 1.0, 0.0;
    const RewardModel r = fixed_reward_table(table);
    const TabularMdp mdp = single_state_mdp(2, 0.5);
    const PolicyTable uniform = PolicyTable::Constant(1, 2, 0.5);
    const Eigen::VectorXd v =
        exact_value(mdp, r, Eigen::VectorXd::Zero(1), uniform, 0.0);
    CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-12));

    const Eigen::VectorXd v_tau =
        exact_value(mdp, r, Eigen::VectorXd::Zero(1), uniform, 0.5);
    CHECK(v_tau[0] == doctest::Approx((0.5 + 0.5 * std::log(2.0)) / 0.5).epsilon(1e-12));

    // Bellman residual on a random instance.
    Rng rng(3);
    const TabularMdp random = random_mdp(rng, 5, 3, 0.9);
    Eigen::MatrixXd rt(5, 3);
    for (int s = 0; s < 5; ++s) {
        for (int a = 0; a < 3; ++a) rt(s, a) = rng.uniform();
    }
    const RewardModel rr = fixed_reward_table(rt);
    const PolicyTable pi = softmax(random_logits(rng, 5, 3));
    const double tau = 0.3;
    const Eigen::VectorXd vv = exact_value(random, rr, Eigen::VectorXd::Zero(1), pi, tau);
    Eigen::VectorXd bellman(5);
    for (int s = 0; s < 5; ++s) {
        double acc = tau * entropy(pi, s);
        for (int a = 0; a < 3; ++a) {
            acc += pi(s, a) * (rt(s, a) +
                               random.gamma * random.transition.row(random.sa_index(s, a)).dot(vv));
        }
        bellman[s] = acc;
    }
    CHECK((vv - bellman).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("exact_return contracts per definition") {
    TabularMdp mdp = single_state_mdp(1, 0.5);
    CHECK(exact_return(mdp, Eigen::VectorXd::Zero(1)) == 0.0);

    TabularMdp four;
    four.num_states = 4;
    four.num_actions = 1;
    four.gamma = 0.9;
    four.transition = Eigen::MatrixXd::Constant(4, 4, 0.25);
    four.rho = Eigen::VectorXd::Constant(4, 0.25);
    Eigen::VectorXd v(4);
    v << 1, 2, 3, 4;
    CHECK(exact_return(four, v) == doctest::Approx(2.5).epsilon(1e-14));

    four.rho << 0, 0, 1, 0;
    CHECK(exact_return(four, v) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("q_and_advantage weighted advantage vanishes") {
    // gamma = 0, uniform policy, rewards (1, 0): A = (+0.5, -0.5) at tau = 0.
    Eigen::MatrixXd table(1, 2);
    table << 1.0, 0.0;
    TabularMdp mdp = single_state_mdp(2, 1e-12);  // effectively zero discount
    mdp.gamma = 1e-12;
    const RewardModel r = fixed_reward_table(table);
    const PolicyTable uniform = PolicyTable::Constant(1, 2, 0.5);
    Eigen::VectorXd v(1);
    v << 0.5;
    const auto [q, adv] = q_and_advantage(mdp, r, Eigen::VectorXd::Zero(1), uniform, 0.0, v);
    CHECK(adv(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(adv(0, 1) == doctest::Approx(-0.5).epsilon(1e-9));

    // Greedy policy on a deterministic chain has zero advantage on its action.
    Rng rng(4);
    const TabularMdp random = random_mdp(rng, 4, 2, 0.9);
    Eigen::MatrixXd rt(4, 2);
    for (int s = 0; s < 4; ++s) {
        rt(s, 0) = rng.uniform();
        rt(s, 1) = rng.uniform();
    }
    const RewardModel rr = fixed_reward_table(rt);
    const PolicyTable pi = softmax(random_logits(rng, 4, 2));
    const double tau = 0.2;
    const Eigen::VectorXd vv = exact_value(random, rr, Eigen::VectorXd::Zero(1), pi, tau);
    const auto [qq, aa] = q_and_advantage(random, rr, Eigen::VectorXd::Zero(1), pi, tau, vv);
    for (int s = 0; s < 4; ++s) {
        CHECK(std::abs(pi.row(s).dot(aa.row(s))) < 1e-9);
    }
}

TEST_CASE("validation rejects malformed instances") {
    Rng rng(5);
    TabularMdp mdp = random_mdp(rng, 3, 2, 0.9);
    CHECK_NOTHROW(mdp.validate());

    TabularMdp bad = mdp;
    bad.transition(0, 0) += 0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = mdp;
    bad.rho[0] = 0.0;
    bad.rho /= bad.rho.sum();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = mdp;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("value box generalizes the unit-reward interval") {
    const ValueBox unit = ValueBox::from_reward_range(0.0, 1.0, 4, 0.9, 1.0);
    CHECK(unit.lo == 0.0);
    CHECK(unit.width == doctest::Approx((1.0 + std::log(4.0)) / 0.1).epsilon(1e-12));
    CHECK(unit.clamp(-1.0) == 0.0);
    CHECK(unit.clamp(1e9) == doctest::Approx(unit.hi()));

    const ValueBox grid = ValueBox::from_reward_range(-162.0, 0.0, 4, 0.95, 1.0);
    CHECK(grid.lo == doctest::Approx(-162.0 / 0.05));
    CHECK(grid.hi() == doctest::Approx(std::log(4.0) / 0.05));
}
