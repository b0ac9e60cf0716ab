#include <doctest.h>

#include <cmath>

#include "birl/gridworld.hpp"
#include "birl/preference.hpp"
#include "birl/softmax.hpp"
#include "helpers.hpp"

using namespace birl;
using namespace birl::testing;

TEST_CASE("gridworld reward and upper objective") {
    GridWorldSpec spec;
    Eigen::VectorXd goal(2);
    goal << 5.0, 5.0;
    CHECK(gridworld_reward(spec, goal, spec.state_of(5, 5)) == 0.0);
    CHECK(gridworld_reward(spec, goal, spec.state_of(2, 1)) == doctest::Approx(-25.0));
    const Eigen::VectorXd g = gridworld_reward_grad(spec, goal, spec.state_of(2, 1));
    CHECK(g[0] == doctest::Approx(-6.0));
    CHECK(g[1] == doctest::Approx(-8.0));

    PolicyTable down = PolicyTable::Zero(100, 4);
    down.col(GridWorldSpec::DOWN).setOnes();
    CHECK(gridworld_upper(spec, spec.center(), down) ==
          doctest::Approx(-100.0 * spec.lambda).epsilon(1e-12));
    const PolicyTable uniform = PolicyTable::Constant(100, 4, 0.25);
    CHECK(gridworld_upper(spec, spec.center(), uniform) ==
          doctest::Approx(-50.0 * spec.lambda).epsilon(1e-12));

    // lambda = 0 decouples f from the policy.
    GridWorldSpec plain = spec;
    plain.lambda = 0.0;
    const BilevelProblem p = make_gridworld_problem(plain);
    CHECK(p.upper.grad_pi(goal, uniform).norm() == 0.0);
    CHECK(gridworld_upper(plain, goal, down) == gridworld_upper(plain, goal, uniform));
}

TEST_CASE("gridworld dynamics clamp at boundaries") {
    GridWorldSpec spec;
    spec.width = 3;
    spec.height = 2;
    const BilevelProblem p = make_gridworld_problem(spec);
    p.mdp.validate();
    // Top-left corner: UP and LEFT self-loop.
    const int tl = spec.state_of(0, 0);
    CHECK(p.mdp.transition(p.mdp.sa_index(tl, GridWorldSpec::UP), tl) == 1.0);
    CHECK(p.mdp.transition(p.mdp.sa_index(tl, GridWorldSpec::LEFT), tl) == 1.0);
    CHECK(p.mdp.transition(p.mdp.sa_index(tl, GridWorldSpec::RIGHT), spec.state_of(1, 0)) == 1.0);
    CHECK(p.mdp.transition(p.mdp.sa_index(tl, GridWorldSpec::DOWN), spec.state_of(0, 1)) == 1.0);

    // Control clamp.
    Eigen::VectorXd x(2);
    x << -3.0, 9.9;
    p.project(x);
    CHECK(x[0] == 0.0);
    CHECK(x[1] == 1.0);
}

TEST_CASE("pairwise preference probabilities") {
    CHECK(pairwise_preference_prob(2.0, 2.0) == doctest::Approx(0.5));
    CHECK(pairwise_preference_prob(1.0, 0.0) ==
          doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
    CHECK(pairwise_preference_prob(800.0, 0.0) == doctest::Approx(1.0));
    CHECK(pairwise_preference_prob(0.0, 800.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("preference environment scoring and labels") {
    PreferenceProblemSpec spec;
    const PreferenceEnvironment env(spec);

    Trajectory a, b;
    a.states = {0, 1};
    a.actions = {0, 1};
    b.states = {2, 0};
    b.actions = {1, 0};
    const double sa = trajectory_score(env.hidden_scores(), spec.num_actions, a);
    const double sb = trajectory_score(env.hidden_scores(), spec.num_actions, b);
    CHECK(env.label(a, b) == (sa > sb ? 1 : 0));
    CHECK(env.label(b, a) == (sb > sa ? 1 : 0));

    // Loss decreases as the model agrees more with the label.
    Eigen::VectorXd agree = Eigen::VectorXd::Zero(spec.num_states * spec.num_actions);
    const int y = env.label(a, b);
    for (std::size_t i = 0; i < a.states.size(); ++i) {
        agree[a.states[i] * spec.num_actions + a.actions[i]] += y == 1 ? 1.0 : -1.0;
        agree[b.states[i] * spec.num_actions + b.actions[i]] -= y == 1 ? 1.0 : -1.0;
    }
    CHECK(env.pair_loss(agree, a, b, y) < env.pair_loss(Eigen::VectorXd::Zero(agree.size()), a, b, y));

    // Rollouts have the configured length and valid indices.
    Rng rng(50);
    Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(spec.num_states, spec.num_actions);
    const PolicyTable pi = softmax(logits);
    for (int i = 0; i < 20; ++i) {
        const Trajectory t = env.rollout(pi, rng);
        CHECK(static_cast<int>(t.states.size()) == spec.trajectory_len);
        CHECK(static_cast<int>(t.actions.size()) == spec.trajectory_len);
        for (int st : t.states) CHECK((st >= 0 && st < spec.num_states));
    }
}

TEST_CASE("preference loss shift invariance and exact gradients") {
    PreferenceProblemSpec spec;
    const PreferenceEnvironment env(spec);
    Rng rng(51);
    const PolicyTable pi = softmax(random_logits(rng, spec.num_states, spec.num_actions));
    const Eigen::VectorXd x = random_vector(rng, spec.num_states * spec.num_actions, 0.5);

    const Eigen::VectorXd shifted = x.array() + 11.25;
    CHECK(std::abs(env.exact_loss(x, pi) - env.exact_loss(shifted, pi)) < 1e-12);

    // Finite differences of the enumerated loss validate the enumerated
    // gradients.
    const Eigen::VectorXd gx = env.exact_grad_x(x, pi);
    for (int i = 0; i < std::min<int>(3, x.size()); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += 1e-6;
        xm[i] -= 1e-6;
        const double fd = (env.exact_loss(xp, pi) - env.exact_loss(xm, pi)) / 2e-6;
        CHECK(gx[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}
