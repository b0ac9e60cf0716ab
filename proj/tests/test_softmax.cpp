#include <doctest.h>

#include <cmath>
#include <limits>

#include "birl/softmax.hpp"
#include "helpers.hpp"

using namespace birl;
using namespace birl::testing;

TEST_CASE("softmax rows") {
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 4);
    const PolicyTable uniform = softmax(zero);
    CHECK((uniform.array() - 0.25).abs().maxCoeff() < 1e-15);

    // Shift invariance: constant rows stay uniform, shifted rows are unchanged.
    Eigen::MatrixXd shifted(1, 4);
    shifted << 17.0, 17.0, 17.0, 17.0;
    CHECK((softmax(shifted).array() - 0.25).abs().maxCoeff() < 1e-15);

    Eigen::MatrixXd logs(1, 4);
    logs << std::log(1.0), std::log(2.0), std::log(3.0), std::log(4.0);
    const PolicyTable p = softmax(logs);
    CHECK(p(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(p(0, 1) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(p(0, 2) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(p(0, 3) == doctest::Approx(0.4).epsilon(1e-12));

    Rng rng(6);
    const Eigen::MatrixXd theta = random_logits(rng, 4, 3, 30.0);
    const PolicyTable pi = softmax(theta);
    for (int s = 0; s < 4; ++s) {
        CHECK(pi.row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(pi.row(s).minCoeff() > 0.0);
    }
    Eigen::MatrixXd recentered = theta;
    recenter_logits(recentered);
    CHECK((softmax(recentered) - pi).lpNorm<Eigen::Infinity>() < 1e-12);

    Eigen::MatrixXd bad(1, 2);
    bad << 1.0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(softmax(bad), std::invalid_argument);
}

TEST_CASE("entropy and weighted entropy") {
    const PolicyTable uniform = PolicyTable::Constant(1, 4, 0.25);
    CHECK(entropy(uniform, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    PolicyTable det = PolicyTable::Zero(1, 4);
    det(0, 2) = 1.0;
    CHECK(entropy(det, 0) == 0.0);

    PolicyTable row(1, 4);
    row << 0.1, 0.2, 0.3, 0.4;
    double expected = 0.0;
    for (int a = 0; a < 4; ++a) expected -= row(0, a) * std::log(row(0, a));
    CHECK(entropy(row, 0) == doctest::Approx(expected).epsilon(1e-12));

    Rng rng(7);
    const TabularMdp mdp = random_mdp(rng, 4, 3, 0.9);
    const PolicyTable full_uniform = PolicyTable::Constant(4, 3, 1.0 / 3.0);
    CHECK(weighted_entropy(mdp, full_uniform) == doctest::Approx(std::log(3.0)).epsilon(1e-10));

    PolicyTable full_det = PolicyTable::Zero(4, 3);
    full_det.col(0).setOnes();
    CHECK(weighted_entropy(mdp, full_det) == doctest::Approx(0.0).epsilon(1e-12));

    // Independent recomputation of the weighted sum.
    const PolicyTable pi = softmax(random_logits(rng, 4, 3));
    const Eigen::VectorXd d = discounted_visitation(mdp, pi);
    double direct = 0.0;
    for (int s = 0; s < 4; ++s) direct += d[s] * entropy(pi, s);
    CHECK(weighted_entropy(mdp, pi) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("log_policy_grad structure") {
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 4);
    const Eigen::MatrixXd g = log_policy_grad(zero, 1, 2);
    CHECK(g(1, 2) == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(g(1, 0) == doctest::Approx(-0.25).epsilon(1e-14));
    CHECK(g.row(0).norm() == 0.0);
    CHECK(g.row(2).norm() == 0.0);
    CHECK(std::abs(g.row(1).sum()) < 1e-14);

    // Saturation: a near-deterministic row has a vanishing gradient at its
    // dominant action.
    Eigen::MatrixXd sat(1, 3);
    sat << 40.0, 0.0, 0.0;
    CHECK(log_policy_grad(sat, 0, 0).norm() < 1e-12);

    CHECK_THROWS_AS(log_policy_grad(zero, 3, 0), std::out_of_range);
    CHECK_THROWS_AS(log_policy_grad(zero, 0, 4), std::out_of_range);
}
