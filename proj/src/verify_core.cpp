#include <algorithm>
#include <cmath>
#include <vector>

#include "birl/algorithm.hpp"
#include "birl/mdp.hpp"
#include "birl/operators.hpp"
#include "birl/oracles.hpp"
#include "birl/random_instances.hpp"
#include "birl/softmax.hpp"
#include "verify_detail.hpp"

namespace birl::detail {

Eigen::MatrixXd fd_grad_theta_return(const TabularMdp& mdp, const RewardModel& reward,
                                     const Eigen::VectorXd& x, const Eigen::MatrixXd& theta,
                                     double tau, double step) {
    Eigen::MatrixXd g(theta.rows(), theta.cols());
    for (int s = 0; s < theta.rows(); ++s) {
        for (int a = 0; a < theta.cols(); ++a) {
            const double h = step * std::max(1.0, std::abs(theta(s, a)));
            Eigen::MatrixXd tp = theta, tm = theta;
            tp(s, a) += h;
            tm(s, a) -= h;
            const double jp = exact_return(mdp, exact_value(mdp, reward, x, softmax(tp), tau));
            const double jm = exact_return(mdp, exact_value(mdp, reward, x, softmax(tm), tau));
            g(s, a) = (jp - jm) / (2.0 * h);
        }
    }
    return g;
}

Eigen::VectorXd fd_grad_x_return(const TabularMdp& mdp, const RewardModel& reward,
                                 const Eigen::VectorXd& x, const PolicyTable& pi, double tau,
                                 double step) {
    Eigen::VectorXd g(x.size());
    for (int i = 0; i < x.size(); ++i) {
        const double h = step * std::max(1.0, std::abs(x[i]));
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double jp = exact_return(mdp, exact_value(mdp, reward, xp, pi, tau));
        const double jm = exact_return(mdp, exact_value(mdp, reward, xm, pi, tau));
        g[i] = (jp - jm) / (2.0 * h);
    }
    return g;
}

namespace {

Eigen::MatrixXd random_logits(Rng& rng, int ns, int na, double scale) {
    Eigen::MatrixXd theta(ns, na);
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) theta(s, a) = scale * (2.0 * rng.uniform() - 1.0);
    }
    return theta;
}

Eigen::VectorXd random_x(Rng& rng, int d, double radius) {
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x[i] = radius * (2.0 * rng.uniform() - 1.0);
    return x;
}

}  // namespace

void check_gradient_fd_agreement(Checker& c) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomInstanceOptions opts;
        opts.num_states = 2 + static_cast<int>(seed % 4);  // 2..5
        opts.num_actions = 2 + static_cast<int>(seed % 2);  // 2..3
        opts.dim_x = 2 + static_cast<int>(seed % 2);
        opts.gamma = 0.9;
        const BilevelProblem p = random_instance(seed, opts);
        Rng rng(seed + 1000);
        const Eigen::MatrixXd theta =
            random_logits(rng, opts.num_states, opts.num_actions, 1.0);
        const Eigen::VectorXd x = random_x(rng, opts.dim_x, 0.8);
        const double tau = 0.1 * static_cast<double>(seed % 3);

        const Eigen::MatrixXd g_theta = grad_theta_return(p.mdp, p.reward, x, theta, tau);
        const Eigen::MatrixXd g_theta_fd =
            fd_grad_theta_return(p.mdp, p.reward, x, theta, tau, 1e-6);
        c.expect_le(rel_error((g_theta - g_theta_fd).norm(), g_theta_fd.norm()), 1e-5,
                    "policy-gradient fd mismatch, seed " + std::to_string(seed));

        const PolicyTable pi = softmax(theta);
        const Eigen::VectorXd g_x = grad_x_return(p.mdp, p.reward, x, pi);
        const Eigen::VectorXd g_x_fd = fd_grad_x_return(p.mdp, p.reward, x, pi, tau, 1e-6);
        c.expect_le(rel_error((g_x - g_x_fd).norm(), g_x_fd.norm()), 1e-5,
                    "control-gradient fd mismatch, seed " + std::to_string(seed));
    }
}

void check_expected_operator_identities(Checker& c) {
    const OracleConfig oracle;
    for (std::uint64_t seed = 100; seed < 105; ++seed) {
        const BilevelProblem p = random_instance(seed);
        Rng rng(seed);
        const int ns = p.mdp.num_states;
        const int na = p.mdp.num_actions;
        const Eigen::MatrixXd theta = random_logits(rng, ns, na, 1.2);
        const PolicyTable pi = softmax(theta);
        const Eigen::VectorXd x = random_x(rng, p.reward.dim_x, 0.7);

        for (const double tau : {0.05, 0.4}) {
            const Eigen::VectorXd v = exact_value(p.mdp, p.reward, x, pi, tau);

            // Policy operator at zero penalty equals the return gradient.
            const Eigen::MatrixXd f_bar =
                expected_policy_step(p.mdp, p.reward, p.upper, x, theta, v, 0.0, tau);
            const Eigen::MatrixXd g_theta = grad_theta_return(p.mdp, p.reward, x, theta, tau);
            c.expect_le((f_bar - g_theta).lpNorm<Eigen::Infinity>(), 1e-10,
                        "policy-operator mean vs return gradient");

            // With penalty weight it equals the negated scaled-Lagrangian
            // gradient.
            const double w = 0.15;
            const Eigen::MatrixXd f_bar_w =
                expected_policy_step(p.mdp, p.reward, p.upper, x, theta, v, w, tau);
            const Eigen::MatrixXd lag_grad =
                w * grad_pi_to_grad_theta(pi, p.upper.grad_pi(x, pi)) - g_theta;
            c.expect_le((f_bar_w + lag_grad).lpNorm<Eigen::Infinity>(), 1e-10,
                        "policy-operator mean vs scaled-Lagrangian gradient");

            // Critic operator mean vanishes at the exact value.
            const Eigen::VectorXd g_bar = expected_critic_step(p.mdp, p.reward, x, theta, v, tau);
            c.expect_le(g_bar.lpNorm<Eigen::Infinity>(), 1e-10, "critic-operator mean at exact value");

            // Baseline invariance of the sampled-operator mean.
            OperatorOptions with_baseline, without_baseline;
            without_baseline.subtract_value_baseline = false;
            Eigen::VectorXd v_rand(ns);
            for (int s = 0; s < ns; ++s) v_rand[s] = rng.uniform() * 3.0;
            const Eigen::MatrixXd mean_with = mean_sampled_policy_step(
                p.mdp, p.reward, p.upper, x, theta, v_rand, 0.1, tau, with_baseline);
            const Eigen::MatrixXd mean_without = mean_sampled_policy_step(
                p.mdp, p.reward, p.upper, x, theta, v_rand, 0.1, tau, without_baseline);
            c.expect_le((mean_with - mean_without).lpNorm<Eigen::Infinity>(), 1e-10,
                        "baseline invariance of the sampled-operator mean");
        }

        // Control operator mean at the oracle best responses equals the
        // first-order hypergradient.
        const double tau = 0.4, w = 0.1;
        const SoftSolution soft = soft_value_iteration(p.mdp, p.reward, x, tau, oracle);
        const LagrangianSolution pen =
            lagrangian_minimizer(p.mdp, p.reward, p.upper, x, w, tau, oracle);
        const Eigen::VectorXd d_bar =
            expected_control_step(p.mdp, p.reward, p.upper, x, soft.policy, pen.policy, w);
        const Eigen::VectorXd hyper =
            penalty_hypergrad(p.mdp, p.reward, p.upper, x, w, tau, oracle);
        c.expect_le((d_bar - hyper).lpNorm<Eigen::Infinity>(), 1e-10,
                    "control-operator mean vs first-order hypergradient");
    }
}

void check_soft_value_iteration(Checker& c) {
    OracleConfig oracle;
    for (std::uint64_t seed = 200; seed < 205; ++seed) {
        const BilevelProblem p = random_instance(seed);
        Rng rng(seed);
        const Eigen::VectorXd x = random_x(rng, p.reward.dim_x, 0.5);
        for (const double tau : {0.5, 0.1}) {
            const SoftSolution sol = soft_value_iteration(p.mdp, p.reward, x, tau, oracle);
            // Independent residual: one more backup applied to the returned value.
            Eigen::VectorXd backup(p.mdp.num_states);
            for (int s = 0; s < p.mdp.num_states; ++s) {
                Eigen::ArrayXd q(p.mdp.num_actions);
                for (int a = 0; a < p.mdp.num_actions; ++a) {
                    q[a] = p.reward.value(x, s, a) +
                           p.mdp.gamma * p.mdp.transition.row(p.mdp.sa_index(s, a)).dot(sol.value);
                }
                const double m = q.maxCoeff();
                backup[s] = m + tau * std::log(((q - m) / tau).exp().sum());
            }
            c.expect_le((backup - sol.value).lpNorm<Eigen::Infinity>(), 1e-12,
                        "soft backup residual, seed " + std::to_string(seed));

            // Optimality spot check against random policies.
            const double j_star = exact_return(p.mdp, sol.value);
            for (int trial = 0; trial < 20; ++trial) {
                const PolicyTable pi = softmax(random_logits(rng, p.mdp.num_states,
                                                             p.mdp.num_actions, 2.0));
                const double j = exact_return(p.mdp, exact_value(p.mdp, p.reward, x, pi, tau));
                c.expect_le(j - j_star, 1e-9, "random policy beats the soft optimum");
            }
        }
    }

    // Single-state closed form: two actions, rewards (1, 0), tau = 1/2.
    TabularMdp single;
    single.num_states = 1;
    single.num_actions = 2;
    single.gamma = 0.5;
    single.transition = Eigen::MatrixXd::Ones(2, 1);
    single.rho = Eigen::VectorXd::Ones(1);
    RewardModel r;
    r.dim_x = 1;
    r.r_lo = 0.0;
    r.r_hi = 1.0;
    r.grad_bound = 0.0;
    r.value = [](const Eigen::VectorXd&, int, int a) { return a == 0 ? 1.0 : 0.0; };
    r.grad_x = [](const Eigen::VectorXd&, int, int) { return Eigen::VectorXd::Zero(1); };
    const SoftSolution sol =
        soft_value_iteration(single, r, Eigen::VectorXd::Zero(1), 0.5, oracle);
    const double e2 = std::exp(2.0);
    c.expect_le(std::abs(sol.policy(0, 0) - e2 / (e2 + 1.0)), 1e-10,
                "single-state closed-form policy, action 0");
    c.expect_le(std::abs(sol.policy(0, 1) - 1.0 / (e2 + 1.0)), 1e-10,
                "single-state closed-form policy, action 1");
}

void check_best_response_cauchy_rate(Checker& c) {
    // The Cauchy increments of the best-response path scale linearly in tau
    // when the action-gap density grows linearly near zero; a stratified
    // sqrt-uniform gap draw realizes that density, and many states make the
    // increment ratio concentrate near 2. Generic unstructured instances sit
    // in either the saturated regime (ratio >> 2, increments shrink like
    // exp(-gap/tau)) or the high-temperature regime (ratio ~ 1/2) over this
    // tau range, so the gaps are shaped deliberately here.
    const OracleConfig oracle;
    const int ns = 100;
    const double gap_scale = 0.25;
    for (std::uint64_t seed = 300; seed < 305; ++seed) {
        Rng rng(seed);
        BilevelProblem p;
        p.mdp = random_mdp(rng, ns, 2, 0.3);
        Eigen::MatrixXd table(ns, 2);
        for (int s = 0; s < ns; ++s) {
            const double base = rng.uniform();
            const double gap = gap_scale * std::sqrt((s + rng.uniform()) / ns);
            table(s, 0) = base;
            table(s, 1) = base + (rng.bernoulli(0.5) ? gap : -gap);
        }
        p.reward.dim_x = 1;
        p.reward.r_lo = table.minCoeff();
        p.reward.r_hi = table.maxCoeff();
        p.reward.grad_bound = 0.0;
        p.reward.value = [table](const Eigen::VectorXd&, int s, int a) { return table(s, a); };
        p.reward.grad_x = [](const Eigen::VectorXd&, int, int) {
            return Eigen::VectorXd::Zero(1);
        };
        const Eigen::VectorXd x = Eigen::VectorXd::Zero(1);

        const double taus[4] = {0.1, 0.05, 0.025, 0.0125};
        PolicyTable pols[4];
        for (int i = 0; i < 4; ++i) {
            pols[i] = soft_value_iteration(p.mdp, p.reward, x, taus[i], oracle).policy;
        }
        const double d01 = (pols[0] - pols[1]).norm();
        const double d12 = (pols[1] - pols[2]).norm();
        const double d23 = (pols[2] - pols[3]).norm();
        c.expect_in(d01 / d12, 1.5, 2.5,
                    "halving ratio at tau 0.1/0.05, seed " + std::to_string(seed));
        c.expect_in(d12 / d23, 1.5, 2.5,
                    "halving ratio at tau 0.05/0.025, seed " + std::to_string(seed));
    }
}

void check_penalty_bias_linear_in_w(Checker& c) {
    const OracleConfig oracle;
    for (std::uint64_t seed = 400; seed < 405; ++seed) {
        const BilevelProblem p = random_instance(seed);
        Rng rng(seed);
        const Eigen::VectorXd x = random_x(rng, p.reward.dim_x, 0.5);
        const double tau = 0.4;
        const Eigen::VectorXd fd_ref = fd_hypergrad(p.mdp, p.reward, p.upper, x, tau, oracle);

        const double w_hi = 0.1, w_lo = 0.05;
        const double gap_hi =
            (penalty_hypergrad(p.mdp, p.reward, p.upper, x, w_hi, tau, oracle) - fd_ref).norm();
        const double gap_lo =
            (penalty_hypergrad(p.mdp, p.reward, p.upper, x, w_lo, tau, oracle) - fd_ref).norm();
        c.expect_in(gap_hi / gap_lo, 1.4, 2.6,
                    "bias ratio under w halving, seed " + std::to_string(seed));
        c.expect(gap_lo < gap_hi, "bias must shrink with w, seed " + std::to_string(seed));
    }
}

void check_visitation_restart_fixed_point(Checker& c) {
    for (std::uint64_t seed = 500; seed < 505; ++seed) {
        const BilevelProblem p = random_instance(seed);
        Rng rng(seed);
        const PolicyTable pi = softmax(random_logits(rng, p.mdp.num_states, p.mdp.num_actions, 1.0));
        const Eigen::VectorXd d = discounted_visitation(p.mdp, pi);
        c.expect_le(std::abs(d.sum() - 1.0), 1e-10, "visitation must normalize");
        c.expect((d.array() >= (1.0 - p.mdp.gamma) * p.mdp.rho.array() - 1e-12).all(),
                 "visitation below restart floor");

        const Eigen::MatrixXd chain = (1.0 - p.mdp.gamma) * Eigen::VectorXd::Ones(p.mdp.num_states) *
                                          p.mdp.rho.transpose() +
                                      p.mdp.gamma * policy_transition(p.mdp, pi);
        c.expect_le((chain.transpose() * d - d).lpNorm<Eigen::Infinity>(), 1e-10,
                    "restart-chain fixed point residual");
    }
}

void check_value_monotone_in_tau(Checker& c) {
    for (std::uint64_t seed = 600; seed < 605; ++seed) {
        const BilevelProblem p = random_instance(seed);
        Rng rng(seed);
        const PolicyTable pi = softmax(random_logits(rng, p.mdp.num_states, p.mdp.num_actions, 1.0));
        const Eigen::VectorXd x = random_x(rng, p.reward.dim_x, 0.5);
        const Eigen::VectorXd v1 = exact_value(p.mdp, p.reward, x, pi, 0.1);
        const Eigen::VectorXd v2 = exact_value(p.mdp, p.reward, x, pi, 0.5);
        c.expect((v2 - v1).minCoeff() >= -1e-12, "value must be monotone in tau");
    }
}

void check_return_tau_lipschitz(Checker& c) {
    for (std::uint64_t seed = 700; seed < 705; ++seed) {
        const BilevelProblem p = random_instance(seed);
        Rng rng(seed);
        const PolicyTable pi = softmax(random_logits(rng, p.mdp.num_states, p.mdp.num_actions, 1.0));
        const Eigen::VectorXd x = random_x(rng, p.reward.dim_x, 0.5);
        const double tau1 = rng.uniform(), tau2 = rng.uniform();
        const double j1 = exact_return(p.mdp, exact_value(p.mdp, p.reward, x, pi, tau1));
        const double j2 = exact_return(p.mdp, exact_value(p.mdp, p.reward, x, pi, tau2));
        const double bound = std::abs(tau1 - tau2) *
                             std::log(static_cast<double>(p.mdp.num_actions)) /
                             (1.0 - p.mdp.gamma);
        c.expect_le(std::abs(j1 - j2), bound + 1e-12, "return difference exceeds tau bound");
    }
}

void check_log_policy_grad_fd(Checker& c) {
    Rng rng(42);
    const int ns = 3, na = 4;
    double max_rel = 0.0;
    for (int probe = 0; probe < 100; ++probe) {
        const Eigen::MatrixXd theta = random_logits(rng, ns, na, 2.0);
        const int s = static_cast<int>(rng.uniform() * ns);
        const int a = static_cast<int>(rng.uniform() * na);
        const Eigen::MatrixXd g = log_policy_grad(theta, s, a);

        Eigen::MatrixXd g_fd(ns, na);
        const double h = 1e-5;
        for (int s2 = 0; s2 < ns; ++s2) {
            for (int a2 = 0; a2 < na; ++a2) {
                Eigen::MatrixXd tp = theta, tm = theta;
                tp(s2, a2) += h;
                tm(s2, a2) -= h;
                g_fd(s2, a2) = (std::log(softmax(tp)(s, a)) - std::log(softmax(tm)(s, a))) /
                               (2.0 * h);
            }
        }
        max_rel = std::max(max_rel, rel_error((g - g_fd).norm(), std::max(g_fd.norm(), 1.0)));
        c.expect_le(std::abs(g.row(s).sum()), 1e-12, "gradient row must sum to zero");
        for (int s2 = 0; s2 < ns; ++s2) {
            if (s2 != s) c.expect_le(g.row(s2).norm(), 0.0, "gradient must vanish off-row");
        }
    }
    c.expect_le(max_rel, 1e-6, "log-softmax jacobian fd mismatch");
}

void check_log_policy_grad_norm_bound(Checker& c) {
    Rng rng(43);
    for (int probe = 0; probe < 500; ++probe) {
        const int ns = 2 + static_cast<int>(rng.uniform() * 4);
        const int na = 2 + static_cast<int>(rng.uniform() * 4);
        const Eigen::MatrixXd theta = random_logits(rng, ns, na, 5.0);
        const int s = static_cast<int>(rng.uniform() * ns);
        const int a = static_cast<int>(rng.uniform() * na);
        c.expect_le(log_policy_grad(theta, s, a).lpNorm<1>(), 2.0 + 1e-12,
                    "log-policy gradient l1 norm exceeds 2");
    }
}

void check_grad_zero_at_best_response(Checker& c) {
    const OracleConfig oracle;
    for (std::uint64_t seed = 800; seed < 803; ++seed) {
        const BilevelProblem p = random_instance(seed);
        Rng rng(seed);
        const Eigen::VectorXd x = random_x(rng, p.reward.dim_x, 0.5);
        const double tau = 0.3;
        const SoftSolution sol = soft_value_iteration(p.mdp, p.reward, x, tau, oracle);
        const Eigen::MatrixXd theta_star = sol.policy.array().log().matrix();
        const double gnorm = grad_theta_return(p.mdp, p.reward, x, theta_star, tau).norm();
        const double bound = 10.0 * oracle.svi_tol / (tau * (1.0 - p.mdp.gamma));
        c.expect_le(gnorm, bound, "return gradient at the soft best response");
    }
}

void check_entropy_selection(Checker& c) {
    // Duplicate one action so the unregularized optimum is non-unique; the
    // small-tau limit must split the tied mass evenly (the max-entropy pick).
    Rng rng(77);
    TabularMdp mdp = random_mdp(rng, 4, 3, 0.9);
    for (int s = 0; s < mdp.num_states; ++s) {
        mdp.transition.row(mdp.sa_index(s, 2)) = mdp.transition.row(mdp.sa_index(s, 1));
    }
    RewardModel reward;
    reward.dim_x = 1;
    reward.r_lo = 0.0;
    reward.r_hi = 1.0;
    reward.grad_bound = 0.0;
    Eigen::MatrixXd table(4, 3);
    for (int s = 0; s < 4; ++s) {
        table(s, 0) = rng.uniform();
        table(s, 1) = rng.uniform();
        table(s, 2) = table(s, 1);  // tied twin of action 1
    }
    reward.value = [table](const Eigen::VectorXd&, int s, int a) { return table(s, a); };
    reward.grad_x = [](const Eigen::VectorXd&, int, int) { return Eigen::VectorXd::Zero(1); };

    const OracleConfig oracle;
    const Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
    const SoftSolution sol = soft_value_iteration(mdp, reward, x, 1e-6, oracle);
    const double j_limit = exact_return(mdp, exact_value(mdp, reward, x, sol.policy, 0.0));
    const double h_limit = weighted_entropy(mdp, sol.policy);

    // Every deterministic optimal policy is dominated in weighted entropy.
    for (int mask = 0; mask < (1 << 4); ++mask) {
        PolicyTable det = PolicyTable::Zero(4, 3);
        bool optimal = true;
        for (int s = 0; s < 4; ++s) {
            const int choice = (mask >> s) & 1 ? 1 : 2;
            if (table(s, 0) > table(s, 1) + 1e-9) {
                optimal = false;  // action 0 dominates here; skip non-optimal selections
                det(s, 0) = 1.0;
            } else {
                det(s, choice) = 1.0;
            }
        }
        const double j_det = exact_return(mdp, exact_value(mdp, reward, x, det, 0.0));
        if (std::abs(j_det - j_limit) <= 1e-6 && optimal) {
            c.expect_le(weighted_entropy(mdp, det), h_limit + 1e-9,
                        "deterministic optimum out-entropies the limit policy");
        }
    }
    // The tie between the twin actions must be split evenly wherever they win.
    for (int s = 0; s < 4; ++s) {
        if (table(s, 1) > table(s, 0) + 1e-9) {
            c.expect_le(std::abs(sol.policy(s, 1) - sol.policy(s, 2)), 1e-9,
                        "tied actions must share mass evenly");
        }
    }
    c.expect(h_limit > 0.0, "limit policy should randomize on ties");
}

void check_penalty_hypergrad_fd(Checker& c) {
    OracleConfig oracle;
    for (std::uint64_t seed = 900; seed < 903; ++seed) {
        const BilevelProblem p = random_instance(seed);
        Rng rng(seed);
        const Eigen::VectorXd x = random_x(rng, p.reward.dim_x, 0.5);
        const double tau = 0.4, w = 0.1;
        const Eigen::VectorXd hyper =
            penalty_hypergrad(p.mdp, p.reward, p.upper, x, w, tau, oracle);

        Eigen::VectorXd fd(x.size());
        for (int i = 0; i < x.size(); ++i) {
            const double h = oracle.fd_step * std::max(1.0, std::abs(x[i]));
            Eigen::VectorXd xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            const double fp =
                lagrangian_minimizer(p.mdp, p.reward, p.upper, xp, w, tau, oracle).scaled_objective /
                w;
            const double fm =
                lagrangian_minimizer(p.mdp, p.reward, p.upper, xm, w, tau, oracle).scaled_objective /
                w;
            fd[i] = (fp - fm) / (2.0 * h);
        }
        c.expect_le(rel_error((hyper - fd).norm(), fd.norm()), 1e-3,
                    "penalized-surrogate fd mismatch, seed " + std::to_string(seed));
    }
}

void check_phi_refinement(Checker& c) {
    OracleConfig fine;
    fine.phi_eval_tau = 1e-7;
    const OracleConfig coarse;  // 1e-6
    for (std::uint64_t seed = 1000; seed < 1003; ++seed) {
        const BilevelProblem p = random_instance(seed);
        Rng rng(seed);
        const Eigen::VectorXd x = random_x(rng, p.reward.dim_x, 0.5);
        const double phi_coarse = phi_exact(p.mdp, p.reward, p.upper, x, coarse);
        const double phi_fine = phi_exact(p.mdp, p.reward, p.upper, x, fine);
        c.expect_le(std::abs(phi_coarse - phi_fine), 1e-4,
                    "phi refinement gap, seed " + std::to_string(seed));
    }
}

void check_residual_nonneg_dual_path(Checker& c) {
    const OracleConfig oracle;
    for (std::uint64_t seed = 1100; seed < 1103; ++seed) {
        const BilevelProblem p = random_instance(seed);
        Rng rng(seed);
        const Eigen::VectorXd x = random_x(rng, p.reward.dim_x, 0.5);
        const Eigen::MatrixXd theta = random_logits(rng, p.mdp.num_states, p.mdp.num_actions, 1.0);
        const Eigen::MatrixXd theta_pen =
            random_logits(rng, p.mdp.num_states, p.mdp.num_actions, 1.0);
        Eigen::VectorXd v_hat(p.mdp.num_states), v_hat_pen(p.mdp.num_states);
        for (int s = 0; s < p.mdp.num_states; ++s) {
            v_hat[s] = 2.0 * rng.uniform();
            v_hat_pen[s] = 2.0 * rng.uniform();
        }
        const double w = 0.1, tau = 0.3;
        const LyapunovResiduals res = lyapunov_residuals(p.mdp, p.reward, p.upper, x, theta,
                                                         theta_pen, v_hat, v_hat_pen, w, tau,
                                                         oracle);
        c.expect(res.eps_theta >= -oracle.gd_tol, "policy residual must be nonnegative");
        c.expect(res.eps_theta_pen >= -oracle.gd_tol,
                 "penalized-policy residual must be nonnegative");
        c.expect(res.eps_v >= 0.0 && res.eps_v_pen >= 0.0, "critic residuals must be nonnegative");

        // Independent path: value functions from a truncated power series.
        auto series_value = [&](const PolicyTable& pi) {
            const Eigen::MatrixXd pmat = policy_transition(p.mdp, pi);
            Eigen::VectorXd r_pi(p.mdp.num_states);
            for (int s = 0; s < p.mdp.num_states; ++s) {
                double acc = 0.0;
                for (int a = 0; a < p.mdp.num_actions; ++a) {
                    acc += pi(s, a) * p.reward.value(x, s, a);
                }
                r_pi[s] = acc + tau * entropy(pi, s);
            }
            Eigen::VectorXd v = Eigen::VectorXd::Zero(p.mdp.num_states);
            Eigen::VectorXd term = r_pi;
            for (int k = 0; k < 400; ++k) {
                v += term;
                term = p.mdp.gamma * (pmat * term);
            }
            return v;
        };
        const PolicyTable pi = softmax(theta);
        const Eigen::VectorXd v_series = series_value(pi);
        const double eps_v_series = (v_hat - v_series).squaredNorm();
        c.expect_le(std::abs(eps_v_series - res.eps_v), 1e-8,
                    "critic residual dual-path mismatch");

        const SoftSolution soft = soft_value_iteration(p.mdp, p.reward, x, tau, oracle);
        const double eps_theta_series =
            exact_return(p.mdp, soft.value) - exact_return(p.mdp, v_series);
        c.expect_le(std::abs(eps_theta_series - res.eps_theta), 1e-8,
                    "policy residual dual-path mismatch");
    }
}

void check_operator_monte_carlo(Checker& c) {
    const BilevelProblem p = random_instance(1234);
    Rng rng(99);
    const int ns = p.mdp.num_states, na = p.mdp.num_actions;
    const Eigen::MatrixXd theta = random_logits(rng, ns, na, 1.0);
    const PolicyTable pi = softmax(theta);
    const Eigen::VectorXd x = random_x(rng, p.reward.dim_x, 0.5);
    const double w = 0.1, tau = 0.3;
    const OperatorBounds bounds = OperatorBounds::derive(p.mdp, p.reward, p.upper, 1.0);
    Eigen::VectorXd v_hat(ns);
    for (int s = 0; s < ns; ++s) v_hat[s] = bounds.box.clamp(3.0 * rng.uniform());

    const Eigen::MatrixXd mean =
        mean_sampled_policy_step(p.mdp, p.reward, p.upper, x, theta, v_hat, w, tau, {});

    const Eigen::VectorXd d = discounted_visitation(p.mdp, pi);
    const int n_draws = 100000;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(ns, na);
    Eigen::MatrixXd acc_sq = Eigen::MatrixXd::Zero(ns, na);
    for (int i = 0; i < n_draws; ++i) {
        const TrajectoryStep t = iid_sample_with(p.mdp, pi, d, rng);
        const UpperGradSample xi = p.upper.draw(x, pi, rng);
        const auto f = sample_policy_step(p.mdp, p.reward, x, theta, pi, v_hat, t.s, t.a,
                                          t.s_next, &xi, w, tau, bounds, {});
        acc += f.value;
        acc_sq += f.value.cwiseProduct(f.value);
    }
    const Eigen::MatrixXd emp = acc / n_draws;
    int violations = 0;
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            const double var =
                std::max(acc_sq(s, a) / n_draws - emp(s, a) * emp(s, a), 1e-18);
            const double se = std::sqrt(var / n_draws);
            if (std::abs(emp(s, a) - mean(s, a)) > 4.0 * se + 1e-12) ++violations;
        }
    }
    c.expect(violations == 0, "sampled-operator mean outside 4 standard errors (" +
                                  std::to_string(violations) + " entries)");
}

void check_operator_bound_sweep(Checker& c) {
    int checked = 0;
    for (std::uint64_t seed = 1300; seed < 1305; ++seed) {
        const BilevelProblem p = random_instance(seed);
        Rng rng(seed * 3 + 1);
        const int ns = p.mdp.num_states, na = p.mdp.num_actions;
        const OperatorBounds bounds = OperatorBounds::derive(p.mdp, p.reward, p.upper, 1.0);
        const double w_cap = p.reward.grad_bound / p.upper.grad_bound;

        for (int i = 0; i < 2000; ++i) {
            const Eigen::MatrixXd theta = random_logits(rng, ns, na, 3.0);
            const PolicyTable pi = softmax(theta);
            Eigen::VectorXd x = random_x(rng, p.reward.dim_x, 1.0);
            const double tau = rng.uniform();
            const double w = std::min(0.999 * w_cap, 0.01 + rng.uniform());
            Eigen::VectorXd v_hat(ns);
            for (int s = 0; s < ns; ++s) {
                v_hat[s] = bounds.box.lo + rng.uniform() * bounds.box.width;
            }
            const int s = static_cast<int>(rng.uniform() * ns);
            const int a = static_cast<int>(rng.uniform() * na);
            const int sb = static_cast<int>(rng.uniform() * ns);
            const int ab = static_cast<int>(rng.uniform() * na);
            const int sp = static_cast<int>(rng.uniform() * ns);
            const UpperGradSample xi = p.upper.draw(x, pi, rng);

            const auto d_s = sample_control_step(p.reward, x, xi, s, a, sb, ab, w, bounds);
            const auto f_s = sample_policy_step(p.mdp, p.reward, x, theta, pi, v_hat, s, a, sp,
                                                &xi, w, tau, bounds, {});
            const auto g_s = sample_critic_step(p.mdp, p.reward, x, pi, v_hat, s, a, sp, tau,
                                                bounds);
            if (d_s.value.norm() > d_s.bound_used + 1e-9 ||
                f_s.value.norm() > f_s.bound_used + 1e-9 ||
                g_s.value.norm() > g_s.bound_used + 1e-9) {
                c.expect(false, "operator bound violated at seed " + std::to_string(seed));
            }
            ++checked;
        }
    }
    c.expect(checked == 10000, "bound sweep must cover 10^4 draws");
    c.note(std::to_string(checked) + " draws respected the bounds");
}

}  // namespace birl::detail
