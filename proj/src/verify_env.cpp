#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "birl/config.hpp"
#include "birl/gridworld.hpp"
#include "birl/preference.hpp"
#include "birl/runner.hpp"
#include "birl/softmax.hpp"
#include "birl/trace_io.hpp"
#include "verify_detail.hpp"

namespace birl::detail {

void check_gridworld_formulas(Checker& c) {
    GridWorldSpec spec;
    const BilevelProblem p = make_gridworld_problem(spec);
    p.mdp.validate();

    Eigen::VectorXd goal(2);
    goal << 5.0, 5.0;
    const int s21 = spec.state_of(2, 1);
    c.expect_le(std::abs(gridworld_reward(spec, goal, s21) + 25.0), 1e-12,
                "reward at goal (5,5), state (2,1)");
    const Eigen::VectorXd g = gridworld_reward_grad(spec, goal, s21);
    c.expect_le(std::abs(g[0] + 6.0) + std::abs(g[1] + 8.0), 1e-12, "reward gradient entries");

    // Finite-difference check of the analytic reward gradient.
    const double h = 1e-6;
    for (int i = 0; i < 2; ++i) {
        Eigen::VectorXd gp = goal, gm = goal;
        gp[i] += h;
        gm[i] -= h;
        const double fd =
            (gridworld_reward(spec, gp, s21) - gridworld_reward(spec, gm, s21)) / (2.0 * h);
        c.expect_le(std::abs(fd - g[i]), 1e-5, "reward gradient fd check");
    }
    c.expect(gridworld_reward(spec, goal, spec.state_of(5, 5)) == 0.0, "reward at the goal cell");

    // Upper objective at the center with an all-DOWN policy and a uniform one.
    PolicyTable down = PolicyTable::Zero(100, 4);
    down.col(GridWorldSpec::DOWN).setOnes();
    const Eigen::VectorXd center = spec.center();
    c.expect_le(std::abs(gridworld_upper(spec, center, down) + 100.0 * spec.lambda), 1e-9,
                "upper objective with an all-DOWN policy");
    const PolicyTable uniform = PolicyTable::Constant(100, 4, 0.25);
    c.expect_le(std::abs(gridworld_upper(spec, center, uniform) + 50.0 * spec.lambda), 1e-9,
                "upper objective with the uniform policy");

    // Gradients of f.
    Eigen::VectorXd x(2);
    x << 7.0, 3.0;
    const Eigen::VectorXd gx = p.upper.grad_x(x, uniform);
    c.expect_le(std::abs(gx[0] - 2.0 * (7.0 - 4.5)) + std::abs(gx[1] - 2.0 * (3.0 - 4.5)), 1e-12,
                "analytic control gradient of f");
    const Eigen::MatrixXd gpi = p.upper.grad_pi(x, uniform);
    c.expect(gpi.col(GridWorldSpec::DOWN).isConstant(-spec.lambda) &&
                 gpi.col(GridWorldSpec::RIGHT).isConstant(-spec.lambda) &&
                 gpi.col(GridWorldSpec::UP).isZero() && gpi.col(GridWorldSpec::LEFT).isZero(),
             "policy gradient of f");

    // Deterministic clamped moves: every transition row is a point mass.
    for (int s = 0; s < p.mdp.num_states; ++s) {
        for (int a = 0; a < 4; ++a) {
            c.expect(p.mdp.transition.row(p.mdp.sa_index(s, a)).maxCoeff() == 1.0,
                     "transitions must be point masses");
        }
    }
    const int corner = spec.state_of(spec.width - 1, spec.height - 1);
    c.expect(p.mdp.transition(p.mdp.sa_index(corner, GridWorldSpec::RIGHT), corner) == 1.0,
             "boundary moves must clamp in place");
}

void check_gridworld_corner_sweep(Checker& c) {
    GridWorldSpec spec;
    spec.lambda = 8.0;
    Eigen::MatrixXd table;
    const auto [best, best_phi] = gridworld_phi_sweep(spec, 1e-6, &table);
    c.expect(best[0] == spec.width - 1 && best[1] == spec.height - 1,
             "sweep argmin must be the bottom-right corner");
    c.expect(table.rows() == spec.height && table.cols() == spec.width, "sweep table shape");
    c.note("corner phi " + std::to_string(best_phi));
}

void check_preference_model(Checker& c) {
    c.expect_le(std::abs(pairwise_preference_prob(1.3, 1.3) - 0.5), 1e-15,
                "equal scores must tie");
    c.expect_le(std::abs(pairwise_preference_prob(1.0, 0.0) -
                         std::exp(1.0) / (std::exp(1.0) + 1.0)),
                1e-12, "unit score gap probability");
    c.expect(pairwise_preference_prob(500.0, 0.0) > 1.0 - 1e-12, "large gap must saturate");
    c.expect_le(std::abs(pairwise_preference_prob(3.0, 1.0) +
                         pairwise_preference_prob(1.0, 3.0) - 1.0),
                1e-15, "preference probabilities must be complementary");

    PreferenceProblemSpec spec;
    const PreferenceEnvironment env(spec);
    env.problem().mdp.validate();
    Rng rng(5);
    Eigen::MatrixXd logits(spec.num_states, spec.num_actions);
    for (int s = 0; s < spec.num_states; ++s) {
        for (int a = 0; a < spec.num_actions; ++a) logits(s, a) = 2.0 * rng.uniform() - 1.0;
    }
    const PolicyTable pi = softmax(logits);

    // Shift invariance: a constant added to every reward entry cancels in the
    // pairwise differences.
    Eigen::VectorXd x(spec.num_states * spec.num_actions);
    for (int i = 0; i < x.size(); ++i) x[i] = rng.uniform() - 0.5;
    Eigen::VectorXd x_shifted = x.array() + 3.7;
    c.expect_le(std::abs(env.exact_loss(x, pi) - env.exact_loss(x_shifted, pi)), 1e-12,
                "loss must be invariant to constant reward shifts");

    // Identical trajectories carry no reward-gradient signal.
    Trajectory t;
    t.states = {0, 1};
    t.actions = {1, 0};
    const double eq_loss = env.pair_loss(x, t, t, env.label(t, t));
    c.expect_le(std::abs(eq_loss - std::log(2.0)), 1e-12, "identical pair loss is log 2");

    // A reward table matching the hidden scorer beats the uninformative one.
    const double loss_true = env.exact_loss(env.hidden_scores(), pi);
    const double loss_zero = env.exact_loss(Eigen::VectorXd::Zero(x.size()), pi);
    c.expect(loss_true < loss_zero, "true reward table must fit preferences better than zero");

    // Sampled gradients agree with the enumerated expectation within 4 SE.
    const Eigen::VectorXd exact_gx = env.exact_grad_x(x, pi);
    const Eigen::MatrixXd exact_gpi = env.exact_grad_pi(x, pi);
    const int n = 10000;
    Eigen::VectorXd acc_x = Eigen::VectorXd::Zero(x.size());
    Eigen::VectorXd acc_x_sq = Eigen::VectorXd::Zero(x.size());
    Eigen::MatrixXd acc_pi = Eigen::MatrixXd::Zero(pi.rows(), pi.cols());
    Eigen::MatrixXd acc_pi_sq = Eigen::MatrixXd::Zero(pi.rows(), pi.cols());
    for (int i = 0; i < n; ++i) {
        const auto smp = env.sample_loss(x, pi, rng);
        acc_x += smp.grad_x;
        acc_x_sq += smp.grad_x.cwiseProduct(smp.grad_x);
        acc_pi += smp.grad_pi;
        acc_pi_sq += smp.grad_pi.cwiseProduct(smp.grad_pi);
    }
    int violations = 0;
    for (int i = 0; i < x.size(); ++i) {
        const double m = acc_x[i] / n;
        const double se = std::sqrt(std::max(acc_x_sq[i] / n - m * m, 1e-18) / n);
        if (std::abs(m - exact_gx[i]) > 4.0 * se + 1e-12) ++violations;
    }
    for (int s = 0; s < pi.rows(); ++s) {
        for (int a = 0; a < pi.cols(); ++a) {
            const double m = acc_pi(s, a) / n;
            const double se =
                std::sqrt(std::max(acc_pi_sq(s, a) / n - m * m, 1e-18) / n);
            if (std::abs(m - exact_gpi(s, a)) > 4.0 * se + 1e-12) ++violations;
        }
    }
    c.expect(violations == 0, "sampled preference gradients outside 4 standard errors (" +
                                  std::to_string(violations) + ")");
}

void check_trace_roundtrip(Checker& c) {
    GridWorldSpec spec;
    const BilevelProblem p = make_gridworld_problem(spec);
    RunOptions opt;
    opt.iterations = 10;
    opt.seed = 2;
    opt.oracle.gd_tol = 1e-6;
    opt.schedules.zeta0 = 0.01;
    opt.schedules.alpha0 = 0.001;
    opt.schedules.beta0 = 0.3;
    opt.schedules.w0 = 0.5;
    opt.schedules.tau0 = 1.0;
    SingleLoopDriver driver(p, opt);
    const std::vector<TraceRecord> trace = driver.run();

    const auto path = std::filesystem::temp_directory_path() / "birl_trace_roundtrip.csv";
    write_trace(path.string(), trace);
    const std::vector<TraceRecord> parsed = read_trace(path.string());
    std::filesystem::remove(path);

    c.expect(parsed.size() == trace.size(), "record count must round-trip");
    for (std::size_t i = 0; i < std::min(parsed.size(), trace.size()); ++i) {
        const TraceRecord& a = trace[i];
        const TraceRecord& b = parsed[i];
        const bool equal = a.k == b.k && a.samples == b.samples && a.phi == b.phi &&
                           a.grad_norm == b.grad_norm &&
                           a.residuals.eps_theta == b.residuals.eps_theta &&
                           a.residuals.eps_theta_pen == b.residuals.eps_theta_pen &&
                           a.residuals.eps_v == b.residuals.eps_v &&
                           a.residuals.eps_v_pen == b.residuals.eps_v_pen &&
                           a.x == b.x && a.sched.zeta == b.sched.zeta &&
                           a.sched.alpha == b.sched.alpha && a.sched.beta == b.sched.beta &&
                           a.sched.w == b.sched.w && a.sched.tau == b.sched.tau;
        c.expect(equal, "record " + std::to_string(i) + " must round-trip bit-exactly");
    }
    c.expect(trace_header(2) ==
                 "k,samples,phi,grad_norm,eps_theta,eps_theta_L,eps_V,eps_V_L,x_0,x_1,"
                 "zeta,alpha,beta,w,tau",
             "header layout");
}

void check_config_errors(Checker& c) {
    const std::string good =
        "[run]\n"
        "environment = gridworld\n"
        "algorithm = proposed\n"
        "iterations = 100\n"
        "seed = 3\n"
        "[schedules]\n"
        "preset = decaying_tau\n"
        "zeta0 = 0.01\n"
        "tau0 = 1.0\n"
        "[gridworld]\n"
        "lambda = 4.0\n";
    bool ok = true;
    try {
        const RunConfig cfg = parse_config(good, "test.cfg");
        ok = cfg.iterations == 100 && cfg.seed == 3 && cfg.gridworld.lambda == 4.0 &&
             cfg.schedules.zeta0 == 0.01;
    } catch (...) {
        ok = false;
    }
    c.expect(ok, "well-formed config must parse");

    auto rejects = [&](const std::string& text, const std::string& what) {
        try {
            parse_config(text, "bad.cfg");
            c.expect(false, "config with " + what + " must be rejected");
        } catch (const std::invalid_argument&) {
            c.expect(true, "");
        } catch (...) {
            c.expect(false, "config with " + what + " must raise invalid_argument");
        }
    };
    rejects("[run]\nnot_a_key = 1\n", "an unknown key");
    rejects("[nosuch]\nx = 1\n", "an unknown section");
    rejects("[run]\niterations 100\n", "a missing equals sign");
    rejects("[run]\nmode = sideways\n", "an invalid mode");
    rejects("[schedules]\nzeta0 = -1\n", "a negative base");

    RunConfig cfg = parse_config(good, "test.cfg");
    apply_override(cfg, "schedules.tau0=0.5");
    apply_override(cfg, "run.seed=9");
    c.expect(cfg.schedules.tau0 == 0.5 && cfg.seed == 9, "overrides must apply");
    try {
        apply_override(cfg, "schedules.bogus=1");
        c.expect(false, "unknown override must be rejected");
    } catch (const std::invalid_argument&) {
        c.expect(true, "");
    }
}

}  // namespace birl::detail
