#include "birl/oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "birl/softmax.hpp"

namespace birl {

namespace {

// One log-sum-exp Bellman backup; fills q and the greedy-soft policy.
Eigen::VectorXd soft_backup(const TabularMdp& mdp, const Eigen::MatrixXd& r, double tau,
                            const Eigen::VectorXd& v, Eigen::MatrixXd* policy_out) {
    const int ns = mdp.num_states;
    const int na = mdp.num_actions;
    Eigen::VectorXd out(ns);
    for (int s = 0; s < ns; ++s) {
        Eigen::ArrayXd q(na);
        for (int a = 0; a < na; ++a) {
            q[a] = r(s, a) + mdp.gamma * mdp.transition.row(mdp.sa_index(s, a)).dot(v);
        }
        const double m = q.maxCoeff();
        const Eigen::ArrayXd e = ((q - m) / tau).exp();
        const double z = e.sum();
        out[s] = m + tau * std::log(z);
        if (policy_out) policy_out->row(s) = (e / z).transpose();
    }
    return out;
}

Eigen::MatrixXd reward_table(const TabularMdp& mdp, const RewardModel& reward,
                             const Eigen::VectorXd& x) {
    Eigen::MatrixXd r(mdp.num_states, mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s) {
        for (int a = 0; a < mdp.num_actions; ++a) r(s, a) = reward.value(x, s, a);
    }
    return r;
}

// Gradient of w*L with respect to softmax logits:
//   w * dtheta f(x, pi_theta) - dtheta J_tau(x, pi_theta).
Eigen::MatrixXd scaled_lagrangian_grad(const TabularMdp& mdp, const RewardModel& reward,
                                       const UpperObjective& upper, const Eigen::VectorXd& x,
                                       const Eigen::MatrixXd& theta, double w, double tau) {
    const PolicyTable pi = softmax(theta);
    const Eigen::MatrixXd g_j = grad_theta_return(mdp, reward, x, theta, tau);
    const Eigen::MatrixXd g_f = grad_pi_to_grad_theta(pi, upper.grad_pi(x, pi));
    return w * g_f - g_j;
}

}  // namespace

Eigen::MatrixXd grad_pi_to_grad_theta(const PolicyTable& pi, const Eigen::MatrixXd& grad_pi) {
    Eigen::MatrixXd g(pi.rows(), pi.cols());
    for (int s = 0; s < pi.rows(); ++s) {
        const double mean = pi.row(s).dot(grad_pi.row(s));
        for (int a = 0; a < pi.cols(); ++a) {
            g(s, a) = pi(s, a) * (grad_pi(s, a) - mean);
        }
    }
    return g;
}

SoftSolution soft_value_iteration(const TabularMdp& mdp, const RewardModel& reward,
                                  const Eigen::VectorXd& x, double tau,
                                  const OracleConfig& cfg) {
    if (!(tau > 0.0)) throw std::invalid_argument("soft_value_iteration: tau must be positive");
    const Eigen::MatrixXd r = reward_table(mdp, reward, x);

    SoftSolution sol;
    sol.policy.resize(mdp.num_states, mdp.num_actions);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.num_states);
    double residual = std::numeric_limits<double>::infinity();
    double best_residual = residual;
    int since_improvement = 0;
    for (int it = 0; it < cfg.svi_max_iter; ++it) {
        Eigen::VectorXd next = soft_backup(mdp, r, tau, v, &sol.policy);
        residual = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        if (residual < best_residual) {
            best_residual = residual;
            since_improvement = 0;
        } else {
            ++since_improvement;
        }
        // Accept a roundoff plateau: on large value scales the sup-norm
        // residual bottoms out near eps * ||V|| and cannot reach an absolute
        // tolerance below that.
        const double roundoff =
            1e3 * std::numeric_limits<double>::epsilon() *
            std::max(1.0, v.lpNorm<Eigen::Infinity>());
        if (residual <= cfg.svi_tol || (since_improvement > 200 && residual <= roundoff)) {
            sol.value = std::move(v);
            sol.residual = residual;
            sol.iterations = it + 1;
            return sol;
        }
    }
    char msg[96];
    std::snprintf(msg, sizeof(msg), "soft_value_iteration: max iterations reached, residual %.3e",
                  residual);
    throw ConvergenceFailure(msg, residual);
}

double scaled_lagrangian(const TabularMdp& mdp, const RewardModel& reward,
                         const UpperObjective& upper, const Eigen::VectorXd& x,
                         const PolicyTable& pi, double w, double tau,
                         const OracleConfig& cfg) {
    const double j_star = exact_return(mdp, soft_value_iteration(mdp, reward, x, tau, cfg).value);
    const double j_pi = exact_return(mdp, exact_value(mdp, reward, x, pi, tau));
    return w * upper.value(x, pi) + j_star - j_pi;
}

LagrangianSolution lagrangian_minimizer(const TabularMdp& mdp, const RewardModel& reward,
                                        const UpperObjective& upper, const Eigen::VectorXd& x,
                                        double w, double tau, const OracleConfig& cfg) {
    if (!(w > 0.0) || !(tau > 0.0)) {
        throw std::invalid_argument("lagrangian_minimizer: w and tau must be positive");
    }
    const SoftSolution soft = soft_value_iteration(mdp, reward, x, tau, cfg);
    const double j_star = exact_return(mdp, soft.value);

    // Objective up to the constant j_star; evaluated without re-solving for it.
    auto objective = [&](const Eigen::MatrixXd& theta) {
        const PolicyTable pi = softmax(theta);
        const double j_pi = exact_return(mdp, exact_value(mdp, reward, x, pi, tau));
        return w * upper.value(x, pi) + j_star - j_pi;
    };

    // Warm start at the regularized best response; the penalized optimum is
    // within O(w/tau) of it. Logits come from the soft backup values directly
    // so that underflowed policy entries do not produce -inf.
    Eigen::MatrixXd theta(mdp.num_states, mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s) {
        for (int a = 0; a < mdp.num_actions; ++a) {
            const double q = reward.value(x, s, a) +
                             mdp.gamma * mdp.transition.row(mdp.sa_index(s, a)).dot(soft.value);
            theta(s, a) = q / tau;
        }
        const double m = theta.row(s).maxCoeff();
        for (int a = 0; a < mdp.num_actions; ++a) {
            theta(s, a) = std::max(theta(s, a) - m, -500.0);
        }
    }
    recenter_logits(theta);

    // Phase 1: soft policy iteration on the stationarity condition
    //   pi propto exp((Q_tau^pi - w(1-gamma) grad_pi f / d) / tau),
    // which handles saturated logits that defeat plain descent. The full map
    // can limit-cycle, so each step backtracks the mixing factor until the
    // gradient norm decreases; descent below polishes or takes over when the
    // map stops making progress.
    {
        auto apply_map = [&](const Eigen::MatrixXd& th, double eta) {
            const PolicyTable pi = softmax(th);
            const Eigen::VectorXd v = exact_value(mdp, reward, x, pi, tau);
            const Eigen::VectorXd d = discounted_visitation(mdp, pi);
            const Eigen::MatrixXd g_pi = upper.grad_pi(x, pi);
            Eigen::MatrixXd target(mdp.num_states, mdp.num_actions);
            for (int s = 0; s < mdp.num_states; ++s) {
                for (int a = 0; a < mdp.num_actions; ++a) {
                    const double q =
                        reward.value(x, s, a) +
                        mdp.gamma * mdp.transition.row(mdp.sa_index(s, a)).dot(v);
                    target(s, a) = (q - w * (1.0 - mdp.gamma) * g_pi(s, a) / d[s]) / tau;
                }
                const double m = target.row(s).maxCoeff();
                for (int a = 0; a < mdp.num_actions; ++a) {
                    target(s, a) = std::max(target(s, a) - m, -500.0);
                }
            }
            Eigen::MatrixXd out = th;
            recenter_logits(out);
            recenter_logits(target);
            return Eigen::MatrixXd(out + eta * (target - out));
        };

        Eigen::MatrixXd best_theta = theta;
        double best_norm = scaled_lagrangian_grad(mdp, reward, upper, x, theta, w, tau).norm();
        // Fixed-mixing epochs; the mixing factor halves whenever an epoch
        // fails to shrink the gradient materially (the full map can orbit a
        // limit cycle, a small enough factor stabilizes it).
        double eta = 1.0;
        const int epoch_len = 250;
        const int max_epochs = 14;
        for (int epoch = 0; epoch < max_epochs && best_norm > cfg.gd_tol; ++epoch) {
            Eigen::MatrixXd th = best_theta;
            const double epoch_start = best_norm;
            for (int t = 0; t < epoch_len; ++t) {
                th = apply_map(th, eta);
                const double g = scaled_lagrangian_grad(mdp, reward, upper, x, th, w, tau).norm();
                if (g < best_norm) {
                    best_norm = g;
                    best_theta = th;
                    if (best_norm <= cfg.gd_tol) break;
                }
            }
            if (best_norm > 0.2 * epoch_start) eta *= 0.5;
        }
        theta = best_theta;
        if (best_norm <= cfg.gd_tol) {
            LagrangianSolution out;
            out.theta = theta;
            out.policy = softmax(theta);
            out.scaled_objective = objective(theta);
            out.grad_norm = best_norm;
            out.iterations = 0;
            return out;
        }
    }

    Eigen::MatrixXd grad = scaled_lagrangian_grad(mdp, reward, upper, x, theta, w, tau);
    double f_cur = objective(theta);
    double step = 1.0;
    Eigen::MatrixXd prev_theta, prev_grad;

    // Nonmonotone acceptance window; near the optimum the objective decrease
    // sinks below floating-point resolution while the (analytic) gradient is
    // still contracting, so acceptance must not insist on measured descent.
    std::array<double, 8> recent{};
    recent.fill(f_cur);
    int recent_pos = 0;

    int it = 0;
    for (; it < cfg.gd_max_iter; ++it) {
        const double gnorm = grad.norm();
        if (gnorm <= cfg.gd_tol) {
            LagrangianSolution out;
            out.theta = theta;
            out.policy = softmax(theta);
            out.scaled_objective = objective(theta);
            out.grad_norm = gnorm;
            out.iterations = it;
            return out;
        }

        if (it > 0) {
            // Barzilai-Borwein spectral step, clipped to a sane range.
            const Eigen::MatrixXd ds = theta - prev_theta;
            const Eigen::MatrixXd dg = grad - prev_grad;
            const double sg = (ds.array() * dg.array()).sum();
            if (sg > 0.0) {
                step = ds.squaredNorm() / sg;
            }
            step = std::clamp(step, 1e-10, 1e6);
        }

        prev_theta = theta;
        prev_grad = grad;

        const double f_ref =
            *std::max_element(recent.begin(), recent.end()) + 1e-12 * (1.0 + std::abs(f_cur));
        const double sq = grad.squaredNorm();
        double trial_step = step;
        for (int bt = 0; bt < 40; ++bt) {
            Eigen::MatrixXd cand = theta - trial_step * grad;
            const double f_cand = objective(cand);
            if (f_cand <= f_ref - 1e-4 * trial_step * sq || bt == 39) {
                theta = std::move(cand);
                f_cur = f_cand;
                break;
            }
            trial_step *= 0.5;
        }
        recent[recent_pos] = f_cur;
        recent_pos = (recent_pos + 1) % static_cast<int>(recent.size());

        recenter_logits(theta);
        grad = scaled_lagrangian_grad(mdp, reward, upper, x, theta, w, tau);
    }
    char msg[96];
    std::snprintf(msg, sizeof(msg), "lagrangian_minimizer: max iterations reached, grad norm %.3e",
                  grad.norm());
    throw ConvergenceFailure(msg, grad.norm());
}

Eigen::VectorXd penalty_hypergrad(const TabularMdp& mdp, const RewardModel& reward,
                                  const UpperObjective& upper, const Eigen::VectorXd& x,
                                  double w, double tau, const OracleConfig& cfg) {
    const SoftSolution soft = soft_value_iteration(mdp, reward, x, tau, cfg);
    const LagrangianSolution pen = lagrangian_minimizer(mdp, reward, upper, x, w, tau, cfg);
    const Eigen::VectorXd g_reg = grad_x_return(mdp, reward, x, soft.policy);
    const Eigen::VectorXd g_pen = grad_x_return(mdp, reward, x, pen.policy);
    return upper.grad_x(x, pen.policy) + (g_reg - g_pen) / w;
}

Eigen::VectorXd fd_hypergrad(const TabularMdp& mdp, const RewardModel& reward,
                             const UpperObjective& upper, const Eigen::VectorXd& x,
                             double tau, const OracleConfig& cfg) {
    Eigen::VectorXd g(x.size());
    for (int i = 0; i < x.size(); ++i) {
        const double h = cfg.fd_step * std::max(1.0, std::abs(x[i]));
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (phi_at_tau(mdp, reward, upper, xp, tau, cfg) -
                phi_at_tau(mdp, reward, upper, xm, tau, cfg)) /
               (2.0 * h);
    }
    return g;
}

double phi_at_tau(const TabularMdp& mdp, const RewardModel& reward,
                  const UpperObjective& upper, const Eigen::VectorXd& x, double tau,
                  const OracleConfig& cfg) {
    const SoftSolution soft = soft_value_iteration(mdp, reward, x, tau, cfg);
    return upper.value(x, soft.policy);
}

double phi_exact(const TabularMdp& mdp, const RewardModel& reward,
                 const UpperObjective& upper, const Eigen::VectorXd& x,
                 const OracleConfig& cfg) {
    return phi_at_tau(mdp, reward, upper, x, cfg.phi_eval_tau, cfg);
}

LyapunovResiduals lyapunov_residuals(const TabularMdp& mdp, const RewardModel& reward,
                                     const UpperObjective& upper, const Eigen::VectorXd& x,
                                     const Eigen::MatrixXd& theta, const Eigen::MatrixXd& theta_pen,
                                     const Eigen::VectorXd& v_hat, const Eigen::VectorXd& v_hat_pen,
                                     double w, double tau, const OracleConfig& cfg) {
    LyapunovResiduals res;
    const PolicyTable pi = softmax(theta);
    const PolicyTable pi_pen = softmax(theta_pen);

    const SoftSolution soft = soft_value_iteration(mdp, reward, x, tau, cfg);
    const Eigen::VectorXd v_pi = exact_value(mdp, reward, x, pi, tau);
    res.eps_theta = exact_return(mdp, soft.value) - exact_return(mdp, v_pi);
    res.eps_v = (v_hat - v_pi).squaredNorm();

    const Eigen::VectorXd v_pen = exact_value(mdp, reward, x, pi_pen, tau);
    res.eps_v_pen = (v_hat_pen - v_pen).squaredNorm();

    const LagrangianSolution best = lagrangian_minimizer(mdp, reward, upper, x, w, tau, cfg);
    const double j_star = exact_return(mdp, soft.value);
    const double scaled_at_iterate =
        w * upper.value(x, pi_pen) + j_star - exact_return(mdp, v_pen);
    res.eps_theta_pen = scaled_at_iterate - best.scaled_objective;
    return res;
}

}  // namespace birl
