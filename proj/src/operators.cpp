#include "birl/operators.hpp"

#include <cmath>
#include <stdexcept>

#include "birl/softmax.hpp"

namespace birl {

namespace {

double regularization_term(const PolicyTable& pi, int s, int a, double tau,
                           OperatorOptions::TdBracket bracket) {
    if (tau == 0.0) return 0.0;
    if (bracket == OperatorOptions::TdBracket::log_policy) {
        return -tau * std::log(std::max(pi(s, a), 1e-300));
    }
    return tau * entropy(pi, s);
}

double td_error(const TabularMdp& mdp, const RewardModel& reward, const Eigen::VectorXd& x,
                const PolicyTable& pi, const Eigen::VectorXd& v_hat, int s, int a, int s_next,
                double tau, const OperatorOptions& opts) {
    double td = reward.value(x, s, a) + regularization_term(pi, s, a, tau, opts.bracket) +
                mdp.gamma * v_hat[s_next];
    if (opts.subtract_value_baseline) td -= v_hat[s];
    return td;
}

}  // namespace

OperatorBounds OperatorBounds::derive(const TabularMdp& mdp, const RewardModel& reward,
                                      const UpperObjective& upper, double tau_cap) {
    OperatorBounds b;
    b.box = ValueBox::from_reward_range(reward.r_lo, reward.r_hi, mdp.num_actions, mdp.gamma,
                                        tau_cap);
    const double log_a = std::log(static_cast<double>(mdp.num_actions));
    const double reward_span = reward.r_hi - reward.r_lo;
    b.b_d = 3.0 * reward.grad_bound;
    b.b_g = (1.0 + mdp.gamma) * b.box.width + tau_cap * log_a + reward_span;
    b.b_f = 2.0 * b.b_g + reward.grad_bound;
    (void)upper;
    return b;
}

OperatorSample<Eigen::VectorXd> sample_control_step(
    const RewardModel& reward, const Eigen::VectorXd& x, const UpperGradSample& xi,
    int s, int a, int sb, int ab, double w, const OperatorBounds& bounds) {
    if (!(w > 0.0)) throw std::invalid_argument("sample_control_step: w must be positive");
    OperatorSample<Eigen::VectorXd> out;
    out.value = xi.grad_x + (reward.grad_x(x, s, a) - reward.grad_x(x, sb, ab)) / w;
    out.bound_used = bounds.b_d / w;
    return out;
}

OperatorSample<Eigen::MatrixXd> sample_policy_step(
    const TabularMdp& mdp, const RewardModel& reward, const Eigen::VectorXd& x,
    const Eigen::MatrixXd& theta, const PolicyTable& pi, const Eigen::VectorXd& v_hat,
    int s, int a, int s_next, const UpperGradSample* xi, double w, double tau,
    const OperatorBounds& bounds, const OperatorOptions& opts) {
    const double td = td_error(mdp, reward, x, pi, v_hat, s, a, s_next, tau, opts);

    OperatorSample<Eigen::MatrixXd> out;
    out.value = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
    out.value.row(s) = -td * pi.row(s);
    out.value(s, a) += td;
    if (w != 0.0) {
        if (xi == nullptr) {
            throw std::invalid_argument("sample_policy_step: w > 0 requires an upper-gradient draw");
        }
        out.value.noalias() -= w * grad_pi_to_grad_theta(pi, xi->grad_pi);
    }
    out.bound_used = bounds.b_f;
    return out;
}

OperatorSample<Eigen::VectorXd> sample_critic_step(
    const TabularMdp& mdp, const RewardModel& reward, const Eigen::VectorXd& x,
    const PolicyTable& pi, const Eigen::VectorXd& v_hat, int s, int a, int s_next,
    double tau, const OperatorBounds& bounds) {
    OperatorSample<Eigen::VectorXd> out;
    out.value = Eigen::VectorXd::Zero(v_hat.size());
    out.value[s] = td_error(mdp, reward, x, pi, v_hat, s, a, s_next, tau, OperatorOptions{});
    out.bound_used = bounds.b_g;
    return out;
}

Eigen::VectorXd expected_control_step(const TabularMdp& mdp, const RewardModel& reward,
                                      const UpperObjective& upper, const Eigen::VectorXd& x,
                                      const PolicyTable& pi, const PolicyTable& pi_pen, double w) {
    if (!(w > 0.0)) throw std::invalid_argument("expected_control_step: w must be positive");
    // Enumerated over both sampling marginals, with the f term taken from the
    // exact-gradient hook.
    auto visitation_mean = [&](const PolicyTable& policy) {
        const Eigen::VectorXd d = discounted_visitation(mdp, policy);
        Eigen::VectorXd m = Eigen::VectorXd::Zero(reward.dim_x);
        for (int s = 0; s < mdp.num_states; ++s) {
            for (int a = 0; a < mdp.num_actions; ++a) {
                const double weight = d[s] * policy(s, a);
                if (weight > 0.0) m.noalias() += weight * reward.grad_x(x, s, a);
            }
        }
        return m;
    };
    const Eigen::VectorXd mean_reg = visitation_mean(pi);
    const Eigen::VectorXd mean_pen = visitation_mean(pi_pen);
    return upper.grad_x(x, pi_pen) + (mean_reg - mean_pen) / ((1.0 - mdp.gamma) * w);
}

Eigen::MatrixXd expected_policy_step(const TabularMdp& mdp, const RewardModel& reward,
                                     const UpperObjective& upper, const Eigen::VectorXd& x,
                                     const Eigen::MatrixXd& theta, const Eigen::VectorXd& v,
                                     double w, double tau) {
    // Likelihood-ratio form enumerated over s ~ d, a ~ pi, s' ~ P with the
    // critic argument v in place of the true value function:
    //   sum d(s)/(1-gamma) pi(a|s) (r - tau log pi + gamma (Pv)(s,a) - v(s)) dlogpi.
    const PolicyTable pi = softmax(theta);
    const Eigen::VectorXd d = discounted_visitation(mdp, pi);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
    for (int s = 0; s < mdp.num_states; ++s) {
        double mean_b = 0.0;
        Eigen::VectorXd bracket(mdp.num_actions);
        for (int a = 0; a < mdp.num_actions; ++a) {
            const double pv = mdp.transition.row(mdp.sa_index(s, a)).dot(v);
            bracket[a] = reward.value(x, s, a) -
                         tau * std::log(std::max(pi(s, a), 1e-300)) + mdp.gamma * pv - v[s];
            mean_b += pi(s, a) * bracket[a];
        }
        for (int a = 0; a < mdp.num_actions; ++a) {
            g(s, a) = d[s] * pi(s, a) * (bracket[a] - mean_b) / (1.0 - mdp.gamma);
        }
    }
    if (w != 0.0) {
        g.noalias() -= w * grad_pi_to_grad_theta(pi, upper.grad_pi(x, pi));
    }
    return g;
}

Eigen::VectorXd expected_critic_step(const TabularMdp& mdp, const RewardModel& reward,
                                     const Eigen::VectorXd& x, const Eigen::MatrixXd& theta,
                                     const Eigen::VectorXd& v, double tau) {
    const PolicyTable pi = softmax(theta);
    const Eigen::VectorXd d = discounted_visitation(mdp, pi);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s) {
        const double h = entropy(pi, s);
        double acc = 0.0;
        for (int a = 0; a < mdp.num_actions; ++a) {
            const double pv = mdp.transition.row(mdp.sa_index(s, a)).dot(v);
            acc += pi(s, a) * (reward.value(x, s, a) + tau * h + mdp.gamma * pv - v[s]);
        }
        g[s] = d[s] * acc;
    }
    return g;
}

Eigen::MatrixXd mean_sampled_policy_step(const TabularMdp& mdp, const RewardModel& reward,
                                         const UpperObjective& upper, const Eigen::VectorXd& x,
                                         const Eigen::MatrixXd& theta, const Eigen::VectorXd& v_hat,
                                         double w, double tau, const OperatorOptions& opts) {
    const PolicyTable pi = softmax(theta);
    const Eigen::VectorXd d = discounted_visitation(mdp, pi);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
    for (int s = 0; s < mdp.num_states; ++s) {
        Eigen::VectorXd bracket(mdp.num_actions);
        double mean_b = 0.0;
        for (int a = 0; a < mdp.num_actions; ++a) {
            const double pv = mdp.transition.row(mdp.sa_index(s, a)).dot(v_hat);
            bracket[a] = reward.value(x, s, a) + regularization_term(pi, s, a, tau, opts.bracket) +
                         mdp.gamma * pv;
            if (opts.subtract_value_baseline) bracket[a] -= v_hat[s];
            mean_b += pi(s, a) * bracket[a];
        }
        for (int a = 0; a < mdp.num_actions; ++a) {
            g(s, a) = d[s] * pi(s, a) * (bracket[a] - mean_b);
        }
    }
    if (w != 0.0) {
        g.noalias() -= w * grad_pi_to_grad_theta(pi, upper.grad_pi(x, pi));
    }
    return g;
}

}  // namespace birl
