#include "birl/algorithm.hpp"

#include <cmath>
#include <limits>

#include "birl/softmax.hpp"

namespace birl {

TrajectoryStep advance_trajectory(const TabularMdp& mdp, const PolicyTable& pi, int cursor,
                                  Rng& rng) {
    // Draw order is fixed (action, next state, restart coin, restart index) so
    // that traces are reproducible byte for byte.
    TrajectoryStep st;
    st.s = cursor;
    st.a = rng.categorical_row(pi, cursor);
    st.s_next = rng.categorical(mdp.transition.row(mdp.sa_index(st.s, st.a)).transpose());
    if (rng.bernoulli(1.0 - mdp.gamma)) {
        st.new_cursor = rng.categorical(mdp.rho);
    } else {
        st.new_cursor = st.s_next;
    }
    return st;
}

TrajectoryStep iid_sample_with(const TabularMdp& mdp, const PolicyTable& pi,
                               const Eigen::VectorXd& visitation, Rng& rng) {
    TrajectoryStep st;
    st.s = rng.categorical(visitation);
    st.a = rng.categorical_row(pi, st.s);
    st.s_next = rng.categorical(mdp.transition.row(mdp.sa_index(st.s, st.a)).transpose());
    st.new_cursor = st.s_next;
    return st;
}

TrajectoryStep iid_sample(const TabularMdp& mdp, const PolicyTable& pi, Rng& rng) {
    return iid_sample_with(mdp, pi, discounted_visitation(mdp, pi), rng);
}

bool checkpoint_due(long long k, long long iterations, double ratio, long long next_due) {
    (void)ratio;
    return k >= next_due || k == iterations;
}

SingleLoopDriver::SingleLoopDriver(const BilevelProblem& problem, const RunOptions& options)
    : problem_(problem), options_(options) {
    if (options_.strict_theory) options_.schedules.enforce_base_ordering();
    const double tau_cap = std::max(options_.tau_cap, options_.schedules.tau0);
    bounds_ = OperatorBounds::derive(problem_.mdp, problem_.reward, problem_.upper, tau_cap);
}

RunState SingleLoopDriver::make_initial_state() const {
    RunState st;
    st.x = problem_.x0;
    st.theta = Eigen::MatrixXd::Zero(problem_.mdp.num_states, problem_.mdp.num_actions);
    st.theta_pen = st.theta;
    st.v_hat = Eigen::VectorXd::Zero(problem_.mdp.num_states);
    st.v_hat_pen = st.v_hat;
    for (int s = 0; s < problem_.mdp.num_states; ++s) {
        st.v_hat[s] = bounds_.box.clamp(st.v_hat[s]);
        st.v_hat_pen[s] = bounds_.box.clamp(st.v_hat_pen[s]);
    }
    st.rng = Rng(options_.seed);
    st.cursor1 = st.rng.categorical(problem_.mdp.rho);
    st.cursor2 = st.rng.categorical(problem_.mdp.rho);
    return st;
}

void SingleLoopDriver::step(RunState& state, const StepObserver& observer) const {
    const TabularMdp& mdp = problem_.mdp;
    const auto sched = options_.schedules.at(state.k);

    const PolicyTable pi = softmax(state.theta);
    const PolicyTable pi_pen = softmax(state.theta_pen);

    TrajectoryStep t1, t2;
    if (options_.mode == SamplingMode::markovian) {
        t1 = advance_trajectory(mdp, pi, state.cursor1, state.rng);
        t2 = advance_trajectory(mdp, pi_pen, state.cursor2, state.rng);
    } else {
        t1 = iid_sample(mdp, pi, state.rng);
        t2 = iid_sample(mdp, pi_pen, state.rng);
    }
    const UpperGradSample xi = problem_.upper.draw(state.x, pi_pen, state.rng);

    const int td1 = options_.td_target_uses_restart ? t1.new_cursor : t1.s_next;
    const int td2 = options_.td_target_uses_restart ? t2.new_cursor : t2.s_next;

    // All five directions are formed from iteration-k quantities before any
    // iterate is written.
    const auto control = sample_control_step(problem_.reward, state.x, xi, t1.s, t1.a, t2.s,
                                             t2.a, sched.w, bounds_);
    const auto policy =
        sample_policy_step(mdp, problem_.reward, state.x, state.theta, pi, state.v_hat, t1.s,
                           t1.a, td1, nullptr, 0.0, sched.tau, bounds_, options_.operator_options);
    const auto policy_pen = sample_policy_step(mdp, problem_.reward, state.x, state.theta_pen,
                                               pi_pen, state.v_hat_pen, t2.s, t2.a, td2, &xi,
                                               sched.w, sched.tau, bounds_,
                                               options_.operator_options);
    const auto critic = sample_critic_step(mdp, problem_.reward, state.x, pi, state.v_hat, t1.s,
                                           t1.a, td1, sched.tau, bounds_);
    const auto critic_pen = sample_critic_step(mdp, problem_.reward, state.x, pi_pen,
                                               state.v_hat_pen, t2.s, t2.a, td2, sched.tau,
                                               bounds_);

    if (observer) {
        observer(StepSamples{state.k, sched, control, policy, policy_pen, critic, critic_pen,
                             state.v_hat, state.v_hat_pen});
    }

    state.x -= sched.zeta * control.value;
    problem_.project(state.x);
    state.theta += sched.alpha * policy.value;
    state.theta_pen += sched.alpha * policy_pen.value;
    state.v_hat += sched.beta * critic.value;
    state.v_hat_pen += sched.beta * critic_pen.value;
    for (int s = 0; s < mdp.num_states; ++s) {
        state.v_hat[s] = bounds_.box.clamp(state.v_hat[s]);
        state.v_hat_pen[s] = bounds_.box.clamp(state.v_hat_pen[s]);
    }

    state.cursor1 = t1.new_cursor;
    state.cursor2 = t2.new_cursor;
    state.k += 1;
    state.samples += 2;

    if (options_.recenter_every > 0 && state.k % options_.recenter_every == 0) {
        recenter_logits(state.theta);
        recenter_logits(state.theta_pen);
    }

    if (!state.x.allFinite() || !state.theta.allFinite() || !state.theta_pen.allFinite() ||
        !state.v_hat.allFinite() || !state.v_hat_pen.allFinite()) {
        throw DivergenceError("single-loop driver: non-finite iterate at k=" +
                                  std::to_string(state.k),
                              TraceRecord{});
    }
}

TraceRecord SingleLoopDriver::checkpoint(const RunState& state) const {
    const auto sched = options_.schedules.at(state.k);
    TraceRecord rec;
    rec.k = state.k;
    rec.samples = state.samples;
    rec.x = state.x;
    rec.sched = sched;
    rec.phi = phi_exact(problem_.mdp, problem_.reward, problem_.upper, state.x, options_.oracle);
    const double grad_tau = std::max(sched.tau, options_.oracle.phi_eval_tau);
    rec.grad_norm =
        fd_hypergrad(problem_.mdp, problem_.reward, problem_.upper, state.x, grad_tau,
                     options_.oracle)
            .norm();
    if (options_.record_residuals) {
        rec.residuals = lyapunov_residuals(problem_.mdp, problem_.reward, problem_.upper, state.x,
                                           state.theta, state.theta_pen, state.v_hat,
                                           state.v_hat_pen, sched.w, sched.tau, options_.oracle);
    } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        rec.residuals = LyapunovResiduals{nan, nan, nan, nan};
    }
    return rec;
}

std::vector<TraceRecord> SingleLoopDriver::run(const StepObserver& observer) const {
    RunState state = make_initial_state();
    std::vector<TraceRecord> trace;
    trace.push_back(checkpoint(state));

    long long next_due = 1;
    while (state.k < options_.iterations) {
        try {
            step(state, observer);
        } catch (const DivergenceError& e) {
            throw DivergenceError(e.what(), trace.back());
        }
        if (state.k >= next_due || state.k == options_.iterations) {
            trace.push_back(checkpoint(state));
            next_due = std::max<long long>(
                state.k + 1,
                static_cast<long long>(std::ceil(static_cast<double>(state.k) *
                                                 options_.checkpoint_ratio)));
        }
    }
    if (trace.back().k != state.k) trace.push_back(checkpoint(state));
    return trace;
}

}  // namespace birl
