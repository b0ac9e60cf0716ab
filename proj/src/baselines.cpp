#include "birl/baselines.hpp"

#include <cmath>
#include <limits>

#include "birl/softmax.hpp"

namespace birl {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

TraceRecord base_checkpoint(const BilevelProblem& problem, const RunOptions& options,
                            const Eigen::VectorXd& x, long long k, long long samples,
                            const ScheduleSet::Values& sched) {
    TraceRecord rec;
    rec.k = k;
    rec.samples = samples;
    rec.x = x;
    rec.sched = sched;
    rec.phi = phi_exact(problem.mdp, problem.reward, problem.upper, x, options.oracle);
    const double grad_tau = std::max(sched.tau, options.oracle.phi_eval_tau);
    rec.grad_norm =
        fd_hypergrad(problem.mdp, problem.reward, problem.upper, x, grad_tau, options.oracle)
            .norm();
    rec.residuals = LyapunovResiduals{kNan, kNan, kNan, kNan};
    return rec;
}

long long next_checkpoint(long long k, double ratio) {
    return std::max<long long>(k + 1,
                               static_cast<long long>(std::ceil(static_cast<double>(k) * ratio)));
}

}  // namespace

// ---------------------------------------------------------------------------
// Partial SGD
// ---------------------------------------------------------------------------

PartialSgdDriver::PartialSgdDriver(const BilevelProblem& problem, const RunOptions& options)
    : problem_(problem), options_(options) {
    bounds_ = OperatorBounds::derive(problem_.mdp, problem_.reward, problem_.upper,
                                     std::max(options_.tau_cap, options_.schedules.tau0));
}

PartialSgdDriver::State PartialSgdDriver::make_initial_state() const {
    State st;
    st.x = problem_.x0;
    st.theta = Eigen::MatrixXd::Zero(problem_.mdp.num_states, problem_.mdp.num_actions);
    st.v_hat = Eigen::VectorXd::Zero(problem_.mdp.num_states);
    for (int s = 0; s < problem_.mdp.num_states; ++s) st.v_hat[s] = bounds_.box.clamp(st.v_hat[s]);
    st.rng = Rng(options_.seed);
    st.cursor = st.rng.categorical(problem_.mdp.rho);
    return st;
}

void PartialSgdDriver::step(State& state) const {
    const TabularMdp& mdp = problem_.mdp;
    const auto sched = options_.schedules.at(state.k);
    const PolicyTable pi = softmax(state.theta);

    const TrajectoryStep t = options_.mode == SamplingMode::markovian
                                 ? advance_trajectory(mdp, pi, state.cursor, state.rng)
                                 : iid_sample(mdp, pi, state.rng);
    const UpperGradSample xi = problem_.upper.draw(state.x, pi, state.rng);

    const int td = options_.td_target_uses_restart ? t.new_cursor : t.s_next;
    const auto policy = sample_policy_step(mdp, problem_.reward, state.x, state.theta, pi,
                                           state.v_hat, t.s, t.a, td, nullptr, 0.0, 0.0, bounds_,
                                           options_.operator_options);
    const auto critic = sample_critic_step(mdp, problem_.reward, state.x, pi, state.v_hat, t.s,
                                           t.a, td, 0.0, bounds_);

    state.x -= sched.zeta * xi.grad_x;  // no penalty correction
    problem_.project(state.x);
    state.theta += sched.alpha * policy.value;
    state.v_hat += sched.beta * critic.value;
    for (int s = 0; s < mdp.num_states; ++s) state.v_hat[s] = bounds_.box.clamp(state.v_hat[s]);

    state.cursor = t.new_cursor;
    state.k += 1;
    state.samples += 1;

    if (options_.recenter_every > 0 && state.k % options_.recenter_every == 0) {
        recenter_logits(state.theta);
    }
}

TraceRecord PartialSgdDriver::checkpoint(const State& state) const {
    auto rec = base_checkpoint(problem_, options_, state.x, state.k, state.samples,
                               options_.schedules.at(state.k));
    if (options_.record_residuals) {
        // The unregularized target is approximated at the phi evaluation weight.
        const double tau_eval = options_.oracle.phi_eval_tau;
        const PolicyTable pi = softmax(state.theta);
        const SoftSolution soft =
            soft_value_iteration(problem_.mdp, problem_.reward, state.x, tau_eval, options_.oracle);
        const Eigen::VectorXd v_pi =
            exact_value(problem_.mdp, problem_.reward, state.x, pi, tau_eval);
        rec.residuals.eps_theta = exact_return(problem_.mdp, soft.value) -
                                  exact_return(problem_.mdp, v_pi);
        rec.residuals.eps_v = (state.v_hat - v_pi).squaredNorm();
    }
    return rec;
}

std::vector<TraceRecord> PartialSgdDriver::run() const {
    State state = make_initial_state();
    std::vector<TraceRecord> trace;
    trace.push_back(checkpoint(state));
    long long due = 1;
    while (state.k < options_.iterations) {
        step(state);
        if (state.k >= due || state.k == options_.iterations) {
            trace.push_back(checkpoint(state));
            due = next_checkpoint(state.k, options_.checkpoint_ratio);
        }
    }
    if (trace.back().k != state.k) trace.push_back(checkpoint(state));
    return trace;
}

// ---------------------------------------------------------------------------
// Finite-difference hypergradient
// ---------------------------------------------------------------------------

FiniteDifferenceDriver::FiniteDifferenceDriver(const BilevelProblem& problem,
                                               const RunOptions& options,
                                               const BaselineConfig& baseline)
    : problem_(problem), options_(options), baseline_(baseline) {
    bounds_ = OperatorBounds::derive(problem_.mdp, problem_.reward, problem_.upper,
                                     std::max({options_.tau_cap, options_.schedules.tau0,
                                               baseline_.inner_tau}));
}

FiniteDifferenceDriver::State FiniteDifferenceDriver::make_initial_state() const {
    State st;
    st.x = problem_.x0;
    st.theta_plus = Eigen::MatrixXd::Zero(problem_.mdp.num_states, problem_.mdp.num_actions);
    st.theta_minus = st.theta_plus;
    st.v_plus = Eigen::VectorXd::Zero(problem_.mdp.num_states);
    st.v_minus = st.v_plus;
    st.rng = Rng(options_.seed);
    st.cursor_plus = st.rng.categorical(problem_.mdp.rho);
    st.cursor_minus = st.rng.categorical(problem_.mdp.rho);
    return st;
}

void FiniteDifferenceDriver::inner_solve(Eigen::VectorXd& x_eval, Eigen::MatrixXd& theta,
                                         Eigen::VectorXd& v_hat, int& cursor, Rng& rng) const {
    const TabularMdp& mdp = problem_.mdp;
    const double tau = baseline_.inner_tau;
    for (long long j = 0; j < baseline_.inner_iters; ++j) {
        const double decay = std::pow(static_cast<double>(j + 1), baseline_.inner_decay);
        const double alpha = options_.schedules.alpha0 / decay;
        const double beta = options_.schedules.beta0 / decay;
        const PolicyTable pi = softmax(theta);
        const TrajectoryStep t = options_.mode == SamplingMode::markovian
                                     ? advance_trajectory(mdp, pi, cursor, rng)
                                     : iid_sample(mdp, pi, rng);
        const int td = options_.td_target_uses_restart ? t.new_cursor : t.s_next;
        const auto policy = sample_policy_step(mdp, problem_.reward, x_eval, theta, pi, v_hat,
                                               t.s, t.a, td, nullptr, 0.0, tau, bounds_,
                                               options_.operator_options);
        const auto critic = sample_critic_step(mdp, problem_.reward, x_eval, pi, v_hat, t.s, t.a,
                                               td, tau, bounds_);
        theta += alpha * policy.value;
        v_hat += beta * critic.value;
        for (int s = 0; s < mdp.num_states; ++s) v_hat[s] = bounds_.box.clamp(v_hat[s]);
        cursor = t.new_cursor;
    }
    recenter_logits(theta);
}

Eigen::VectorXd FiniteDifferenceDriver::assemble_direction(const Eigen::VectorXd& x,
                                                           const Eigen::VectorXd& direction,
                                                           const PolicyTable& pi_plus,
                                                           const PolicyTable& pi_minus,
                                                           Rng& rng) const {
    const PolicyTable pi_mid = 0.5 * (pi_plus + pi_minus);
    const UpperGradSample xi = problem_.upper.draw(x, pi_mid, rng);
    const double dir_deriv =
        (xi.grad_pi.array() * (pi_plus - pi_minus).array()).sum() / (2.0 * baseline_.fd_epsilon);
    return xi.grad_x + dir_deriv * direction;
}

void FiniteDifferenceDriver::step(State& state) const {
    Eigen::VectorXd direction(state.x.size());
    if (state.x.size() == 1) {
        direction[0] = 1.0;
    } else {
        for (int i = 0; i < direction.size(); ++i) direction[i] = state.rng.rademacher();
    }

    Eigen::VectorXd x_plus = state.x + baseline_.fd_epsilon * direction;
    Eigen::VectorXd x_minus = state.x - baseline_.fd_epsilon * direction;
    inner_solve(x_plus, state.theta_plus, state.v_plus, state.cursor_plus, state.rng);
    inner_solve(x_minus, state.theta_minus, state.v_minus, state.cursor_minus, state.rng);
    state.samples += 2 * baseline_.inner_iters;

    const Eigen::VectorXd grad = assemble_direction(
        state.x, direction, softmax(state.theta_plus), softmax(state.theta_minus), state.rng);
    const auto sched = options_.schedules.at(state.k);
    state.x -= sched.zeta * grad;
    problem_.project(state.x);
    state.k += 1;
}

TraceRecord FiniteDifferenceDriver::checkpoint(const State& state) const {
    return base_checkpoint(problem_, options_, state.x, state.k, state.samples,
                           options_.schedules.at(state.k));
}

std::vector<TraceRecord> FiniteDifferenceDriver::run() const {
    State state = make_initial_state();
    std::vector<TraceRecord> trace;
    trace.push_back(checkpoint(state));
    long long due = 1;
    while (state.k < options_.iterations) {
        step(state);
        if (state.k >= due || state.k == options_.iterations) {
            trace.push_back(checkpoint(state));
            due = next_checkpoint(state.k, options_.checkpoint_ratio);
        }
    }
    if (trace.back().k != state.k) trace.push_back(checkpoint(state));
    return trace;
}

// ---------------------------------------------------------------------------
// Nested loop
// ---------------------------------------------------------------------------

NestedLoopDriver::NestedLoopDriver(const BilevelProblem& problem, const RunOptions& options,
                                   const BaselineConfig& baseline)
    : problem_(problem), options_(options), baseline_(baseline) {
    bounds_ = OperatorBounds::derive(problem_.mdp, problem_.reward, problem_.upper,
                                     std::max(options_.tau_cap, options_.schedules.tau0));
}

RunState NestedLoopDriver::make_initial_state() const {
    SingleLoopDriver single(problem_, options_);
    return single.make_initial_state();
}

void NestedLoopDriver::outer_step(RunState& state) const {
    const TabularMdp& mdp = problem_.mdp;
    const auto sched = options_.schedules.at(state.k);

    // Inner refit of both policies and critics at frozen x.
    for (long long j = 0; j < baseline_.inner_iters; ++j) {
        const double decay = std::pow(static_cast<double>(j + 1), baseline_.inner_decay);
        const double alpha = options_.schedules.alpha0 / decay;
        const double beta = options_.schedules.beta0 / decay;
        const PolicyTable pi = softmax(state.theta);
        const PolicyTable pi_pen = softmax(state.theta_pen);
        const TrajectoryStep t1 = options_.mode == SamplingMode::markovian
                                      ? advance_trajectory(mdp, pi, state.cursor1, state.rng)
                                      : iid_sample(mdp, pi, state.rng);
        const TrajectoryStep t2 = options_.mode == SamplingMode::markovian
                                      ? advance_trajectory(mdp, pi_pen, state.cursor2, state.rng)
                                      : iid_sample(mdp, pi_pen, state.rng);
        const UpperGradSample xi = problem_.upper.draw(state.x, pi_pen, state.rng);
        const int td1 = options_.td_target_uses_restart ? t1.new_cursor : t1.s_next;
        const int td2 = options_.td_target_uses_restart ? t2.new_cursor : t2.s_next;

        const auto policy = sample_policy_step(mdp, problem_.reward, state.x, state.theta, pi,
                                               state.v_hat, t1.s, t1.a, td1, nullptr, 0.0,
                                               sched.tau, bounds_, options_.operator_options);
        const auto policy_pen = sample_policy_step(
            mdp, problem_.reward, state.x, state.theta_pen, pi_pen, state.v_hat_pen, t2.s, t2.a,
            td2, &xi, sched.w, sched.tau, bounds_, options_.operator_options);
        const auto critic = sample_critic_step(mdp, problem_.reward, state.x, pi, state.v_hat,
                                               t1.s, t1.a, td1, sched.tau, bounds_);
        const auto critic_pen = sample_critic_step(mdp, problem_.reward, state.x, pi_pen,
                                                   state.v_hat_pen, t2.s, t2.a, td2, sched.tau,
                                                   bounds_);
        state.theta += alpha * policy.value;
        state.theta_pen += alpha * policy_pen.value;
        state.v_hat += beta * critic.value;
        state.v_hat_pen += beta * critic_pen.value;
        for (int s = 0; s < mdp.num_states; ++s) {
            state.v_hat[s] = bounds_.box.clamp(state.v_hat[s]);
            state.v_hat_pen[s] = bounds_.box.clamp(state.v_hat_pen[s]);
        }
        state.cursor1 = t1.new_cursor;
        state.cursor2 = t2.new_cursor;
        state.samples += 2;
    }
    recenter_logits(state.theta);
    recenter_logits(state.theta_pen);

    // One control update from fresh samples at the inner solutions.
    const PolicyTable pi = softmax(state.theta);
    const PolicyTable pi_pen = softmax(state.theta_pen);
    const TrajectoryStep t1 = options_.mode == SamplingMode::markovian
                                  ? advance_trajectory(mdp, pi, state.cursor1, state.rng)
                                  : iid_sample(mdp, pi, state.rng);
    const TrajectoryStep t2 = options_.mode == SamplingMode::markovian
                                  ? advance_trajectory(mdp, pi_pen, state.cursor2, state.rng)
                                  : iid_sample(mdp, pi_pen, state.rng);
    const UpperGradSample xi = problem_.upper.draw(state.x, pi_pen, state.rng);
    const auto control = sample_control_step(problem_.reward, state.x, xi, t1.s, t1.a, t2.s,
                                             t2.a, sched.w, bounds_);
    state.x -= sched.zeta * control.value;
    problem_.project(state.x);
    state.cursor1 = t1.new_cursor;
    state.cursor2 = t2.new_cursor;
    state.samples += 2;
    state.k += 1;
}

TraceRecord NestedLoopDriver::checkpoint(const RunState& state, long long outer_k) const {
    const auto sched = options_.schedules.at(outer_k);
    auto rec = base_checkpoint(problem_, options_, state.x, outer_k, state.samples, sched);
    if (options_.record_residuals) {
        rec.residuals = lyapunov_residuals(problem_.mdp, problem_.reward, problem_.upper, state.x,
                                           state.theta, state.theta_pen, state.v_hat,
                                           state.v_hat_pen, sched.w, sched.tau, options_.oracle);
    }
    return rec;
}

std::vector<TraceRecord> NestedLoopDriver::run() const {
    RunState state = make_initial_state();
    std::vector<TraceRecord> trace;
    trace.push_back(checkpoint(state, 0));
    long long due = 1;
    while (state.k < options_.iterations) {
        outer_step(state);
        if (state.k >= due || state.k == options_.iterations) {
            trace.push_back(checkpoint(state, state.k));
            due = next_checkpoint(state.k, options_.checkpoint_ratio);
        }
    }
    if (trace.back().k != state.k) trace.push_back(checkpoint(state, state.k));
    return trace;
}

}  // namespace birl
