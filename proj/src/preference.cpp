#include "birl/preference.hpp"

#include <cmath>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace birl {

double pairwise_preference_prob(double score0, double score1) {
    // exp(s0) / (exp(s0) + exp(s1)), computed as a stable sigmoid.
    const double delta = score0 - score1;
    if (delta >= 0.0) {
        return 1.0 / (1.0 + std::exp(-delta));
    }
    const double e = std::exp(delta);
    return e / (1.0 + e);
}

double trajectory_score(const Eigen::VectorXd& reward_table, int num_actions,
                        const Trajectory& t) {
    double score = 0.0;
    for (std::size_t i = 0; i < t.states.size(); ++i) {
        score += reward_table[t.states[i] * num_actions + t.actions[i]];
    }
    return score;
}

namespace {

Eigen::VectorXd feature_counts(int dim, int num_actions, const Trajectory& t) {
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < t.states.size(); ++i) {
        phi[t.states[i] * num_actions + t.actions[i]] += 1.0;
    }
    return phi;
}

}  // namespace

PreferenceEnvironment::PreferenceEnvironment(const PreferenceProblemSpec& spec) : spec_(spec) {
    const int ns = spec.num_states;
    const int na = spec.num_actions;
    Rng gen(spec.dynamics_seed);

    problem_.name = "preference";
    problem_.mdp.num_states = ns;
    problem_.mdp.num_actions = na;
    problem_.mdp.gamma = spec.gamma;
    problem_.mdp.rho = Eigen::VectorXd::Constant(ns, 1.0 / ns);
    problem_.mdp.transition = Eigen::MatrixXd::Zero(static_cast<long>(ns) * na, ns);
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            const int target = (s + 1 + a) % ns;
            for (int sp = 0; sp < ns; ++sp) {
                double prob = spec.slip / ns;
                if (sp == target) prob += 1.0 - spec.slip;
                problem_.mdp.transition(problem_.mdp.sa_index(s, a), sp) = prob;
            }
        }
    }

    true_reward_.resize(ns * na);
    for (int i = 0; i < ns * na; ++i) true_reward_[i] = 2.0 * gen.uniform() - 1.0;

    problem_.reward.dim_x = ns * na;
    problem_.reward.r_lo = -2.0;
    problem_.reward.r_hi = 2.0;
    problem_.reward.grad_bound = 1.0;
    const int na_copy = na;
    problem_.reward.value = [na_copy](const Eigen::VectorXd& x, int s, int a) {
        return x[s * na_copy + a];
    };
    problem_.reward.grad_x = [na_copy](const Eigen::VectorXd& x, int s, int a) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
        g[s * na_copy + a] = 1.0;
        return g;
    };

    problem_.x0 = Eigen::VectorXd::Zero(ns * na);

    enumerate_paths();

    problem_.upper.dim_x = ns * na;
    problem_.upper.grad_bound = 2.0 * spec.trajectory_len;
    problem_.upper.value = [this](const Eigen::VectorXd& x, const PolicyTable& pi) {
        return exact_loss(x, pi);
    };
    problem_.upper.grad_x = [this](const Eigen::VectorXd& x, const PolicyTable& pi) {
        return exact_grad_x(x, pi);
    };
    problem_.upper.grad_pi = [this](const Eigen::VectorXd& x, const PolicyTable& pi) {
        return exact_grad_pi(x, pi);
    };
    problem_.upper.sample_grads = [this](const Eigen::VectorXd& x, const PolicyTable& pi,
                                         Rng& rng) {
        const int draws = std::max(1, spec_.pairs_per_eval);
        UpperGradSample g;
        g.grad_x = Eigen::VectorXd::Zero(x.size());
        g.grad_pi = Eigen::MatrixXd::Zero(pi.rows(), pi.cols());
        for (int i = 0; i < draws; ++i) {
            const LossSample ls = sample_loss(x, pi, rng);
            g.grad_x += ls.grad_x;
            g.grad_pi += ls.grad_pi;
        }
        g.grad_x /= draws;
        g.grad_pi /= draws;
        return g;
    };
}

void PreferenceEnvironment::enumerate_paths() {
    const int ns = spec_.num_states;
    const int na = spec_.num_actions;
    const int len = spec_.trajectory_len;

    double count_estimate = std::pow(static_cast<double>(ns) * na, len);
    if (count_estimate > 2e5) {
        throw std::invalid_argument("PreferenceEnvironment: trajectory space too large to enumerate");
    }

    PathEntry partial;
    partial.log_prob_dynamics = 0.0;
    std::vector<PathEntry> frontier;
    for (int s = 0; s < ns; ++s) {
        PathEntry e;
        e.t.states.push_back(s);
        e.log_prob_dynamics = std::log(problem_.mdp.rho[s]);
        frontier.push_back(std::move(e));
    }
    for (int step = 0; step < len; ++step) {
        std::vector<PathEntry> next;
        for (const PathEntry& e : frontier) {
            const int s = e.t.states.back();
            for (int a = 0; a < na; ++a) {
                if (step + 1 < len) {
                    for (int sp = 0; sp < ns; ++sp) {
                        const double p = problem_.mdp.transition(problem_.mdp.sa_index(s, a), sp);
                        if (p <= 0.0) continue;
                        PathEntry e2 = e;
                        e2.t.actions.push_back(a);
                        e2.t.states.push_back(sp);
                        e2.log_prob_dynamics += std::log(p);
                        next.push_back(std::move(e2));
                    }
                } else {
                    PathEntry e2 = e;
                    e2.t.actions.push_back(a);
                    next.push_back(std::move(e2));
                }
            }
        }
        frontier = std::move(next);
    }
    paths_ = std::move(frontier);
}

double PreferenceEnvironment::path_prob(const PathEntry& p, const PolicyTable& pi) const {
    double log_p = p.log_prob_dynamics;
    for (std::size_t i = 0; i < p.t.actions.size(); ++i) {
        log_p += std::log(pi(p.t.states[i], p.t.actions[i]));
    }
    return std::exp(log_p);
}

Trajectory PreferenceEnvironment::rollout(const PolicyTable& pi, Rng& rng) const {
    Trajectory t;
    int s = rng.categorical(problem_.mdp.rho);
    for (int step = 0; step < spec_.trajectory_len; ++step) {
        const int a = rng.categorical_row(pi, s);
        t.states.push_back(s);
        t.actions.push_back(a);
        if (step + 1 < spec_.trajectory_len) {
            s = rng.categorical(
                problem_.mdp.transition.row(problem_.mdp.sa_index(s, a)).transpose());
        }
    }
    return t;
}

int PreferenceEnvironment::label(const Trajectory& t0, const Trajectory& t1) const {
    const double s0 = trajectory_score(true_reward_, spec_.num_actions, t0);
    const double s1 = trajectory_score(true_reward_, spec_.num_actions, t1);
    return s0 > s1 ? 1 : 0;
}

double PreferenceEnvironment::pair_loss(const Eigen::VectorXd& x, const Trajectory& t0,
                                        const Trajectory& t1, int y) const {
    const double s0 = trajectory_score(x, spec_.num_actions, t0);
    const double s1 = trajectory_score(x, spec_.num_actions, t1);
    const double p = pairwise_preference_prob(s0, s1);
    const double eps = 1e-300;  // scores are finite, p never saturates to 0/1 exactly
    return -y * std::log(std::max(p, eps)) - (1 - y) * std::log(std::max(1.0 - p, eps));
}

PreferenceEnvironment::LossSample PreferenceEnvironment::sample_loss(const Eigen::VectorXd& x,
                                                                     const PolicyTable& pi,
                                                                     Rng& rng) const {
    LossSample out;
    out.t0 = rollout(pi, rng);
    out.t1 = rollout(pi, rng);
    out.y = label(out.t0, out.t1);
    out.loss = pair_loss(x, out.t0, out.t1, out.y);

    const int dim = spec_.num_states * spec_.num_actions;
    const double s0 = trajectory_score(x, spec_.num_actions, out.t0);
    const double s1 = trajectory_score(x, spec_.num_actions, out.t1);
    const double p = pairwise_preference_prob(s0, s1);
    out.grad_x = (p - out.y) * (feature_counts(dim, spec_.num_actions, out.t0) -
                                feature_counts(dim, spec_.num_actions, out.t1));

    // Likelihood-ratio gradient through the rollout distribution.
    out.grad_pi = Eigen::MatrixXd::Zero(spec_.num_states, spec_.num_actions);
    for (const Trajectory* t : {&out.t0, &out.t1}) {
        for (std::size_t i = 0; i < t->actions.size(); ++i) {
            out.grad_pi(t->states[i], t->actions[i]) +=
                out.loss / pi(t->states[i], t->actions[i]);
        }
    }
    return out;
}

double PreferenceEnvironment::exact_loss(const Eigen::VectorXd& x, const PolicyTable& pi) const {
    double total = 0.0;
    for (const PathEntry& p0 : paths_) {
        const double pr0 = path_prob(p0, pi);
        for (const PathEntry& p1 : paths_) {
            const double pr = pr0 * path_prob(p1, pi);
            total += pr * pair_loss(x, p0.t, p1.t, label(p0.t, p1.t));
        }
    }
    return total;
}

Eigen::VectorXd PreferenceEnvironment::exact_grad_x(const Eigen::VectorXd& x,
                                                    const PolicyTable& pi) const {
    const int dim = spec_.num_states * spec_.num_actions;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for (const PathEntry& p0 : paths_) {
        const double pr0 = path_prob(p0, pi);
        const Eigen::VectorXd phi0 = feature_counts(dim, spec_.num_actions, p0.t);
        const double s0 = trajectory_score(x, spec_.num_actions, p0.t);
        for (const PathEntry& p1 : paths_) {
            const double pr = pr0 * path_prob(p1, pi);
            const double s1 = trajectory_score(x, spec_.num_actions, p1.t);
            const double p = pairwise_preference_prob(s0, s1);
            const int y = label(p0.t, p1.t);
            g.noalias() +=
                pr * (p - y) * (phi0 - feature_counts(dim, spec_.num_actions, p1.t));
        }
    }
    return g;
}

Eigen::MatrixXd PreferenceEnvironment::exact_grad_pi(const Eigen::VectorXd& x,
                                                     const PolicyTable& pi) const {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(spec_.num_states, spec_.num_actions);
    for (const PathEntry& p0 : paths_) {
        const double pr0 = path_prob(p0, pi);
        for (const PathEntry& p1 : paths_) {
            const double pr = pr0 * path_prob(p1, pi);
            const double loss = pair_loss(x, p0.t, p1.t, label(p0.t, p1.t));
            for (const Trajectory* t : {&p0.t, &p1.t}) {
                for (std::size_t i = 0; i < t->actions.size(); ++i) {
                    g(t->states[i], t->actions[i]) +=
                        pr * loss / pi(t->states[i], t->actions[i]);
                }
            }
        }
    }
    return g;
}

BilevelProblem make_preference_problem(const PreferenceProblemSpec& spec) {
    // The environment owns the enumeration state the problem's closures point
    // at; a process-lifetime registry keeps it alive for plain consumers.
    static std::mutex registry_mutex;
    static std::vector<std::unique_ptr<PreferenceEnvironment>> registry;
    std::lock_guard<std::mutex> lock(registry_mutex);
    registry.push_back(std::make_unique<PreferenceEnvironment>(spec));
    return registry.back()->problem();
}

}  // namespace birl
