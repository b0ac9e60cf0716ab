#pragma once

#include <vector>

#include <Eigen/Core>

#include "birl/problem.hpp"
#include "birl/rng.hpp"

namespace birl {

/// Pairwise-preference reward learning on a small chain MDP. The control
/// vector is a full reward table indexed by (s,a); trajectory scores are
/// summed rewards; a hidden scoring table labels which of two rollouts is
/// preferred, and the upper objective is the negative log-likelihood of those
/// labels under the logistic pairwise model.
struct PreferenceProblemSpec {
    int num_states = 3;
    int num_actions = 2;
    int trajectory_len = 2;
    int pairs_per_eval = 1;        // pair draws averaged per stochastic gradient
    double gamma = 0.9;
    double slip = 0.15;            // transition noise of the generated chain
    std::uint64_t dynamics_seed = 7;  // fixes the chain and the hidden scorer
};

struct Trajectory {
    std::vector<int> states;
    std::vector<int> actions;
};

// Logistic preference probability from two trajectory scores.
double pairwise_preference_prob(double score0, double score1);

// Score of a trajectory under a reward table laid out row-major by (s,a).
double trajectory_score(const Eigen::VectorXd& reward_table, int num_actions,
                        const Trajectory& t);

/// The environment with its hidden scorer and rollout machinery, plus exact
/// enumeration of the preference loss and gradients for oracle use.
class PreferenceEnvironment {
  public:
    explicit PreferenceEnvironment(const PreferenceProblemSpec& spec);

    const BilevelProblem& problem() const { return problem_; }
    const PreferenceProblemSpec& spec() const { return spec_; }
    const Eigen::VectorXd& hidden_scores() const { return true_reward_; }

    Trajectory rollout(const PolicyTable& pi, Rng& rng) const;

    // y = 1 when the first trajectory outscores the second under the hidden
    // table.
    int label(const Trajectory& t0, const Trajectory& t1) const;

    double pair_loss(const Eigen::VectorXd& x, const Trajectory& t0, const Trajectory& t1,
                     int y) const;

    // One stochastic draw of the loss and both gradients at a sampled pair.
    struct LossSample {
        double loss;
        Eigen::VectorXd grad_x;
        Eigen::MatrixXd grad_pi;
        Trajectory t0, t1;
        int y;
    };
    LossSample sample_loss(const Eigen::VectorXd& x, const PolicyTable& pi, Rng& rng) const;

    // Exact expectation of the loss over all trajectory pairs.
    double exact_loss(const Eigen::VectorXd& x, const PolicyTable& pi) const;
    Eigen::VectorXd exact_grad_x(const Eigen::VectorXd& x, const PolicyTable& pi) const;
    Eigen::MatrixXd exact_grad_pi(const Eigen::VectorXd& x, const PolicyTable& pi) const;

  private:
    struct PathEntry {
        Trajectory t;
        double log_prob_dynamics;  // transition/initial terms, policy excluded
    };
    void enumerate_paths();
    double path_prob(const PathEntry& p, const PolicyTable& pi) const;

    PreferenceProblemSpec spec_;
    BilevelProblem problem_;
    Eigen::VectorXd true_reward_;
    std::vector<PathEntry> paths_;
};

BilevelProblem make_preference_problem(const PreferenceProblemSpec& spec);

}  // namespace birl
