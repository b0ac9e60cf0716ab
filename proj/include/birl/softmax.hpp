#pragma once

#include <Eigen/Core>

#include "birl/mdp.hpp"

namespace birl {

// Row-wise softmax with per-row max subtraction. Rejects non-finite logits.
PolicyTable softmax(const Eigen::MatrixXd& theta);

// Entropy of one policy row, with 0 log 0 = 0.
double entropy(const PolicyTable& pi, int s);

// E_{s ~ d_rho^pi}[entropy(pi, s)].
double weighted_entropy(const TabularMdp& mdp, const PolicyTable& pi);

// Gradient of log pi_theta(a|s) with respect to every logit. Nonzero only in
// row s: d log pi(a|s) / d theta(s,a') = 1[a'=a] - pi(a'|s).
Eigen::MatrixXd log_policy_grad(const Eigen::MatrixXd& theta, int s, int a);

// Subtracts the row mean from each row of theta. Leaves the policy unchanged
// (softmax shift invariance) while keeping logits bounded on long runs.
void recenter_logits(Eigen::MatrixXd& theta);

}  // namespace birl
