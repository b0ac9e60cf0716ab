#include "birl/softmax.hpp"

#include <cmath>
#include <stdexcept>

namespace birl {

PolicyTable softmax(const Eigen::MatrixXd& theta) {
    if (!theta.allFinite()) throw std::invalid_argument("softmax: non-finite logits");
    PolicyTable pi(theta.rows(), theta.cols());
    for (int s = 0; s < theta.rows(); ++s) {
        const double m = theta.row(s).maxCoeff();
        Eigen::RowVectorXd e = (theta.row(s).array() - m).exp();
        pi.row(s) = e / e.sum();
    }
    return pi;
}

double entropy(const PolicyTable& pi, int s) {
    double h = 0.0;
    for (int a = 0; a < pi.cols(); ++a) {
        const double p = pi(s, a);
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

double weighted_entropy(const TabularMdp& mdp, const PolicyTable& pi) {
    const Eigen::VectorXd d = discounted_visitation(mdp, pi);
    double h = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) h += d[s] * entropy(pi, s);
    return h;
}

Eigen::MatrixXd log_policy_grad(const Eigen::MatrixXd& theta, int s, int a) {
    if (s < 0 || s >= theta.rows() || a < 0 || a >= theta.cols()) {
        throw std::out_of_range("log_policy_grad: state or action index out of range");
    }
    const PolicyTable pi = softmax(theta);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
    g.row(s) = -pi.row(s);
    g(s, a) += 1.0;
    return g;
}

void recenter_logits(Eigen::MatrixXd& theta) {
    for (int s = 0; s < theta.rows(); ++s) {
        theta.row(s).array() -= theta.row(s).mean();
    }
}

}  // namespace birl
