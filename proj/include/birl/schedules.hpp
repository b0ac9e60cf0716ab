#pragma once

#include <array>
#include <stdexcept>

namespace birl {

/// The five coupled power-law sequences: control step, policy step, critic
/// step, penalty weight, regularization weight. Value at iteration k is
/// base / (k+1)^exponent.
struct ScheduleSet {
    double zeta0 = 0.01;
    double alpha0 = 0.1;
    double beta0 = 0.5;
    double w0 = 0.5;
    double tau0 = 1.0;
    double c_zeta = 9.0 / 10.0;
    double c_alpha = 0.5;
    double c_beta = 0.5;
    double c_w = 3.0 / 20.0;
    double c_tau = 1.0 / 20.0;

    struct Values {
        double zeta, alpha, beta, w, tau;
    };

    Values at(long long k) const;

    // Exponents for the decaying-regularization regime.
    static ScheduleSet decaying_tau_preset();
    // Exponents for the constant-regularization regime (c_tau = 0).
    static ScheduleSet fixed_tau_preset(double tau);

    // Enforces zeta0 <= alpha0 <= beta0 <= w0 <= tau0 <= 1.
    void enforce_base_ordering() const;
};

}  // namespace birl
