#include "birl/schedules.hpp"

#include <cmath>

namespace birl {

ScheduleSet::Values ScheduleSet::at(long long k) const {
    if (k < 0) throw std::invalid_argument("ScheduleSet::at: negative iteration");
    const double t = static_cast<double>(k + 1);
    return Values{
        zeta0 / std::pow(t, c_zeta),
        alpha0 / std::pow(t, c_alpha),
        beta0 / std::pow(t, c_beta),
        w0 / std::pow(t, c_w),
        tau0 / std::pow(t, c_tau),
    };
}

ScheduleSet ScheduleSet::decaying_tau_preset() {
    ScheduleSet s;
    s.c_zeta = 9.0 / 10.0;
    s.c_alpha = 0.5;
    s.c_beta = 0.5;
    s.c_w = 3.0 / 20.0;
    s.c_tau = 1.0 / 20.0;
    return s;
}

ScheduleSet ScheduleSet::fixed_tau_preset(double tau) {
    ScheduleSet s;
    s.c_zeta = 2.0 / 3.0;
    s.c_alpha = 0.5;
    s.c_beta = 0.5;
    s.c_w = 1.0 / 6.0;
    s.c_tau = 0.0;
    s.tau0 = tau;
    return s;
}

void ScheduleSet::enforce_base_ordering() const {
    const bool ok =
        zeta0 <= alpha0 && alpha0 <= beta0 && beta0 <= w0 && w0 <= tau0 && tau0 <= 1.0;
    if (!ok) {
        throw std::invalid_argument(
            "ScheduleSet: strict mode requires zeta0 <= alpha0 <= beta0 <= w0 <= tau0 <= 1");
    }
}

}  // namespace birl
