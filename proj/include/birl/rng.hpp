#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Core>

namespace birl {

// Deterministic random source. All draws go through the helpers below instead
// of std distributions, whose output is implementation-defined; this keeps
// traces byte-identical for a given seed across compilers.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Index drawn from an unnormalized nonnegative weight vector.
    int categorical(const Eigen::VectorXd& weights) {
        const double total = weights.sum();
        if (!(total > 0.0)) {
            throw std::invalid_argument("categorical: weights must have positive sum");
        }
        double u = uniform() * total;
        const int n = static_cast<int>(weights.size());
        for (int i = 0; i < n; ++i) {
            u -= weights[i];
            if (u < 0.0) return i;
        }
        return n - 1;  // guard against accumulated rounding
    }

    // Index from a dense row of a row-stochastic matrix.
    int categorical_row(const Eigen::MatrixXd& table, int row) {
        double u = uniform();
        const int n = static_cast<int>(table.cols());
        for (int j = 0; j < n; ++j) {
            u -= table(row, j);
            if (u < 0.0) return j;
        }
        return n - 1;
    }

    bool bernoulli(double p) { return uniform() < p; }

    double rademacher() { return (engine_() & 1u) ? 1.0 : -1.0; }

    std::uint64_t raw() { return engine_(); }

  private:
    std::mt19937_64 engine_;
};

}  // namespace birl
