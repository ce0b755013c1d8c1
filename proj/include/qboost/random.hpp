#pragma once

#include <cstdint>
#include <random>

namespace qboost {

// Inverse of the standard normal CDF, computed with the Wichura-style
// rational approximation (absolute error below 1e-9 over (0, 1)).
double norm_quantile(double p);

// Deterministic random source. All sampling is backed by std::mt19937_64,
// whose output stream is fixed by the C++ standard, and the distributions
// are hand-rolled so that identical seeds produce identical streams on
// every platform. std:: distribution objects are deliberately avoided;
// their output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform draw in [0, 1) built from the top 53 bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via inverse-CDF of a uniform draw. uniform() can
    // return exactly 0, which is nudged to the smallest representable
    // quantile argument.
    double normal() {
        double p = uniform();
        if (p <= 0.0) p = 0x1.0p-53;
        return norm_quantile(p);
    }

    // Unbiased integer in [0, n) by rejection.
    std::size_t below(std::size_t n);

private:
    std::mt19937_64 gen_;
};

}  // namespace qboost
