#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace branchlim {

struct MeanVar {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0; // unbiased sample variance

    double se() const { return n > 1 ? std::sqrt(variance / static_cast<double>(n)) : 0.0; }
};

inline MeanVar mean_var(std::span<const double> values) {
    MeanVar mv;
    mv.n = values.size();
    if (mv.n == 0) return mv;
    double m = 0.0, m2 = 0.0;
    std::size_t count = 0;
    for (double v : values) {
        ++count;
        const double d = v - m;
        m += d / static_cast<double>(count);
        m2 += d * (v - m);
    }
    mv.mean = m;
    mv.variance = mv.n > 1 ? m2 / static_cast<double>(mv.n - 1) : 0.0;
    return mv;
}

// Empirical Laplace transform at lambda of counts rescaled by 1/k.
inline MeanVar empirical_laplace(std::span<const std::uint64_t> states, double k, double lambda) {
    std::vector<double> vals;
    vals.reserve(states.size());
    for (std::uint64_t y : states)
        vals.push_back(std::exp(-lambda * static_cast<double>(y) / k));
    return mean_var(vals);
}

} // namespace branchlim
