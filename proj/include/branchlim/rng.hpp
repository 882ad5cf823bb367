#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include "branchlim/common.hpp"

namespace branchlim {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += kGolden;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t v) {
    std::uint64_t s = v;
    return splitmix64(s);
}

} // namespace detail

// Identifies one reproducible random stream: a campaign-wide master seed plus
// a substream index. Substreams with distinct indices are decorrelated by the
// seeding hash, so path-parallel simulation assigns one stream per path and
// results do not depend on the worker count.
struct RngSeed {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

// xoshiro256** with splitmix64 seeding. All samplers are hand-rolled (not
// std::<distribution>) so that a given (seed, stream) yields bit-identical
// output on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::uint64_t x = seed ^ detail::mix64(stream + 1);
        for (auto& word : state_) word = detail::splitmix64(x);
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = detail::kGolden;
    }
    explicit Rng(RngSeed s) : Rng(s.seed, s.stream) {}

    std::uint64_t next_u64() {
        const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = std::rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal, Marsaglia polar method with one cached deviate.
    double normal() {
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        cache_ = v * f;
        has_cache_ = true;
        return u * f;
    }

    double exponential(double mean) { return -mean * std::log(uniform_pos()); }

    // Number of failures before the first success; P(X = n) = (1-p) p^n.
    // Closed-form inversion, exact and O(1).
    std::uint64_t geometric_failures(double p) {
        if (p <= 0.0) return 0;
        const double u = uniform_pos();
        if (u > p) return 0; // covers p small and avoids log(1)=0 edge
        const double g = std::floor(std::log(u) / std::log(p));
        return g < 0.0 ? 0 : static_cast<std::uint64_t>(g);
    }

    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 10.0) return poisson_knuth(mean);
        return poisson_ptrs(mean);
    }

    std::uint64_t binomial(std::uint64_t n, double p) {
        if (n == 0 || p <= 0.0) return 0;
        if (p >= 1.0) return n;
        if (p == 0.5 && n <= 4096) return binomial_half_popcount(n);
        const bool flip = p > 0.5;
        const double ph = flip ? 1.0 - p : p;
        std::uint64_t k;
        const double nph = static_cast<double>(n) * ph;
        if (n <= 30) {
            k = 0;
            for (std::uint64_t i = 0; i < n; ++i) k += bernoulli(ph) ? 1u : 0u;
        } else if (nph <= 12.0) {
            k = binomial_inversion(n, ph);
        } else {
            k = binomial_btrs(n, ph);
        }
        return flip ? n - k : k;
    }

    // Gamma(shape, scale) via Marsaglia-Tsang, boosted for shape < 1.
    double gamma(double shape, double scale = 1.0) {
        if (shape <= 0.0) return 0.0;
        double boost = 1.0;
        if (shape < 1.0) {
            boost = std::pow(uniform_pos(), 1.0 / shape);
            shape += 1.0;
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x) return boost * d * v * scale;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return boost * d * v * scale;
        }
    }

    // Sum of r i.i.d. geometric-failures(p) draws, via the Gamma-Poisson
    // mixture: NB(r, p) = Poisson(Gamma(r, p/(1-p))). O(1) in r.
    std::uint64_t negative_binomial(std::uint64_t r, double p) {
        if (r == 0 || p <= 0.0) return 0;
        const double lam = gamma(static_cast<double>(r), p / (1.0 - p));
        return poisson(lam);
    }

private:
    std::uint64_t poisson_knuth(double mean) {
        const double limit = std::exp(-mean);
        double prod = uniform();
        std::uint64_t n = 0;
        while (prod > limit) {
            prod *= uniform();
            ++n;
        }
        return n;
    }

    // Hormann's PTRS transformed-rejection sampler, valid for mean >= 10.
    std::uint64_t poisson_ptrs(double mean) {
        const double slam = std::sqrt(mean);
        const double loglam = std::log(mean);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::abs(u);
            const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(kf);
            if (kf < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
                kf * loglam - mean - std::lgamma(kf + 1.0)) {
                return static_cast<std::uint64_t>(kf);
            }
        }
    }

    std::uint64_t binomial_half_popcount(std::uint64_t n) {
        std::uint64_t k = 0;
        while (n >= 64) {
            k += static_cast<std::uint64_t>(std::popcount(next_u64()));
            n -= 64;
        }
        if (n > 0) {
            const std::uint64_t mask = (n == 64) ? ~0ULL : ((1ULL << n) - 1ULL);
            k += static_cast<std::uint64_t>(std::popcount(next_u64() & mask));
        }
        return k;
    }

    // Waiting-time inversion; expected cost O(n*p), used only for small n*p.
    std::uint64_t binomial_inversion(std::uint64_t n, double p) {
        const double logq = std::log1p(-p);
        std::uint64_t k = 0;
        double pos = 0.0;
        for (;;) {
            pos += std::floor(std::log(uniform_pos()) / logq) + 1.0;
            if (pos > static_cast<double>(n)) return k;
            ++k;
        }
    }

    // Hormann's BTRS transformed rejection, valid for n*p >= 10 (p <= 1/2).
    std::uint64_t binomial_btrs(std::uint64_t n, double p) {
        const double nd = static_cast<double>(n);
        const double q = 1.0 - p;
        const double spq = std::sqrt(nd * p * q);
        const double b = 1.15 + 2.53 * spq;
        const double a = -0.0873 + 0.0248 * b + 0.01 * p;
        const double c = nd * p + 0.5;
        const double vr = 0.92 - 4.2 / b;
        const double alpha = (2.83 + 5.1 / b) * spq;
        const double lpq = std::log(p / q);
        const double m = std::floor((nd + 1.0) * p);
        const double h = std::lgamma(m + 1.0) + std::lgamma(nd - m + 1.0);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::abs(u);
            const double kf = std::floor((2.0 * a / us + b) * u + c);
            if (kf < 0.0 || kf > nd) continue;
            if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(kf);
            if (std::log(v * alpha / (a / (us * us) + b)) <=
                h - std::lgamma(kf + 1.0) - std::lgamma(nd - kf + 1.0) + (kf - m) * lpq) {
                return static_cast<std::uint64_t>(kf);
            }
        }
    }

    std::array<std::uint64_t, 4> state_{};
    double cache_ = 0.0;
    bool has_cache_ = false;
};

// Packs a campaign component, a k-index and a path index into one substream
// id. Keeps streams disjoint across the pieces of a campaign.
inline std::uint64_t substream_index(std::uint64_t component, std::uint64_t k_index,
                                     std::uint64_t path) {
    return (component << 52) ^ (k_index << 36) ^ path;
}

} // namespace branchlim
