#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "branchlim/common.hpp"
#include "branchlim/pgf.hpp"
#include "branchlim/rng.hpp"

namespace branchlim {

// Discrete-state branching chain with immigration: given the current count
// y, the next state is the sum of y i.i.d. offspring draws plus one
// immigration draw. Taking immigration = point_mass(0) gives the pure
// branching chain.
struct DbiProcess {
    Pgf offspring;
    Pgf immigration;

    // E[z^{y(n+1)} | y(n) = i] = g(z)^i h(z).
    double transition_pgf(std::uint64_t i, double z) const {
        if (!(z >= 0.0 && z <= 1.0)) throw DomainError("transition_pgf: z outside [0,1]");
        const double g = offspring.eval(z);
        const double base = i == 0 ? 1.0 : std::pow(g, static_cast<double>(i));
        return base * immigration.eval(z);
    }

    // One transition. Offspring first, then the immigrant; the order is fixed
    // for reproducibility.
    std::uint64_t step(std::uint64_t y, Rng& rng) const {
        const std::uint64_t children = offspring.sample_sum(y, rng);
        return children + immigration.sample(rng);
    }

    // E y(n) given y(0) = y0, by the first-moment recursion
    // E y(n+1) = m * E y(n) + h'(1) with m = g'(1).
    double mean_after(double y0, std::uint64_t n) const {
        const double m = offspring.mean();
        const double imm = immigration.mean();
        const double nd = static_cast<double>(n);
        if (m == 1.0) return y0 + nd * imm;
        const double mn = std::pow(m, nd);
        return y0 * mn + imm * (mn - 1.0) / (m - 1.0);
    }
};

// A realized trajectory, optionally viewed on the rescaled lattice
// {0, 1/k, 2/k, ...}. `capped` records that the population guard tripped and
// the path was censored at that point.
struct DbiPath {
    std::vector<std::uint64_t> states;
    std::uint64_t scale_k = 1;
    RngSeed seed;
    bool capped = false;

    std::size_t length() const { return states.size(); }
    double rescaled(std::size_t i) const {
        return static_cast<double>(states[i]) / static_cast<double>(scale_k);
    }
};

inline DbiPath simulate_path(const DbiProcess& proc, std::uint64_t y0, std::uint64_t n_steps,
                             RngSeed seed, std::uint64_t population_cap = kDefaultPopulationCap,
                             std::uint64_t scale_k = 1) {
    DbiPath path;
    path.scale_k = scale_k;
    path.seed = seed;
    path.states.reserve(n_steps + 1);
    path.states.push_back(y0);
    Rng rng(seed);
    std::uint64_t y = y0;
    for (std::uint64_t i = 0; i < n_steps; ++i) {
        y = proc.step(y, rng);
        if (y > population_cap) {
            path.capped = true;
            break;
        }
        path.states.push_back(y);
    }
    return path;
}

} // namespace branchlim
