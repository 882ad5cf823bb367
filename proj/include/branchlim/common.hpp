#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace branchlim {

inline constexpr const char* kVersion = "branchlim 0.1.0";
inline constexpr int kConfigSchemaVersion = 1;

// Central tolerance record. Every numeric guard in the library reads from
// here so that thresholds live in one place.
struct Tolerances {
    double pgf_normalization = 1e-12;  // |g(1) - 1| bound for a valid PGF
    double weight_negativity = 1e-15;  // negative weights below this are rejected
    double iteration_semigroup = 1e-10;
    double convexity_slack = 1e-9;
    double ode_default = 1e-10;
    double clamp_zero = 1e-12;
};

inline const Tolerances& tolerances() {
    static const Tolerances t{};
    return t;
}

// Guards against runaway functional iteration (total PGF evaluations).
inline constexpr std::uint64_t kDefaultIterationCap = 10'000'000;
// Population cap for branching path simulation; hitting it censors the path.
inline constexpr std::uint64_t kDefaultPopulationCap = 1'000'000'000;

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class IterationCapError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace branchlim
