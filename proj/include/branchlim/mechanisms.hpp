#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "branchlim/common.hpp"

namespace branchlim {

struct LevyAtom {
    double location = 0.0; // u > 0
    double weight = 0.0;   // mass at u, >= 0
};

// A purely atomic Levy measure. Finite atom lists keep every integral a
// finite sum; continuous measures are out of scope and must be approximated
// by atoms externally.
struct LevyAtoms {
    std::vector<LevyAtom> atoms;

    void validate(const char* what) const {
        for (const auto& a : atoms) {
            if (!(a.location > 0.0) || !std::isfinite(a.location))
                throw DomainError(std::string(what) + ": atom location must be > 0");
            if (!(a.weight >= 0.0) || !std::isfinite(a.weight))
                throw DomainError(std::string(what) + ": atom weight must be >= 0");
        }
    }

    bool empty() const { return atoms.empty(); }
};

enum class Compensator {
    Linear,    // integrand exp(-lu) - 1 + lu          (small-jump compensation in full)
    Truncated, // integrand exp(-lu) - 1 + lu/(1+u^2)  (classical truncation)
};

// Branching mechanism R(l) = beta*l - alpha*l^2 - sum_j w_j * integrand(l, u_j).
// Concave on [0, inf) with R(0) = 0.
class BranchingMechanism {
public:
    BranchingMechanism(double beta, double alpha, LevyAtoms mu = {},
                       Compensator comp = Compensator::Linear)
        : beta_(beta), alpha_(alpha), mu_(std::move(mu)), comp_(comp) {
        if (!(alpha >= 0.0) || !std::isfinite(alpha))
            throw DomainError("BranchingMechanism: alpha must be >= 0");
        if (!std::isfinite(beta)) throw DomainError("BranchingMechanism: beta must be finite");
        mu_.validate("BranchingMechanism");
    }

    double eval(double lambda) const {
        if (!(lambda >= 0.0)) throw DomainError("BranchingMechanism::eval: lambda must be >= 0");
        double value = beta_ * lambda - alpha_ * lambda * lambda;
        for (const auto& a : mu_.atoms) {
            const double x = lambda * a.location;
            // expm1 keeps the integrand accurate near lambda = 0
            double integrand = std::expm1(-x) + x;
            if (comp_ == Compensator::Truncated) {
                const double u2 = a.location * a.location;
                integrand -= x * u2 / (1.0 + u2);
            }
            value -= a.weight * integrand;
        }
        return value;
    }

    // R'(0+); finite for atomic measures under either compensator.
    double derivative_at_zero() const {
        double d = beta_;
        if (comp_ == Compensator::Truncated) {
            for (const auto& a : mu_.atoms) {
                const double u2 = a.location * a.location;
                d += a.weight * a.location * u2 / (1.0 + u2);
            }
        }
        return d;
    }

    double beta() const { return beta_; }
    double alpha() const { return alpha_; }
    const LevyAtoms& mu() const { return mu_; }
    Compensator compensator() const { return comp_; }

private:
    double beta_;
    double alpha_;
    LevyAtoms mu_;
    Compensator comp_;
};

// Immigration mechanism F(l) = b*l + sum_i w_i (1 - exp(-l u_i)).
// Nondecreasing and concave with F(0) = 0.
class ImmigrationMechanism {
public:
    explicit ImmigrationMechanism(double b = 0.0, LevyAtoms m = {})
        : b_(b), m_(std::move(m)) {
        if (!(b >= 0.0) || !std::isfinite(b))
            throw DomainError("ImmigrationMechanism: b must be >= 0");
        m_.validate("ImmigrationMechanism");
    }

    double eval(double lambda) const {
        if (!(lambda >= 0.0))
            throw DomainError("ImmigrationMechanism::eval: lambda must be >= 0");
        double value = b_ * lambda;
        for (const auto& a : m_.atoms) value -= a.weight * std::expm1(-lambda * a.location);
        return value;
    }

    double drift() const { return b_; }
    const LevyAtoms& m() const { return m_; }
    bool trivial() const { return b_ == 0.0 && m_.empty(); }

private:
    double b_;
    LevyAtoms m_;
};

enum class Conservativity { Conservative, NotConservative, Inconclusive };

struct ConservativityDecade {
    double eps_hi = 0.0;         // decade upper endpoint
    double eps_lo = 0.0;         // decade lower endpoint
    double contribution = 0.0;   // integral of 1/max(R,0) over [eps_lo, eps_hi]
    bool hit_nonpositive = false;
};

struct ConservativityReport {
    Conservativity verdict = Conservativity::Inconclusive;
    std::string reason;
    std::vector<ConservativityDecade> table;
};

namespace detail {

inline double positive_part_reciprocal_integral(const std::function<double(double)>& R,
                                                double lo, double hi, bool& hit_nonpositive) {
    // 64-point midpoint rule on a log grid; ample for the doubling heuristic.
    constexpr int kPoints = 64;
    const double llo = std::log(lo);
    const double lhi = std::log(hi);
    const double dl = (lhi - llo) / kPoints;
    double acc = 0.0;
    for (int i = 0; i < kPoints; ++i) {
        const double lam = std::exp(llo + (i + 0.5) * dl);
        const double r = R(lam);
        if (!(r > 0.0)) {
            hit_nonpositive = true;
            return std::numeric_limits<double>::infinity();
        }
        acc += lam * dl / r; // d(lambda) = lambda d(log lambda)
    }
    return acc;
}

} // namespace detail

// Decides divergence of the small-lambda integral of 1/max(R,0) numerically.
// Exposed on a plain callable so synthetic integrands can exercise all three
// verdicts; mechanism-level callers go through check_conservative().
inline ConservativityReport conservativity_from_function(
    const std::function<double(double)>& R, double lambda0 = 1.0) {
    ConservativityReport rep;
    const double decades[] = {1e-2, 1e-4, 1e-6, 1e-8, 1e-10};
    double hi = lambda0;
    for (double lo : decades) {
        ConservativityDecade row;
        row.eps_hi = hi;
        row.eps_lo = lo;
        bool hit = false;
        row.contribution = detail::positive_part_reciprocal_integral(R, lo, hi, hit);
        row.hit_nonpositive = hit;
        rep.table.push_back(row);
        if (hit) {
            rep.verdict = Conservativity::Conservative;
            rep.reason = "R <= 0 on part of (0, lambda0]; 1/max(R,0) integrates to +inf";
            return rep;
        }
        hi = lo;
    }
    // Doubling heuristic: divergent if each decade keeps contributing at
    // least 0.9x the previous decade, for four consecutive decades.
    bool divergent = true;
    bool convergent = true;
    for (std::size_t i = 1; i < rep.table.size(); ++i) {
        const double prev = rep.table[i - 1].contribution;
        const double cur = rep.table[i].contribution;
        if (!(cur >= 0.9 * prev)) divergent = false;
        if (!(cur <= 0.5 * prev)) convergent = false;
    }
    if (divergent) {
        rep.verdict = Conservativity::Conservative;
        rep.reason = "partial integrals keep growing decade over decade";
    } else if (convergent) {
        rep.verdict = Conservativity::NotConservative;
        rep.reason = "partial integrals Cauchy-converge as eps -> 0";
    } else {
        rep.verdict = Conservativity::Inconclusive;
        rep.reason = "decade contributions neither clearly grow nor clearly vanish";
    }
    return rep;
}

// Conservativity (non-explosion) of the mechanism: divergence of the
// small-lambda integral of 1/max(R,0). For the linear compensator the answer
// is analytic: R'(0+) = beta is finite, so 1/max(R,0) >= 1/(beta^+ lambda)
// near zero (or R <= 0 outright) and the integral diverges.
inline ConservativityReport check_conservative(const BranchingMechanism& mech) {
    if (mech.compensator() == Compensator::Linear) {
        ConservativityReport rep;
        rep.verdict = Conservativity::Conservative;
        std::ostringstream os;
        os << "linear-compensator class: R(lambda) <= beta*lambda with beta = " << mech.beta()
           << ", so 1/max(R,0) is non-integrable at 0+";
        rep.reason = os.str();
        return rep;
    }
    return conservativity_from_function([&mech](double lam) { return mech.eval(lam); });
}

} // namespace branchlim
