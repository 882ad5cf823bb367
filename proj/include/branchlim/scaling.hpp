#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "branchlim/common.hpp"
#include "branchlim/mechanisms.hpp"
#include "branchlim/pgf.hpp"

namespace branchlim {

// The (k, gamma_k) rescaling: space shrinks by 1/k, time speeds up by
// gamma_k, and gamma_k/k -> gamma0 controls the extra diffusion picked up in
// the limit. The linear rule gamma_k = c*k (gamma0 = c) is the default.
struct ScalingScheme {
    std::uint64_t k = 1;
    double gamma_k = 1.0;
    double gamma0 = 1.0;

    static ScalingScheme linear(std::uint64_t k, double c = 1.0) {
        if (k == 0 || !(c > 0.0)) throw DomainError("ScalingScheme::linear: need k >= 1, c > 0");
        return {k, c * static_cast<double>(k), c};
    }

    double kd() const { return static_cast<double>(k); }
};

// The three functionals multiply a near-cancellation by k*gamma_k, so the
// PGF argument and difference are carried in extended precision.

// gamma_k [1 - h_k(1 - lambda/k)]; defined for lambda in [0, k].
inline double rescaled_immigration(const Pgf& h_k, const ScalingScheme& s, double lambda) {
    if (!(lambda >= 0.0 && lambda <= s.kd()))
        throw DomainError("rescaled_immigration: lambda outside [0, k]");
    const long double z = 1.0L - static_cast<long double>(lambda) / s.kd();
    return static_cast<double>(static_cast<long double>(s.gamma_k) * (1.0L - h_k.eval_ld(z)));
}

// k gamma_k [(1 - lambda/k) - g_k(1 - lambda/k)]; defined for lambda in [0, k].
inline double rescaled_branching(const Pgf& g_k, const ScalingScheme& s, double lambda) {
    if (!(lambda >= 0.0 && lambda <= s.kd()))
        throw DomainError("rescaled_branching: lambda outside [0, k]");
    const long double z = 1.0L - static_cast<long double>(lambda) / s.kd();
    return static_cast<double>(static_cast<long double>(s.kd()) * s.gamma_k *
                               (z - g_k.eval_ld(z)));
}

// k gamma_k [(1 - lambda/k) - g_k(e^{-lambda/k})]; the exponential-argument
// variant entering the generator comparison. Any lambda >= 0.
inline double rescaled_branching_exp(const Pgf& g_k, const ScalingScheme& s, double lambda) {
    if (!(lambda >= 0.0)) throw DomainError("rescaled_branching_exp: lambda must be >= 0");
    const long double lam = lambda;
    const long double z = std::exp(-lam / s.kd());
    return static_cast<double>(static_cast<long double>(s.kd()) * s.gamma_k *
                               ((1.0L - lam / s.kd()) - g_k.eval_ld(z)));
}

class EmbedInfeasibleError : public std::runtime_error {
public:
    EmbedInfeasibleError(const std::string& msg, double min_k)
        : std::runtime_error(msg), min_k_estimate(min_k) {}
    double min_k_estimate = 0.0;
};

class UnsupportedMechanismError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Offspring/immigration pair whose rescaled functionals reproduce a target
// (R, F) exactly at scale k.
struct EmbeddedPair {
    Pgf g_k;
    Pgf h_k;
    ScalingScheme scheme;
};

namespace detail {

struct EmbedCoefficients {
    double constant = 0.0;
    double linear = 0.0;
    double quadratic = 0.0;
    std::vector<std::pair<double, double>> poisson; // (mean k*u, weight)
};

inline Pgf mixture_from_coefficients(const EmbedCoefficients& c) {
    std::vector<std::pair<double, Pgf>> comps;
    if (c.constant > 0.0) comps.emplace_back(c.constant, Pgf::point_mass(0));
    if (c.linear > 0.0) comps.emplace_back(c.linear, Pgf::point_mass(1));
    if (c.quadratic > 0.0) comps.emplace_back(c.quadratic, Pgf::point_mass(2));
    for (const auto& [mean, w] : c.poisson)
        if (w > 0.0) comps.emplace_back(w, Pgf::poisson(mean));
    if (comps.empty()) comps.emplace_back(1.0, Pgf::point_mass(0));
    // absorb rounding drift into the largest weight so the mixture is exactly normalized
    double sum = 0.0;
    for (const auto& comp : comps) sum += comp.first;
    std::size_t imax = 0;
    for (std::size_t i = 1; i < comps.size(); ++i)
        if (comps[i].first > comps[imax].first) imax = i;
    comps[imax].first += 1.0 - sum;
    return Pgf::mixture(std::move(comps));
}

} // namespace detail

// Constructs (g_k, h_k) with gamma_k = c*k such that the rescaled functionals
// recover R and F identically on [0, k]:
//
//   g_k(z) = z - R(k(1-z)) / (k gamma_k)
//   h_k(z) = 1 - F(k(1-z)) / gamma_k
//
// Expanding R and F turns each atom's exponential into a Poisson(k*u) PGF, so
// both are nonnegative mixtures of {1, z, z^2, Poisson} whenever the scale is
// large enough; otherwise the negative coefficient is reported together with
// a minimal-k estimate.
inline EmbeddedPair embed_mechanisms(const BranchingMechanism& R, const ImmigrationMechanism& F,
                                     std::uint64_t k, double c = 1.0) {
    if (R.compensator() != Compensator::Linear)
        throw UnsupportedMechanismError(
            "embed_mechanisms: only the linear-compensator class is embeddable");
    const ScalingScheme scheme = ScalingScheme::linear(k, c);
    const double kd = scheme.kd();

    double mu_w = 0.0, mu_wu = 0.0;
    for (const auto& a : R.mu().atoms) {
        mu_w += a.weight;
        mu_wu += a.weight * a.location;
    }
    double m_w = 0.0;
    for (const auto& a : F.m().atoms) m_w += a.weight;

    detail::EmbedCoefficients g;
    g.constant = (R.alpha() - R.beta() / kd + mu_wu / kd - mu_w / (kd * kd)) / c;
    g.linear = 1.0 + (R.beta() / kd - 2.0 * R.alpha() - mu_wu / kd) / c;
    g.quadratic = R.alpha() / c;
    for (const auto& a : R.mu().atoms)
        g.poisson.emplace_back(kd * a.location, a.weight / (c * kd * kd));

    detail::EmbedCoefficients h;
    h.constant = 1.0 - F.drift() / c - m_w / (c * kd);
    h.linear = F.drift() / c;
    for (const auto& a : F.m().atoms) h.poisson.emplace_back(kd * a.location, a.weight / (c * kd));

    const double slack = -1e-14;
    if (g.constant < slack || g.linear < slack || h.constant < slack) {
        // minimal k making every coefficient nonnegative (infinity if none exists)
        double min_k = 0.0;
        if (g.linear < 0.0) {
            const double margin = c - 2.0 * R.alpha();
            min_k = margin > 0.0 ? std::max(min_k, (mu_wu - R.beta()) / margin)
                                 : std::numeric_limits<double>::infinity();
        }
        if (g.constant < 0.0) {
            // alpha k^2 + (mu_wu - beta) k - mu_w >= 0
            const double a2 = R.alpha(), a1 = mu_wu - R.beta(), a0 = -mu_w;
            if (a2 > 0.0) {
                const double disc = a1 * a1 - 4.0 * a2 * a0;
                min_k = std::max(min_k, (-a1 + std::sqrt(std::max(disc, 0.0))) / (2.0 * a2));
            } else if (a1 > 0.0) {
                min_k = std::max(min_k, -a0 / a1);
            } else {
                min_k = std::numeric_limits<double>::infinity();
            }
        }
        if (h.constant < 0.0) {
            const double margin = c - F.drift();
            min_k = margin > 0.0 ? std::max(min_k, m_w / margin)
                                 : std::numeric_limits<double>::infinity();
        }
        std::ostringstream os;
        os << "embed_mechanisms: negative mixture coefficient at k = " << k
           << " (g: const " << g.constant << ", linear " << g.linear << "; h: const "
           << h.constant << "); minimal feasible k estimate: " << min_k;
        throw EmbedInfeasibleError(os.str(), min_k);
    }
    g.constant = std::max(g.constant, 0.0);
    g.linear = std::max(g.linear, 0.0);
    h.constant = std::max(h.constant, 0.0);

    return EmbeddedPair{detail::mixture_from_coefficients(g), detail::mixture_from_coefficients(h),
                        scheme};
}

struct CompositionValues {
    double phi1 = 0.0; // iterated-offspring factor, -> exp(-x psi_t(lambda))
    double phi2 = 0.0; // immigration product,      -> exp(-int_0^t F(psi_s) ds)
};

// Finite-k composition functionals: phi1 = g_k^{n}(e^{-lambda/b_k})^{c_k} and
// phi2 = prod_{j<n} h_k(g_k^j(e^{-lambda/b_k})) with n = [gamma_k t].
inline CompositionValues composition_functionals(const Pgf& g_k, const Pgf& h_k,
                                                 const ScalingScheme& scheme, double b_k,
                                                 double c_k, double t, double lambda,
                                                 std::uint64_t eval_cap = kDefaultIterationCap) {
    if (!(t >= 0.0 && lambda >= 0.0)) throw DomainError("composition_functionals: t, lambda >= 0");
    if (!(b_k > 0.0 && c_k > 0.0)) throw DomainError("composition_functionals: b_k, c_k > 0");
    const auto n = static_cast<std::uint64_t>(std::floor(scheme.gamma_k * t));
    if (n > eval_cap) throw IterationCapError("composition_functionals: iteration cap exceeded");
    double z = std::exp(-lambda / b_k);
    double prod_h = 1.0;
    for (std::uint64_t j = 0; j < n; ++j) {
        prod_h *= h_k.eval(z);
        z = g_k.eval(z);
    }
    return {std::pow(z, c_k), prod_h};
}

struct GeneratorComparison {
    std::vector<double> x_grid;
    std::vector<double> discrete;   // A_k e_lambda(x)
    std::vector<double> continuous; // A e_lambda(x) = -e^{-lambda x}[x R(lambda) + F(lambda)]
    double sup_diff = 0.0;
    double alpha_k = 0.0; // log(g_k(e^{-l/k})) / (g_k(e^{-l/k}) - 1), -> 1
    double beta_k = 0.0;  // same with h_k, -> 1
    double H_k = 0.0;     // gamma_k beta_k (1 - h_k(e^{-l/k})), -> F(lambda)
};

namespace detail {
// log(g)/(g-1), stable near g = 1.
inline double log_over_delta(double g) {
    const double d = g - 1.0;
    if (std::abs(d) < 1e-12) return 1.0 - 0.5 * d;
    return std::log1p(d) / d;
}
} // namespace detail

// Discrete generator action on exponentials versus the limit generator, on a
// finite grid inside the rescaled lattice.
inline GeneratorComparison generator_actions(const Pgf& g_k, const Pgf& h_k,
                                             const ScalingScheme& scheme,
                                             const BranchingMechanism& R,
                                             const ImmigrationMechanism& F, double lambda,
                                             const std::vector<double>& x_grid) {
    if (!(lambda > 0.0)) throw DomainError("generator_actions: lambda must be > 0");
    GeneratorComparison out;
    out.x_grid = x_grid;
    const double kd = scheme.kd();
    const double z = std::exp(-lambda / kd);
    const double gz = g_k.eval(z);
    const double hz = h_k.eval(z);
    out.alpha_k = detail::log_over_delta(gz);
    out.beta_k = detail::log_over_delta(hz);
    out.H_k = scheme.gamma_k * out.beta_k * (1.0 - hz);
    const double Rl = R.eval(lambda);
    const double Fl = F.eval(lambda);
    for (double x : x_grid) {
        const double kx = x * kd;
        const auto kxi = std::llround(kx);
        if (std::abs(kx - static_cast<double>(kxi)) > 1e-9)
            throw DomainError("generator_actions: x_grid point not on the 1/k lattice");
        const double discrete =
            scheme.gamma_k * (std::pow(gz, static_cast<double>(kxi)) * hz - std::exp(-lambda * x));
        const double continuous = -std::exp(-lambda * x) * (x * Rl + Fl);
        out.discrete.push_back(discrete);
        out.continuous.push_back(continuous);
        out.sup_diff = std::max(out.sup_diff, std::abs(discrete - continuous));
    }
    return out;
}

} // namespace branchlim
