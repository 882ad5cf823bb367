#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <utility>
#include <vector>

#include "branchlim/common.hpp"
#include "branchlim/rng.hpp"

namespace branchlim {

namespace detail {

// Vose alias table; built once for finite laws with wide support so single
// draws stay O(1).
struct AliasTable {
    std::vector<double> prob;
    std::vector<std::uint32_t> alias;

    void build(const std::vector<double>& w) {
        const std::size_t n = w.size();
        prob.assign(n, 0.0);
        alias.assign(n, 0);
        std::vector<double> scaled(n);
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) scaled[i] = w[i] * static_cast<double>(n) / total;
        std::vector<std::uint32_t> small, large;
        for (std::size_t i = 0; i < n; ++i) {
            (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
        }
        while (!small.empty() && !large.empty()) {
            const std::uint32_t s = small.back();
            small.pop_back();
            const std::uint32_t l = large.back();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if (scaled[l] < 1.0) {
                large.pop_back();
                small.push_back(l);
            }
        }
        for (std::uint32_t i : large) prob[i] = 1.0;
        for (std::uint32_t i : small) prob[i] = 1.0;
    }

    std::uint64_t sample(Rng& rng) const {
        const std::size_t n = prob.size();
        const double r = rng.uniform() * static_cast<double>(n);
        auto idx = static_cast<std::size_t>(r);
        if (idx >= n) idx = n - 1;
        const double frac = r - static_cast<double>(idx);
        return frac < prob[idx] ? idx : alias[idx];
    }
};

} // namespace detail

// A probability generating function g(z) = E[z^Y] of an N-valued random
// variable. Immutable after construction; safe to share across threads.
//
// Variants:
//   FiniteSupport  explicit weights, index = outcome
//   Geometric      g(z) = q/(1-pz), q = 1-p   (failures before a success)
//   Poisson        g(z) = exp(m(z-1))
//   PointMass      g(z) = z^n
//   Mixture        convex combination of component PGFs
class Pgf {
public:
    enum class Kind { FiniteSupport, Geometric, Poisson, PointMass, Mixture };

    static Pgf finite_support(std::vector<double> weights) {
        if (weights.empty()) throw DomainError("finite_support: empty weight list");
        double sum = 0.0;
        for (double w : weights) {
            if (w < -tolerances().weight_negativity || !std::isfinite(w))
                throw DomainError("finite_support: negative or non-finite weight");
            sum += w;
        }
        if (std::abs(sum - 1.0) > tolerances().pgf_normalization)
            throw DomainError("finite_support: weights do not sum to 1");
        for (double& w : weights) w = std::max(w, 0.0) / sum;
        Pgf g(Kind::FiniteSupport);
        g.weights_ = std::move(weights);
        if (g.weights_.size() > 16) {
            auto table = std::make_shared<detail::AliasTable>();
            table->build(g.weights_);
            g.alias_ = std::move(table);
        }
        return g;
    }

    static Pgf geometric(double p) {
        if (!(p > 0.0 && p < 1.0)) throw DomainError("geometric: p must be inside (0,1)");
        Pgf g(Kind::Geometric);
        g.a_ = p;
        return g;
    }

    static Pgf poisson(double mean) {
        if (!(mean >= 0.0) || !std::isfinite(mean)) throw DomainError("poisson: mean must be >= 0");
        Pgf g(Kind::Poisson);
        g.a_ = mean;
        return g;
    }

    static Pgf point_mass(std::uint64_t n) {
        Pgf g(Kind::PointMass);
        g.n_ = n;
        return g;
    }

    static Pgf mixture(std::vector<std::pair<double, Pgf>> components) {
        if (components.empty()) throw DomainError("mixture: no components");
        double sum = 0.0;
        for (const auto& [w, c] : components) {
            if (w < -tolerances().weight_negativity || !std::isfinite(w))
                throw DomainError("mixture: negative or non-finite weight");
            sum += w;
        }
        if (std::abs(sum - 1.0) > tolerances().pgf_normalization)
            throw DomainError("mixture: weights do not sum to 1");
        Pgf g(Kind::Mixture);
        for (auto& [w, c] : components) {
            g.weights_.push_back(std::max(w, 0.0) / sum);
            g.components_.push_back(std::move(c));
        }
        return g;
    }

    Kind kind() const { return kind_; }

    // g(z) for z in [0,1].
    double eval(double z) const {
        if (!(z >= 0.0 && z <= 1.0)) throw DomainError("Pgf::eval: z outside [0,1]");
        return static_cast<double>(eval_impl<double>(z));
    }

    // Extended-precision evaluation. The rescaled functionals multiply
    // (z - g(z)) by k*gamma_k, which amplifies evaluation roundoff by up to
    // 1e6 at desk scales; 80-bit arithmetic keeps the identity checks clean.
    long double eval_ld(long double z) const {
        if (!(z >= 0.0L && z <= 1.0L)) throw DomainError("Pgf::eval_ld: z outside [0,1]");
        return eval_impl<long double>(z);
    }

    // g'(1-): the mean of the law.
    double mean() const {
        switch (kind_) {
            case Kind::FiniteSupport: {
                double acc = 0.0;
                for (std::size_t j = 1; j < weights_.size(); ++j)
                    acc += static_cast<double>(j) * weights_[j];
                return acc;
            }
            case Kind::Geometric:
                return a_ / (1.0 - a_);
            case Kind::Poisson:
                return a_;
            case Kind::PointMass:
                return static_cast<double>(n_);
            case Kind::Mixture: {
                double acc = 0.0;
                for (std::size_t i = 0; i < weights_.size(); ++i)
                    acc += weights_[i] * components_[i].mean();
                return acc;
            }
        }
        return 0.0;
    }

    // g''(1-) = E[Y(Y-1)].
    double second_factorial_moment() const {
        switch (kind_) {
            case Kind::FiniteSupport: {
                double acc = 0.0;
                for (std::size_t j = 2; j < weights_.size(); ++j)
                    acc += static_cast<double>(j) * static_cast<double>(j - 1) * weights_[j];
                return acc;
            }
            case Kind::Geometric: {
                const double r = a_ / (1.0 - a_);
                return 2.0 * r * r;
            }
            case Kind::Poisson:
                return a_ * a_;
            case Kind::PointMass:
                return static_cast<double>(n_) * static_cast<double>(n_ > 0 ? n_ - 1 : 0);
            case Kind::Mixture: {
                double acc = 0.0;
                for (std::size_t i = 0; i < weights_.size(); ++i)
                    acc += weights_[i] * components_[i].second_factorial_moment();
                return acc;
            }
        }
        return 0.0;
    }

    double variance() const {
        const double m = mean();
        return second_factorial_moment() + m - m * m;
    }

    // One draw from the law.
    std::uint64_t sample(Rng& rng) const {
        switch (kind_) {
            case Kind::FiniteSupport: {
                if (alias_) return alias_->sample(rng);
                const double u = rng.uniform();
                double acc = 0.0;
                for (std::size_t j = 0; j < weights_.size(); ++j) {
                    acc += weights_[j];
                    if (u < acc) return j;
                }
                return weights_.size() - 1;
            }
            case Kind::Geometric:
                return rng.geometric_failures(a_);
            case Kind::Poisson:
                return rng.poisson(a_);
            case Kind::PointMass:
                return n_;
            case Kind::Mixture:
                return components_[pick_component(rng)].sample(rng);
        }
        return 0;
    }

    // Sum of `count` independent draws. Uses closed-form convolutions
    // (negative binomial, Poisson) and multinomial splitting so the cost is
    // O(support size), not O(count); required for chains with populations in
    // the tens of thousands.
    std::uint64_t sample_sum(std::uint64_t count, Rng& rng) const {
        if (count == 0) return 0;
        if (count == 1) return sample(rng);
        switch (kind_) {
            case Kind::FiniteSupport: {
                std::uint64_t total = 0;
                std::uint64_t remaining = count;
                double mass = 1.0;
                for (std::size_t j = 0; j < weights_.size() && remaining > 0; ++j) {
                    const double w = weights_[j];
                    if (w <= 0.0) continue;
                    std::uint64_t nj;
                    if (w >= mass) {
                        nj = remaining;
                    } else {
                        nj = rng.binomial(remaining, w / mass);
                    }
                    total += nj * j;
                    remaining -= nj;
                    mass -= w;
                }
                return total;
            }
            case Kind::Geometric:
                return rng.negative_binomial(count, a_);
            case Kind::Poisson:
                return rng.poisson(a_ * static_cast<double>(count));
            case Kind::PointMass:
                return n_ * count;
            case Kind::Mixture: {
                std::uint64_t total = 0;
                std::uint64_t remaining = count;
                double mass = 1.0;
                for (std::size_t i = 0; i < weights_.size() && remaining > 0; ++i) {
                    const double w = weights_[i];
                    if (w <= 0.0) continue;
                    std::uint64_t ni;
                    if (w >= mass) {
                        ni = remaining;
                    } else {
                        ni = rng.binomial(remaining, w / mass);
                    }
                    total += components_[i].sample_sum(ni, rng);
                    remaining -= ni;
                    mass -= w;
                }
                return total;
            }
        }
        return 0;
    }

    // Accessors for the parametric variants.
    double geometric_p() const { return a_; }
    double poisson_mean() const { return a_; }
    std::uint64_t point() const { return n_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<Pgf>& components() const { return components_; }

private:
    explicit Pgf(Kind k) : kind_(k) {}

    template <class Real>
    Real eval_impl(Real z) const {
        switch (kind_) {
            case Kind::FiniteSupport: {
                Real acc = 0;
                for (std::size_t j = weights_.size(); j-- > 0;)
                    acc = acc * z + static_cast<Real>(weights_[j]);
                return acc;
            }
            case Kind::Geometric: {
                const Real p = static_cast<Real>(a_);
                return (Real(1) - p) / (Real(1) - p * z);
            }
            case Kind::Poisson:
                return std::exp(static_cast<Real>(a_) * (z - Real(1)));
            case Kind::PointMass:
                return n_ == 0 ? Real(1) : std::pow(z, static_cast<Real>(n_));
            case Kind::Mixture: {
                Real acc = 0;
                for (std::size_t i = 0; i < weights_.size(); ++i)
                    acc += static_cast<Real>(weights_[i]) * components_[i].eval_impl<Real>(z);
                return acc;
            }
        }
        return 0; // unreachable
    }

    std::size_t pick_component(Rng& rng) const {
        const double u = rng.uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            acc += weights_[i];
            if (u < acc) return i;
        }
        return weights_.size() - 1;
    }

    Kind kind_;
    double a_ = 0.0;        // Geometric p / Poisson mean
    std::uint64_t n_ = 0;   // PointMass outcome
    std::vector<double> weights_;
    std::vector<Pgf> components_;
    std::shared_ptr<const detail::AliasTable> alias_;
};

// j-fold functional iteration g(g(...g(z)...)). j = 0 returns z.
inline double compose_iterate(const Pgf& g, std::uint64_t j, double z,
                              std::uint64_t eval_cap = kDefaultIterationCap) {
    if (!(z >= 0.0 && z <= 1.0)) throw DomainError("compose_iterate: z outside [0,1]");
    if (j > eval_cap) throw IterationCapError("compose_iterate: iteration cap exceeded");
    double value = z;
    for (std::uint64_t i = 0; i < j; ++i) value = g.eval(value);
    return value;
}

} // namespace branchlim
