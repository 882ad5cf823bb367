#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "branchlim/common.hpp"
#include "branchlim/mechanisms.hpp"
#include "branchlim/ode.hpp"

namespace branchlim {

// The flow psi_t(lambda) solving d(psi)/dt = R(psi), psi_0 = lambda, together
// with the accumulated immigration integral int_0^t F(psi_s) ds when an
// immigration mechanism is attached. Dense output makes both evaluable at
// arbitrary t in [0, t_max].
class PsiSolution {
public:
    PsiSolution(double lambda0, double t_max, double tol, std::vector<detail::DenseStep> steps,
                std::vector<double> immigration_cumulative, bool has_immigration)
        : lambda0_(lambda0),
          t_max_(t_max),
          tol_(tol),
          steps_(std::move(steps)),
          imm_cum_(std::move(immigration_cumulative)),
          has_immigration_(has_immigration) {}

    double lambda0() const { return lambda0_; }
    double t_max() const { return t_max_; }
    double tol() const { return tol_; }
    bool has_immigration() const { return has_immigration_; }

    double psi(double t) const {
        check_time(t);
        if (t == 0.0 || steps_.empty()) return lambda0_;
        const auto& step = locate(t);
        const double v = step.eval(std::min(t, step.t0 + step.h));
        // psi stays nonnegative; roundoff may push it a hair below zero
        return v < 0.0 && v > -tol_ ? 0.0 : v;
    }

    // int_0^t F(psi_s) ds; zero when no immigration mechanism is attached.
    double immigration_integral(double t, const ImmigrationMechanism& F) const {
        check_time(t);
        if (!has_immigration_) return 0.0;
        if (t == 0.0 || steps_.empty()) return 0.0;
        const std::size_t idx = locate_index(t);
        const auto& step = steps_[idx];
        double acc = imm_cum_[idx];
        if (t > step.t0) {
            acc += detail::adaptive_simpson(
                [&](double s) { return F.eval(std::max(step.eval(s), 0.0)); }, step.t0,
                std::min(t, step.t0 + step.h), per_step_quad_tol(step.h));
        }
        return acc;
    }

    // (t, psi) at the accepted step endpoints; the recorded solution grid.
    std::vector<std::pair<double, double>> grid() const {
        std::vector<std::pair<double, double>> g;
        g.reserve(steps_.size() + 1);
        g.emplace_back(0.0, lambda0_);
        for (const auto& s : steps_) g.emplace_back(s.t0 + s.h, s.eval(s.t0 + s.h));
        return g;
    }

    double per_step_quad_tol(double h) const { return tol_ * std::max(h, 1e-6) * 0.1; }

private:
    void check_time(double t) const {
        if (!(t >= 0.0) || t > t_max_ * (1.0 + 1e-12) + 1e-300)
            throw DomainError("PsiSolution: t outside [0, t_max]");
    }

    std::size_t locate_index(double t) const {
        // binary search for the step containing t
        std::size_t lo = 0, hi = steps_.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi + 1) / 2;
            if (steps_[mid].t0 <= t) lo = mid;
            else hi = mid - 1;
        }
        return lo;
    }

    const detail::DenseStep& locate(double t) const { return steps_[locate_index(t)]; }

    double lambda0_;
    double t_max_;
    double tol_;
    std::vector<detail::DenseStep> steps_;
    std::vector<double> imm_cum_; // immigration integral at each step start
    bool has_immigration_;
};

// Integrates the psi flow for a conservative branching mechanism. When F is
// supplied, the immigration integral is accumulated over the dense output
// with per-step adaptive Simpson, keeping one error budget for both numbers.
inline PsiSolution solve_psi(const BranchingMechanism& R, double lambda, double t_max, double tol,
                             const ImmigrationMechanism* F = nullptr) {
    if (!(lambda >= 0.0)) throw DomainError("solve_psi: lambda must be >= 0");
    if (!(t_max >= 0.0)) throw DomainError("solve_psi: t_max must be >= 0");
    if (!(tol > 0.0)) throw DomainError("solve_psi: tol must be > 0");

    std::vector<detail::DenseStep> steps;
    if (t_max > 0.0 && lambda > 0.0) {
        steps = detail::Dopri5Scalar::integrate(
            [&R](double y) { return y <= 0.0 ? 0.0 : R.eval(y); }, lambda, t_max, tol);
    } else if (t_max > 0.0) {
        // lambda = 0 is a fixed point of the flow since R(0) = 0
        detail::DenseStep flat;
        flat.t0 = 0.0;
        flat.h = t_max;
        steps.push_back(flat);
    }

    std::vector<double> imm_cum;
    if (F != nullptr) {
        imm_cum.reserve(steps.size());
        double acc = 0.0;
        for (const auto& s : steps) {
            imm_cum.push_back(acc);
            acc += detail::adaptive_simpson(
                [&](double t) { return F->eval(std::max(s.eval(t), 0.0)); }, s.t0, s.t0 + s.h,
                tol * std::max(s.h, 1e-6) * 0.1);
        }
    } else {
        imm_cum.assign(steps.size(), 0.0);
    }
    return PsiSolution(lambda, t_max, tol, std::move(steps), std::move(imm_cum), F != nullptr);
}

// Closed-form psi for the quadratic mechanism R(l) = beta*l - alpha*l^2:
//   beta != 0:  psi_t(l) = beta l e^{beta t} / (beta + alpha l (e^{beta t}-1))
//   beta  = 0:  psi_t(l) = l / (1 + alpha l t)
// Direct substitution into the flow equation verifies both branches; this is
// the independent oracle for the adaptive solver.
inline double riccati_psi(double beta, double alpha, double lambda, double t) {
    if (!(lambda >= 0.0) || !(t >= 0.0))
        throw DomainError("riccati_psi: lambda and t must be >= 0");
    if (lambda == 0.0) return 0.0;
    if (beta == 0.0) return lambda / (1.0 + alpha * lambda * t);
    const double e1 = std::expm1(beta * t);
    return lambda * (1.0 + e1) / (1.0 + alpha * lambda * (e1 / beta));
}

// A CBI law: branching mechanism, immigration mechanism and initial state.
struct CbiLaw {
    BranchingMechanism R;
    ImmigrationMechanism F;
    double x = 0.0;

    CbiLaw(BranchingMechanism r, ImmigrationMechanism f, double x0)
        : R(std::move(r)), F(std::move(f)), x(x0) {
        if (!(x0 >= 0.0)) throw DomainError("CbiLaw: x must be >= 0");
        if (check_conservative(R).verdict == Conservativity::NotConservative)
            throw DomainError("CbiLaw: branching mechanism is not conservative");
    }
};

// E exp(-lambda y(t)) = exp(-x psi_t(lambda) - int_0^t F(psi_s(lambda)) ds).
inline double laplace_transform(const CbiLaw& law, double t, double lambda, double tol) {
    const PsiSolution sol = solve_psi(law.R, lambda, t, tol, &law.F);
    return std::exp(-law.x * sol.psi(t) - sol.immigration_integral(t, law.F));
}

// Evaluates the Laplace transform on a whole t-grid with one integration per
// lambda; what the statistical harness uses.
class CbiEvaluator {
public:
    CbiEvaluator(CbiLaw law, double t_max, double tol)
        : law_(std::move(law)), t_max_(t_max), tol_(tol) {}

    double value(double t, double lambda) const {
        const PsiSolution& sol = solution(lambda);
        return std::exp(-law_.x * sol.psi(t) - sol.immigration_integral(t, law_.F));
    }

    double psi(double t, double lambda) const { return solution(lambda).psi(t); }

    double immigration(double t, double lambda) const {
        return solution(lambda).immigration_integral(t, law_.F);
    }

    const CbiLaw& law() const { return law_; }

private:
    const PsiSolution& solution(double lambda) const {
        for (const auto& [l, sol] : cache_)
            if (l == lambda) return sol;
        cache_.emplace_back(lambda, solve_psi(law_.R, lambda, t_max_, tol_, &law_.F));
        return cache_.back().second;
    }

    CbiLaw law_;
    double t_max_;
    double tol_;
    mutable std::vector<std::pair<double, PsiSolution>> cache_;
};

struct SemigroupResidual {
    double psi_residual = 0.0;     // |psi_{s+t} - psi_s(psi_t)|
    double laplace_residual = 0.0; // Chapman-Kolmogorov residual of the full transform
};

// Flow property psi_{s+t}(l) = psi_s(psi_t(l)) and the matching composition
// identity for the full Laplace transform.
inline SemigroupResidual semigroup_check(const CbiLaw& law, double s, double t, double lambda,
                                         double tol) {
    const PsiSolution whole = solve_psi(law.R, lambda, s + t, tol, &law.F);
    const PsiSolution inner = solve_psi(law.R, lambda, t, tol, &law.F);
    const double psi_t = inner.psi(t);
    const PsiSolution outer = solve_psi(law.R, psi_t, s, tol, &law.F);

    SemigroupResidual res;
    res.psi_residual = std::abs(whole.psi(s + t) - outer.psi(s));

    const double lhs =
        std::exp(-law.x * whole.psi(s + t) - whole.immigration_integral(s + t, law.F));
    const double rhs = std::exp(-inner.immigration_integral(t, law.F)) *
                       std::exp(-law.x * outer.psi(s) - outer.immigration_integral(s, law.F));
    res.laplace_residual = std::abs(lhs - rhs);
    return res;
}

} // namespace branchlim
