#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "branchlim/cbi.hpp"
#include "branchlim/common.hpp"
#include "branchlim/dbi.hpp"
#include "branchlim/mechanisms.hpp"
#include "branchlim/parallel.hpp"
#include "branchlim/pgf.hpp"
#include "branchlim/rng.hpp"
#include "branchlim/stats.hpp"

namespace branchlim {

// One-dimensional Brownian motion with drift, generator
// alpha d^2/dx^2 + beta d/dx; the SDE is dX = beta dt + sqrt(2 alpha) dW.
struct DriftedBm {
    double alpha = 0.5;
    double beta = 0.0;

    DriftedBm(double a, double b) : alpha(a), beta(b) {
        if (!(a > 0.0)) throw DomainError("DriftedBm: alpha must be > 0");
    }

    double sigma() const { return std::sqrt(2.0 * alpha); }
};

// P_x(hit +delta before -delta) for |x| <= delta, from the two-sided exit
// problem alpha u'' + beta u' = 0, u(-delta) = 0, u(delta) = 1:
//
//   u(x) = (e^{b delta} - e^{-b x}) / (e^{b delta} - e^{-b delta}),  b = beta/alpha
//
// with the driftless limit (delta + x) / (2 delta).
inline double crossing_prob(const DriftedBm& bm, double delta, double x) {
    if (!(delta > 0.0)) throw DomainError("crossing_prob: delta must be > 0");
    if (!(x >= -delta && x <= delta)) throw DomainError("crossing_prob: x outside [-delta, delta]");
    if (bm.beta == 0.0) return (delta + x) / (2.0 * delta);
    const double b = bm.beta / bm.alpha;
    // expm1 keeps the ratio stable for |b * delta| << 1
    return (std::expm1(b * delta) - std::expm1(-b * x)) /
           (std::expm1(b * delta) - std::expm1(-b * delta));
}

// Law of the number of (1/k)-downcrossings spawned one level up: geometric
// with parameter p_k = crossing_prob(bm, 1/k, 0).
inline Pgf downcrossing_pgf(const DriftedBm& bm, std::uint64_t k) {
    if (k == 0) throw DomainError("downcrossing_pgf: k must be >= 1");
    return Pgf::geometric(crossing_prob(bm, 1.0 / static_cast<double>(k), 0.0));
}

struct RayKnightMechanisms {
    BranchingMechanism R;        // (beta/alpha) l - l^2
    ImmigrationMechanism F_up;   // 0: the upward field is a pure branching diffusion
    ImmigrationMechanism F_down; // l: the downward field carries unit-drift immigration
};

// Continuum mechanisms of the local-time fields of the drifted Brownian
// motion at an inverse local time.
inline RayKnightMechanisms limit_mechanism(const DriftedBm& bm) {
    return RayKnightMechanisms{BranchingMechanism(bm.beta / bm.alpha, 1.0),
                               ImmigrationMechanism(0.0), ImmigrationMechanism(1.0)};
}

enum class CrossingDirection { Upward, Downward };

// Downcrossing-count chain across levels spaced 1/k, read off a drifted
// Brownian path stopped at an inverse local time. Upward chains branch
// without immigration; downward chains add one immigrant lineage per level.
struct CrossingChain {
    CrossingDirection direction = CrossingDirection::Upward;
    std::uint64_t k = 1;
    double base_level = 0.0;
    double budget_u = 0.0;
    DbiPath path;
};

// Offspring law of the downward chain: the drift-reflected crossing
// probability (reflection x -> -x maps descending levels to ascending ones
// for the mirrored motion).
inline Pgf downward_offspring_pgf(const DriftedBm& bm, std::uint64_t k) {
    if (k == 0) throw DomainError("downward_offspring_pgf: k must be >= 1");
    const DriftedBm mirrored(bm.alpha, -bm.beta);
    return Pgf::geometric(1.0 - crossing_prob(mirrored, 1.0 / static_cast<double>(k), 0.0));
}

inline CrossingChain simulate_crossing_chain(const DriftedBm& bm, std::uint64_t k, double u,
                                             CrossingDirection direction, double t_max,
                                             RngSeed seed, double base_level = 1.0,
                                             std::uint64_t population_cap = kDefaultPopulationCap) {
    if (k == 0) throw DomainError("simulate_crossing_chain: k must be >= 1");
    if (!(u >= 0.0)) throw DomainError("simulate_crossing_chain: u must be >= 0");
    if (direction == CrossingDirection::Downward && t_max > base_level + 1e-12)
        throw DomainError("simulate_crossing_chain: downward range t_max must be <= base level");

    DbiProcess proc = direction == CrossingDirection::Upward
                          ? DbiProcess{downcrossing_pgf(bm, k), Pgf::point_mass(0)}
                          : DbiProcess{downward_offspring_pgf(bm, k),
                                       downward_offspring_pgf(bm, k)};

    const auto z0 = static_cast<std::uint64_t>(
        std::llround(static_cast<double>(k) * u)); // deterministic start, o(k) fluctuation
    const auto n_steps =
        static_cast<std::uint64_t>(std::floor(static_cast<double>(k) * t_max));

    CrossingChain chain;
    chain.direction = direction;
    chain.k = k;
    chain.base_level = base_level;
    chain.budget_u = u;
    chain.path = simulate_path(proc, z0, n_steps, seed, population_cap, k);
    return chain;
}

// ---------------------------------------------------------------------------
// SDE-level cross validation
// ---------------------------------------------------------------------------

// Downcrossing-count local-time field of one simulated path, sampled at
// chosen times: values[i][j] = count at level levels[j] by time times[i],
// divided by k.
struct LocalTimeField {
    std::vector<double> times;
    std::vector<double> levels;
    std::vector<std::vector<double>> values;
};

struct SdeOptions {
    std::uint64_t k = 20;
    double u = 1.0;
    double a = 1.0;       // base level; the path starts there
    double t_up_max = 1.0;
    double t_down_max = 1.0;
    std::vector<double> t_grid{0.5, 1.0};
    std::vector<double> lambda_grid{0.5, 1.0};
    std::size_t n_paths = 500;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    double time_cap = 1e4;
    std::vector<std::pair<double, double>> boxes; // defaults to [a-1/2, a+1/2]
    bool record_field = false;                    // keep the field of path 0
};

struct SdeBoxCheck {
    double lo = 0.0, hi = 0.0;
    double mean_rel_error = 0.0;
    double max_rel_error = 0.0;
    double fraction_within_5pct = 0.0;
    double pooled_rel_error = 0.0; // |sum lhs - sum rhs| / sum rhs over all paths
};

struct SdeMarginal {
    double t = 0.0;
    MeanVar mean_stat;          // mean of the rescaled count field at offset t
    double theoretical_mean = 0.0;
    std::vector<double> lambdas;
    std::vector<MeanVar> laplace_stats;
    std::vector<double> laplace_theory;
};

struct SdeReport {
    std::size_t n_paths = 0;
    std::size_t n_censored = 0; // time cap hit before the local-time budget
    double start_u = 0.0;       // realized rescaled initial count, round(ku)/k
    std::vector<SdeMarginal> xi;  // field above the base level
    std::vector<SdeMarginal> eta; // field below the base level
    std::vector<SdeBoxCheck> boxes;
    LocalTimeField field; // populated when record_field is set
};

namespace detail {

struct SdePathOutcome {
    bool reached = false;
    double tau = 0.0;
    std::vector<std::uint32_t> up_counts;   // counts at levels a + i/k at tau
    std::vector<std::uint32_t> down_counts; // counts at levels a - i/k at tau
    std::vector<double> occupation;         // plain-time occupation per box
    std::vector<double> box_field_integral; // (1/k) sum of counts/k over box levels
    LocalTimeField field;
};

inline SdePathOutcome simulate_sde_path(const DriftedBm& bm, const SdeOptions& opt,
                                        std::size_t path_index, bool record_field) {
    const double kd = static_cast<double>(opt.k);
    const double dt = 0.1 / (kd * kd * 2.0 * bm.alpha);
    const double sdt = std::sqrt(dt) * bm.sigma();
    const auto target = static_cast<std::uint32_t>(
        std::llround(kd * opt.u));

    // tracked levels a + i/k for i in [-i_down, i_up]; arming needs one level
    // of headroom above the top tracked level
    const int i_up = static_cast<int>(std::ceil(opt.t_up_max * kd)) + 1;
    const int i_down = static_cast<int>(std::min(std::floor(opt.a * kd + 1e-9),
                                                 std::ceil(opt.t_down_max * kd)));
    const int n_levels = i_up + i_down + 1;
    std::vector<std::uint32_t> counts(n_levels, 0);
    std::vector<std::uint8_t> armed(n_levels, 0);
    const auto level_of = [&](int i) { return opt.a + static_cast<double>(i) / kd; };
    const int base_idx = i_down; // array slot of level a

    SdePathOutcome out;
    out.occupation.assign(opt.boxes.size(), 0.0);
    out.box_field_integral.assign(opt.boxes.size(), 0.0);

    if (record_field) {
        for (int i = -i_down; i <= i_up - 1; ++i) out.field.levels.push_back(level_of(i));
    }
    double next_snapshot = record_field ? 1.0 / kd : std::numeric_limits<double>::infinity();

    if (target == 0) {
        out.reached = true;
        out.up_counts.assign(i_up + 1, 0);
        out.down_counts.assign(i_down + 1, 0);
        return out;
    }

    Rng rng(opt.seed, substream_index(7, 0, path_index));
    double x = opt.a;
    double t = 0.0;
    bool reached = false;
    const double bridge_scale = 2.0 / (bm.sigma() * bm.sigma() * dt);

    auto snapshot = [&](double at) {
        out.field.times.push_back(at);
        std::vector<double> row;
        row.reserve(out.field.levels.size());
        for (int i = -i_down; i <= i_up - 1; ++i)
            row.push_back(static_cast<double>(counts[base_idx + i]) / kd);
        out.field.values.push_back(std::move(row));
    };

    // The Euler transition is exact for constant coefficients, and between
    // samples the path is a Brownian bridge (the drift conditions out), so a
    // level touch inside a step has probability exp(-2 d0 d1 / (sigma^2 dt)).
    // Endpoint-only detection would miss the crossings whose overshoot is
    // below one step deviation and bias the count field low.
    const auto bridge_touch = [&](double d0, double d1, Rng& r) {
        return r.uniform() < std::exp(-bridge_scale * d0 * d1);
    };

    while (t < opt.time_cap) {
        // occupation uses the pre-step position (left-endpoint rule)
        for (std::size_t b = 0; b < opt.boxes.size(); ++b)
            if (x >= opt.boxes[b].first && x < opt.boxes[b].second) out.occupation[b] += dt;

        const double x_new = x + bm.beta * dt + sdt * rng.normal();
        t += dt;

        const int j0 = static_cast<int>(std::floor((x - opt.a) * kd));
        const int j1 = static_cast<int>(std::floor((x_new - opt.a) * kd));
        const int lo = std::max(std::min(j0, j1) - 1, -i_down);
        const int hi = std::min(std::max(j0, j1) + 1, i_up);
        for (int i = lo; i <= hi; ++i) {
            const int slot = base_idx + i;
            if (!armed[slot]) {
                const double lev = level_of(i + 1);
                if (x_new >= lev || x >= lev ||
                    bridge_touch(lev - x, lev - x_new, rng)) {
                    armed[slot] = 1;
                }
            } else {
                const double lev = level_of(i);
                if (x_new <= lev || x <= lev ||
                    bridge_touch(x - lev, x_new - lev, rng)) {
                    armed[slot] = 0;
                    ++counts[slot];
                    if (i == 0 && counts[base_idx] >= target) {
                        reached = true;
                    }
                }
            }
        }
        x = x_new;
        if (record_field && (t >= next_snapshot || reached)) {
            snapshot(t);
            next_snapshot = std::max(next_snapshot * 2.0, t + dt);
        }
        if (reached) break;
    }

    out.reached = reached;
    out.tau = t;
    out.up_counts.assign(counts.begin() + base_idx, counts.end());
    out.down_counts.resize(i_down + 1);
    for (int i = 0; i <= i_down; ++i) out.down_counts[i] = counts[base_idx - i];

    for (std::size_t b = 0; b < opt.boxes.size(); ++b) {
        double acc = 0.0;
        for (int i = -i_down; i <= i_up - 1; ++i) {
            const double lev = level_of(i);
            if (lev >= opt.boxes[b].first && lev < opt.boxes[b].second)
                acc += static_cast<double>(counts[base_idx + i]) / kd;
        }
        out.box_field_integral[b] = acc / kd;
    }
    return out;
}

} // namespace detail

// Simulates the drifted Brownian motion directly, reads off downcrossing
// counts as a local-time estimate, stops at the first time the count at the
// base level reaches round(k u), and compares the resulting fields against
// the continuum laws from limit_mechanism(). The occupation identity is
// checked in quadratic-variation time, 2 * int_B l dx = int 1_B(X) d<X>;
// with alpha = 1/2 this is the plain-time normalization.
inline SdeReport sde_cross_validate(const DriftedBm& bm, SdeOptions opt) {
    if (opt.boxes.empty()) opt.boxes.push_back({opt.a - 0.5, opt.a + 0.5});
    if (!(opt.u >= 0.0)) throw DomainError("sde_cross_validate: u must be >= 0");

    const double kd = static_cast<double>(opt.k);
    std::vector<detail::SdePathOutcome> outcomes(opt.n_paths);
    parallel_for(opt.n_paths, opt.threads, [&](std::size_t i) {
        outcomes[i] = detail::simulate_sde_path(bm, opt, i, opt.record_field && i == 0);
    });

    SdeReport rep;
    rep.n_paths = opt.n_paths;
    rep.start_u = std::floor(kd * opt.u + 0.5) / kd;
    if (opt.record_field && !outcomes.empty()) rep.field = std::move(outcomes[0].field);

    std::vector<const detail::SdePathOutcome*> ok;
    for (const auto& o : outcomes) {
        if (o.reached) ok.push_back(&o);
        else ++rep.n_censored;
    }

    const RayKnightMechanisms mech = limit_mechanism(bm);
    const double x0 = rep.start_u;
    const double growth = bm.beta / bm.alpha;
    const double t_hi = std::max(opt.t_up_max, opt.t_down_max) + 1e-9;
    CbiEvaluator up_eval(CbiLaw(mech.R, mech.F_up, x0), t_hi, tolerances().ode_default);
    CbiEvaluator down_eval(CbiLaw(mech.R, mech.F_down, x0), t_hi, tolerances().ode_default);

    auto build_marginals = [&](bool upward) {
        std::vector<SdeMarginal> out;
        for (double t : opt.t_grid) {
            if (!upward && t > opt.t_down_max + 1e-12) continue;
            if (upward && t > opt.t_up_max + 1e-12) continue;
            const auto off = static_cast<std::size_t>(std::llround(t * kd));
            SdeMarginal m;
            m.t = t;
            std::vector<double> vals;
            vals.reserve(ok.size());
            for (const auto* o : ok) {
                const auto& counts = upward ? o->up_counts : o->down_counts;
                const double v = off < counts.size() ? counts[off] / kd : 0.0;
                vals.push_back(v);
            }
            m.mean_stat = mean_var(vals);
            m.theoretical_mean =
                upward ? x0 * std::exp(growth * t)
                       : x0 * std::exp(growth * t) +
                             (growth == 0.0 ? t : std::expm1(growth * t) / growth);
            for (double lam : opt.lambda_grid) {
                std::vector<double> lv;
                lv.reserve(vals.size());
                for (double v : vals) lv.push_back(std::exp(-lam * v));
                m.lambdas.push_back(lam);
                m.laplace_stats.push_back(mean_var(lv));
                m.laplace_theory.push_back(upward ? up_eval.value(t, lam)
                                                  : down_eval.value(t, lam));
            }
            out.push_back(std::move(m));
        }
        return out;
    };
    rep.xi = build_marginals(true);
    rep.eta = build_marginals(false);

    for (std::size_t b = 0; b < opt.boxes.size(); ++b) {
        SdeBoxCheck check;
        check.lo = opt.boxes[b].first;
        check.hi = opt.boxes[b].second;
        double sum = 0.0, worst = 0.0;
        double lhs_total = 0.0, rhs_total = 0.0;
        std::size_t within = 0;
        for (const auto* o : ok) {
            const double lhs = 2.0 * o->box_field_integral[b];
            const double rhs = 2.0 * bm.alpha * o->occupation[b];
            const double rel = std::abs(lhs - rhs) / std::max(rhs, 1e-12);
            sum += rel;
            worst = std::max(worst, rel);
            if (rel <= 0.05) ++within;
            lhs_total += lhs;
            rhs_total += rhs;
        }
        if (!ok.empty()) {
            check.mean_rel_error = sum / static_cast<double>(ok.size());
            check.fraction_within_5pct =
                static_cast<double>(within) / static_cast<double>(ok.size());
            check.pooled_rel_error =
                std::abs(lhs_total - rhs_total) / std::max(rhs_total, 1e-12);
        }
        check.max_rel_error = worst;
        rep.boxes.push_back(check);
    }
    return rep;
}

} // namespace branchlim
