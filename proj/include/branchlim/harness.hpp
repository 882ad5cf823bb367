#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "branchlim/cbi.hpp"
#include "branchlim/config.hpp"
#include "branchlim/dbi.hpp"
#include "branchlim/parallel.hpp"
#include "branchlim/rayknight.hpp"
#include "branchlim/report.hpp"
#include "branchlim/scaling.hpp"
#include "branchlim/stats.hpp"

namespace branchlim {

namespace detail {

class WallTimer {
public:
    WallTimer() : start_(std::chrono::steady_clock::now()) {}
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

struct FamilyAtK {
    Pgf g;
    Pgf h;
    ScalingScheme scheme;
};

inline FamilyAtK family_at_k(const ExperimentConfig& cfg, std::uint64_t k) {
    if (cfg.embed_family) {
        EmbeddedPair pair = embed_mechanisms(*cfg.mechanism, *cfg.immigration, k, cfg.gamma_c);
        return {std::move(pair.g_k), std::move(pair.h_k), pair.scheme};
    }
    return {*cfg.g, *cfg.h, ScalingScheme::linear(k, cfg.gamma_c)};
}

// Simulates n_paths chains, recording the state at the step marks
// floor(gamma_k * t) for every t in the grid. states[t][p] is the recorded
// state; capped paths are flagged and excluded from statistics.
struct RecordedPaths {
    std::vector<std::vector<std::uint64_t>> states; // [t_index][path]
    std::vector<std::uint8_t> capped;               // [path]
    std::size_t n_censored = 0;
};

inline RecordedPaths simulate_recorded(const DbiProcess& proc, std::uint64_t y0,
                                       const std::vector<std::uint64_t>& step_marks,
                                       std::size_t n_paths, std::uint64_t seed,
                                       std::uint64_t component, std::uint64_t k_index,
                                       std::uint64_t population_cap, unsigned threads) {
    RecordedPaths out;
    out.states.assign(step_marks.size(), std::vector<std::uint64_t>(n_paths, 0));
    out.capped.assign(n_paths, 0);
    const std::uint64_t n_max =
        step_marks.empty() ? 0 : *std::max_element(step_marks.begin(), step_marks.end());

    parallel_for(n_paths, threads, [&](std::size_t p) {
        Rng rng(seed, substream_index(component, k_index, p));
        std::uint64_t y = y0;
        std::uint64_t step = 0;
        for (std::size_t m = 0; m < step_marks.size(); ++m)
            if (step_marks[m] == 0) out.states[m][p] = y;
        while (step < n_max) {
            y = proc.step(y, rng);
            ++step;
            if (y > population_cap) {
                out.capped[p] = 1;
                return;
            }
            for (std::size_t m = 0; m < step_marks.size(); ++m)
                if (step_marks[m] == step) out.states[m][p] = y;
        }
    });
    for (auto c : out.capped) out.n_censored += c;
    return out;
}

inline ConvergenceRow make_row(std::string kind, std::uint64_t k, double t, double lambda,
                               const MeanVar& mv, double theory, const ToleranceSpec& tol,
                               std::size_t censored) {
    ConvergenceRow row;
    row.kind = std::move(kind);
    row.k = k;
    row.t = t;
    row.lambda = lambda;
    row.empirical = mv.mean;
    row.se = mv.se();
    row.theoretical = theory;
    row.z = mv.se() > 0.0 ? std::abs(mv.mean - theory) / mv.se() : 0.0;
    row.slack = tol.abs_tol;
    row.pass = std::abs(mv.mean - theory) <= tol.z_crit * mv.se() + tol.abs_tol;
    row.n = mv.n;
    row.censored = censored;
    return row;
}

// E exp(-l1 y(t1) - l2 y(t2)) for the CBI law, by the Markov property:
// condition on y(t1) and fold psi_{t2-t1}(l2) into the first exponent.
inline double joint_laplace_theory(const CbiLaw& law, double t1, double l1, double t2, double l2,
                                   double tol) {
    const double dt = t2 - t1;
    const PsiSolution inner = solve_psi(law.R, l2, dt, tol, &law.F);
    const double folded = l1 + inner.psi(dt);
    const PsiSolution outer = solve_psi(law.R, folded, t1, tol, &law.F);
    return std::exp(-inner.immigration_integral(dt, law.F)) *
           std::exp(-law.x * outer.psi(t1) - outer.immigration_integral(t1, law.F));
}

// Soft check: |empirical - theoretical| minus the Monte Carlo band should not
// grow along the k list.
inline void flag_k_trend(ConvergenceReport& rep, const std::string& kind) {
    for (const auto& probe : rep.rows) {
        if (probe.kind != kind) continue;
        std::vector<const ConvergenceRow*> series;
        for (const auto& r : rep.rows)
            if (r.kind == kind && r.t == probe.t && r.lambda == probe.lambda)
                series.push_back(&r);
        if (series.size() < 2 || series.front() != &probe) continue;
        for (std::size_t i = 1; i < series.size(); ++i) {
            const auto dev = [](const ConvergenceRow* r) {
                return std::max(0.0, std::abs(r->empirical - r->theoretical) - r->se);
            };
            if (dev(series[i]) > dev(series[i - 1]) + 1e-12) {
                std::ostringstream os;
                os << kind << " (t=" << series[i]->t << ", lambda=" << series[i]->lambda
                   << "): deviation rose from k=" << series[i - 1]->k << " to k=" << series[i]->k;
                rep.soft_flags.push_back(os.str());
            }
        }
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Scaling-limit statistical verification: rescaled branching chains against
// the continuum law, marginals plus two-time joint Laplace functionals.
// Path-space tightness has no finite test; the scope is finite-dimensional
// Laplace functionals.
// ---------------------------------------------------------------------------
inline ConvergenceReport run_limit_verification(const ExperimentConfig& cfg, unsigned threads) {
    detail::WallTimer timer;
    ConvergenceReport rep;
    rep.meta.seed = cfg.seed;
    rep.meta.threads = threads;

    const CbiLaw law(*cfg.mechanism, *cfg.immigration, cfg.x);
    std::vector<double> t_sorted = cfg.t_grid;
    std::sort(t_sorted.begin(), t_sorted.end());
    const double t_hi = t_sorted.back();
    CbiEvaluator theory(law, t_hi + 1e-9, cfg.tol.ode_tol);

    for (std::size_t ki = 0; ki < cfg.k_list.size(); ++ki) {
        const std::uint64_t k = cfg.k_list[ki];
        const detail::FamilyAtK fam = detail::family_at_k(cfg, k);
        const DbiProcess proc{fam.g, fam.h};
        const auto y0 = static_cast<std::uint64_t>(std::llround(static_cast<double>(k) * cfg.x));

        std::vector<std::uint64_t> marks;
        for (double t : t_sorted)
            marks.push_back(static_cast<std::uint64_t>(std::floor(fam.scheme.gamma_k * t)));

        const detail::RecordedPaths paths = detail::simulate_recorded(
            proc, y0, marks, cfg.n_paths, cfg.seed, 1, ki, cfg.population_cap, threads);

        const double kd = static_cast<double>(k);
        for (std::size_t ti = 0; ti < t_sorted.size(); ++ti) {
            for (double lambda : cfg.lambda_grid) {
                std::vector<double> vals;
                vals.reserve(cfg.n_paths);
                for (std::size_t p = 0; p < cfg.n_paths; ++p) {
                    if (paths.capped[p]) continue;
                    vals.push_back(std::exp(-lambda *
                                            static_cast<double>(paths.states[ti][p]) / kd));
                }
                rep.rows.push_back(detail::make_row(
                    "marginal", k, t_sorted[ti], lambda, mean_var(vals),
                    theory.value(t_sorted[ti], lambda), cfg.tol, paths.n_censored));
            }
        }
        // two-time joint functionals over consecutive grid times
        for (std::size_t ti = 0; ti + 1 < t_sorted.size(); ++ti) {
            const double t1 = t_sorted[ti], t2 = t_sorted[ti + 1];
            for (double lambda : cfg.lambda_grid) {
                std::vector<double> vals;
                vals.reserve(cfg.n_paths);
                for (std::size_t p = 0; p < cfg.n_paths; ++p) {
                    if (paths.capped[p]) continue;
                    const double y1 = static_cast<double>(paths.states[ti][p]) / kd;
                    const double y2 = static_cast<double>(paths.states[ti + 1][p]) / kd;
                    vals.push_back(std::exp(-lambda * (y1 + y2)));
                }
                ConvergenceRow row = detail::make_row(
                    "joint2", k, t1, lambda, mean_var(vals),
                    detail::joint_laplace_theory(law, t1, lambda, t2, lambda, cfg.tol.ode_tol),
                    cfg.tol, paths.n_censored);
                row.t2 = t2;
                row.lambda2 = lambda;
                rep.rows.push_back(row);
            }
        }
    }
    detail::flag_k_trend(rep, "marginal");

    // side condition of the composition-limit theorem: phi1 < 1 somewhere on
    // the positive grid; checked and reported rather than assumed
    {
        const std::uint64_t k_big = cfg.k_list.back();
        const detail::FamilyAtK fam = detail::family_at_k(cfg, k_big);
        const double c_k = std::llround(fam.scheme.kd() * cfg.x) > 0
                               ? std::floor(fam.scheme.kd() * cfg.x + 0.5)
                               : 0.0;
        if (c_k > 0.0) {
            double min_phi1 = 1.0;
            for (double t : t_sorted) {
                if (t <= 0.0) continue;
                for (double lambda : cfg.lambda_grid) {
                    if (lambda <= 0.0) continue;
                    min_phi1 = std::min(
                        min_phi1, composition_functionals(fam.g, fam.h, fam.scheme,
                                                          fam.scheme.kd(), c_k, t, lambda)
                                      .phi1);
                }
            }
            std::ostringstream os;
            os << "composition side condition at k=" << k_big << ": min phi1 = " << min_phi1
               << (min_phi1 < 1.0 ? " (< 1, limit law is nondegenerate)"
                                  : " (NOT < 1 on this grid)");
            rep.soft_flags.push_back(os.str());
        }
    }
    rep.meta.wall_ms = timer.ms();
    return rep;
}

struct RayKnightResult {
    ConvergenceReport chains;
    std::optional<SdeReport> sde;

    bool all_pass() const { return chains.all_pass(); }
};

inline RayKnightResult run_rayknight_verification(const ExperimentConfig& cfg, unsigned threads) {
    detail::WallTimer timer;
    RayKnightResult result;
    result.chains.meta.seed = cfg.seed;
    result.chains.meta.threads = threads;

    const DriftedBm bm = *cfg.bm;
    const RayKnightMechanisms mech = limit_mechanism(bm);
    std::vector<double> t_sorted = cfg.t_grid;
    std::sort(t_sorted.begin(), t_sorted.end());
    const double t_hi = t_sorted.back();

    for (std::size_t ki = 0; ki < cfg.k_list.size(); ++ki) {
        const std::uint64_t k = cfg.k_list[ki];
        const double kd = static_cast<double>(k);
        const auto z0 = static_cast<std::uint64_t>(std::llround(kd * cfg.u));
        const double x0 = static_cast<double>(z0) / kd;

        const auto run_direction = [&](CrossingDirection dir) {
            const bool up = dir == CrossingDirection::Upward;
            const DbiProcess proc =
                up ? DbiProcess{downcrossing_pgf(bm, k), Pgf::point_mass(0)}
                   : DbiProcess{downward_offspring_pgf(bm, k), downward_offspring_pgf(bm, k)};
            const CbiLaw law(mech.R, up ? mech.F_up : mech.F_down, x0);
            CbiEvaluator theory(law, t_hi + 1e-9, cfg.tol.ode_tol);

            std::vector<double> ts;
            for (double t : t_sorted)
                if (up || t <= cfg.a + 1e-12) ts.push_back(t);
            std::vector<std::uint64_t> marks;
            for (double t : ts)
                marks.push_back(static_cast<std::uint64_t>(std::floor(kd * t)));

            const detail::RecordedPaths paths = detail::simulate_recorded(
                proc, z0, marks, cfg.n_paths, cfg.seed, up ? 2 : 3, ki, cfg.population_cap,
                threads);

            for (std::size_t ti = 0; ti < ts.size(); ++ti) {
                for (double lambda : cfg.lambda_grid) {
                    std::vector<double> vals;
                    vals.reserve(cfg.n_paths);
                    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
                        if (paths.capped[p]) continue;
                        vals.push_back(std::exp(
                            -lambda * static_cast<double>(paths.states[ti][p]) / kd));
                    }
                    result.chains.rows.push_back(detail::make_row(
                        up ? "chain-up" : "chain-down", k, ts[ti], lambda, mean_var(vals),
                        theory.value(ts[ti], lambda), cfg.tol, paths.n_censored));
                }
            }
        };
        if (cfg.run_upward) run_direction(CrossingDirection::Upward);
        if (cfg.run_downward) run_direction(CrossingDirection::Downward);
    }
    detail::flag_k_trend(result.chains, "chain-up");
    detail::flag_k_trend(result.chains, "chain-down");

    if (cfg.sde.has_value()) {
        SdeOptions opt = *cfg.sde;
        opt.u = cfg.u;
        opt.a = cfg.a;
        opt.t_grid = cfg.t_grid;
        opt.lambda_grid = cfg.lambda_grid;
        opt.seed = cfg.seed;
        opt.threads = threads;
        result.sde = sde_cross_validate(bm, opt);
    }
    result.chains.meta.wall_ms = timer.ms();
    return result;
}

inline Lemma22Table run_lemma22(const ExperimentConfig& cfg) {
    detail::WallTimer timer;
    Lemma22Table table;
    table.meta.seed = cfg.seed;

    for (std::uint64_t k : cfg.k_list) {
        const detail::FamilyAtK fam = detail::family_at_k(cfg, k);
        for (double lambda : cfg.lambda_grid) {
            Lemma22Row row;
            row.k = k;
            row.lambda = lambda;
            row.s_k = rescaled_branching_exp(fam.g, fam.scheme, lambda);
            row.s_limit = cfg.mechanism->eval(lambda) -
                          fam.scheme.gamma0 * lambda * lambda / 2.0;
            row.s_gap = row.s_k - row.s_limit;
            row.drift_k =
                fam.scheme.gamma_k * (1.0 - fam.g.eval(std::exp(-lambda / fam.scheme.kd())));
            row.drift_limit = fam.scheme.gamma0 * lambda;
            row.drift_gap = row.drift_k - row.drift_limit;
            table.rows.push_back(row);
        }
    }
    // hard assertion: |gap| decays monotonically along the k list for each lambda
    for (double lambda : cfg.lambda_grid) {
        double prev_s = -1.0, prev_d = -1.0;
        for (const auto& row : table.rows) {
            if (row.lambda != lambda) continue;
            if (prev_s >= 0.0 && (std::abs(row.s_gap) > prev_s + 1e-12 ||
                                  std::abs(row.drift_gap) > prev_d + 1e-12)) {
                table.monotone_gap_decay = false;
                std::ostringstream os;
                os << "gap increased at k=" << row.k << ", lambda=" << lambda;
                table.soft_flags.push_back(os.str());
            }
            prev_s = std::abs(row.s_gap);
            prev_d = std::abs(row.drift_gap);
        }
    }
    table.meta.wall_ms = timer.ms();
    return table;
}

inline GeneratorTable run_generator_table(const ExperimentConfig& cfg) {
    detail::WallTimer timer;
    GeneratorTable table;
    table.meta.seed = cfg.seed;

    for (std::uint64_t k : cfg.k_list) {
        const detail::FamilyAtK fam = detail::family_at_k(cfg, k);
        for (double lambda : cfg.lambda_grid) {
            const GeneratorComparison cmp = generator_actions(
                fam.g, fam.h, fam.scheme, *cfg.mechanism, *cfg.immigration, lambda, cfg.x_grid);
            GeneratorSummaryRow row;
            row.k = k;
            row.lambda = lambda;
            row.sup_diff = cmp.sup_diff;
            row.alpha_k = cmp.alpha_k;
            row.beta_k = cmp.beta_k;
            row.H_k = cmp.H_k;
            row.R_k = lambda <= fam.scheme.kd()
                          ? rescaled_branching(fam.g, fam.scheme, lambda)
                          : std::numeric_limits<double>::quiet_NaN();
            row.S_k = rescaled_branching_exp(fam.g, fam.scheme, lambda);
            row.F_k = lambda <= fam.scheme.kd()
                          ? rescaled_immigration(fam.h, fam.scheme, lambda)
                          : std::numeric_limits<double>::quiet_NaN();
            table.rows.push_back(row);
            for (std::size_t i = 0; i < cmp.x_grid.size(); ++i)
                table.detail.push_back(
                    {k, lambda, cmp.x_grid[i], cmp.discrete[i], cmp.continuous[i]});
        }
    }
    for (double lambda : cfg.lambda_grid) {
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& row : table.rows) {
            if (row.lambda != lambda) continue;
            if (!(row.sup_diff < prev)) table.sup_diff_decreasing = false;
            prev = row.sup_diff;
        }
    }
    table.meta.wall_ms = timer.ms();
    return table;
}

inline EmbedReport run_embed(const ExperimentConfig& cfg) {
    detail::WallTimer timer;
    EmbedReport rep;
    rep.meta.seed = cfg.seed;

    for (std::uint64_t k : cfg.k_list) {
        EmbedRow row;
        row.k = k;
        try {
            const EmbeddedPair pair =
                embed_mechanisms(*cfg.mechanism, *cfg.immigration, k, cfg.gamma_c);
            row.feasible = true;
            row.tol = 1e-10 + 4.0 * pair.scheme.kd() * pair.scheme.gamma_k * 2.22e-16;
            const double kd = static_cast<double>(k);
            std::vector<double> grid = cfg.lambda_grid;
            if (grid.empty())
                for (int i = 0; i <= 20; ++i) grid.push_back(kd / 2.0 * i / 20.0);
            for (double lambda : grid) {
                if (lambda > kd) continue;
                const double r_ref = cfg.mechanism->eval(lambda);
                const double f_ref = cfg.immigration->eval(lambda);
                const double r_err =
                    std::abs(rescaled_branching(pair.g_k, pair.scheme, lambda) - r_ref) /
                    std::max(1.0, std::abs(r_ref));
                const double f_err =
                    std::abs(rescaled_immigration(pair.h_k, pair.scheme, lambda) - f_ref) /
                    std::max(1.0, std::abs(f_ref));
                row.max_R_error = std::max(row.max_R_error, r_err);
                row.max_F_error = std::max(row.max_F_error, f_err);
            }
        } catch (const EmbedInfeasibleError& e) {
            row.feasible = false;
            row.message = e.what();
        }
        rep.rows.push_back(row);
    }
    rep.meta.wall_ms = timer.ms();
    return rep;
}

inline PsiTable run_psi_solve(const ExperimentConfig& cfg) {
    detail::WallTimer timer;
    PsiTable table;
    table.meta.seed = cfg.seed;

    const double t_hi = std::max(cfg.t_max, *std::max_element(cfg.t_grid.begin(),
                                                              cfg.t_grid.end()));
    const ImmigrationMechanism F =
        cfg.immigration.has_value() ? *cfg.immigration : ImmigrationMechanism(0.0);
    for (double lambda : cfg.lambda_grid) {
        const PsiSolution sol = solve_psi(*cfg.mechanism, lambda, t_hi, cfg.tol.ode_tol, &F);
        for (double t : cfg.t_grid) {
            PsiRow row;
            row.t = t;
            row.lambda = lambda;
            row.psi = sol.psi(t);
            row.immigration_integral = sol.immigration_integral(t, F);
            row.laplace = std::exp(-cfg.x * row.psi - row.immigration_integral);
            table.rows.push_back(row);
        }
    }
    table.meta.wall_ms = timer.ms();
    return table;
}

struct DbiSimReport {
    std::vector<DbiPath> paths; // first few, for CSV export
    DbiPathSummary summary;
    ReportMeta meta;
    bool all_pass() const { return true; }
};

inline DbiSimReport run_dbi_simulate(const ExperimentConfig& cfg, unsigned threads) {
    detail::WallTimer timer;
    DbiSimReport rep;
    rep.meta.seed = cfg.seed;
    rep.meta.threads = threads;

    const DbiProcess proc{*cfg.g, *cfg.h};
    std::vector<double> finals(cfg.n_paths, 0.0);
    std::vector<std::uint8_t> capped(cfg.n_paths, 0);
    const std::size_t keep = std::min<std::size_t>(cfg.n_paths, 16);
    rep.paths.resize(keep);

    parallel_for(cfg.n_paths, threads, [&](std::size_t p) {
        DbiPath path = simulate_path(proc, cfg.y0, cfg.n_steps,
                                     RngSeed{cfg.seed, substream_index(4, 0, p)},
                                     cfg.population_cap);
        finals[p] = static_cast<double>(path.states.back());
        capped[p] = path.capped ? 1 : 0;
        if (p < keep) rep.paths[p] = std::move(path);
    });

    std::vector<double> ok;
    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
        if (!capped[p]) ok.push_back(finals[p]);
        else ++rep.summary.n_capped;
    }
    const MeanVar mv = mean_var(ok);
    rep.summary.n_paths = cfg.n_paths;
    rep.summary.final_mean = mv.mean;
    rep.summary.final_se = mv.se();
    rep.summary.predicted_mean = proc.mean_after(static_cast<double>(cfg.y0), cfg.n_steps);
    rep.meta.wall_ms = timer.ms();
    return rep;
}

} // namespace branchlim
