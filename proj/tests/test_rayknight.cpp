#include <doctest.h>

#include <cmath>
#include <vector>

#include "branchlim/rayknight.hpp"
#include "branchlim/scaling.hpp"
#include "branchlim/stats.hpp"

using namespace branchlim;

namespace {

// Independent first-passage oracle: Euler path with Brownian-bridge barrier
// corrections on both sides. Test-only; does not share code with
// crossing_prob.
double mc_exit_up_probability(const DriftedBm& bm, double delta, double x0, std::size_t n_paths,
                              std::uint64_t seed) {
    const double sigma = std::sqrt(2.0 * bm.alpha);
    const double step_sd = delta / 30.0;
    const double dt = step_sd * step_sd / (sigma * sigma);
    std::size_t hits_up = 0;
    for (std::size_t p = 0; p < n_paths; ++p) {
        Rng rng(seed, p);
        double x = x0;
        for (;;) {
            const double x_new = x + bm.beta * dt + sigma * std::sqrt(dt) * rng.normal();
            if (x_new >= delta) {
                ++hits_up;
                break;
            }
            if (x_new <= -delta) break;
            // bridge probability of touching a barrier inside the step
            const double pu =
                std::exp(-2.0 * (delta - x) * (delta - x_new) / (sigma * sigma * dt));
            if (rng.uniform() < pu) {
                ++hits_up;
                break;
            }
            const double pl =
                std::exp(-2.0 * (x + delta) * (x_new + delta) / (sigma * sigma * dt));
            if (rng.uniform() < pl) break;
            x = x_new;
        }
    }
    return double(hits_up) / double(n_paths);
}

} // namespace

TEST_CASE("crossing probability boundary values") {
    const DriftedBm flat(0.5, 0.0);
    const DriftedBm pushed(0.4, 0.8);
    for (const auto& bm : {flat, pushed}) {
        CHECK(crossing_prob(bm, 0.2, 0.2) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(crossing_prob(bm, 0.2, -0.2) == doctest::Approx(0.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS((void)crossing_prob(flat, 0.2, 0.3), DomainError);
}

TEST_CASE("driftless crossing probability is linear") {
    const DriftedBm bm(1.3, 0.0);
    for (double x : {-0.1, 0.0, 0.05, 0.1})
        CHECK(crossing_prob(bm, 0.1, x) == doctest::Approx((0.1 + x) / 0.2).epsilon(1e-12));
}

TEST_CASE("drifted crossing probability closed form") {
    // beta/alpha = 1, delta = 0.1: (e^{0.1} - 1)/(e^{0.1} - e^{-0.1})
    const DriftedBm bm(1.0, 1.0);
    const double expected =
        (std::exp(0.1) - 1.0) / (std::exp(0.1) - std::exp(-0.1));
    CHECK(crossing_prob(bm, 0.1, 0.0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(crossing_prob(bm, 0.1, 0.0) == doctest::Approx(0.524979).epsilon(1e-6));

    // tiny drift stays continuous with the driftless limit
    const DriftedBm small(1.0, 1e-9);
    CHECK(crossing_prob(small, 0.1, 0.03) ==
          doctest::Approx(crossing_prob(DriftedBm(1.0, 0.0), 0.1, 0.03)).epsilon(1e-6));
}

TEST_CASE("crossing probability against first-passage Monte Carlo") {
    const DriftedBm bm(0.5, 0.5);
    const double delta = 0.1;
    const std::size_t n = 20000;
    for (double x : {0.0, 0.04}) {
        const double theory = crossing_prob(bm, delta, x);
        const double emp = mc_exit_up_probability(bm, delta, x, n, 99);
        const double se = std::sqrt(theory * (1.0 - theory) / double(n));
        CHECK(std::abs(emp - theory) <= 3.0 * se + 0.005);
    }
}

TEST_CASE("downcrossing offspring law") {
    CHECK(downcrossing_pgf(DriftedBm(0.7, 0.0), 10).geometric_p() == doctest::Approx(0.5));
    CHECK(downcrossing_pgf(DriftedBm(1.0, 1.0), 10).geometric_p() ==
          doctest::Approx(0.524979).epsilon(1e-6));

    // mean of the offspring law is exp(beta/(alpha k)); near one for large k
    const DriftedBm bm(1.0, 1.0);
    const Pgf g = downcrossing_pgf(bm, 1000);
    CHECK(std::abs(g.mean() - (1.0 + 1.0 / 1000.0)) <= 1e-4);
}

TEST_CASE("downward offspring equals the upward law by reflection") {
    // 1 - u^{(-beta)}(0) = u^{(beta)}(0): the mirrored construction lands on
    // the same geometric parameter
    for (double beta : {0.0, 0.4, -0.9}) {
        const DriftedBm bm(0.8, beta);
        const double up = downcrossing_pgf(bm, 25).geometric_p();
        const double down = downward_offspring_pgf(bm, 25).geometric_p();
        CHECK(up == doctest::Approx(down).epsilon(1e-12));
    }
}

TEST_CASE("limit mechanisms of the local-time fields") {
    const RayKnightMechanisms flat = limit_mechanism(DriftedBm(0.5, 0.0));
    for (double lambda : {0.5, 1.0, 2.0})
        CHECK(flat.R.eval(lambda) == doctest::Approx(-lambda * lambda).epsilon(1e-12));
    CHECK(flat.F_up.trivial());
    CHECK(flat.F_down.eval(2.0) == doctest::Approx(2.0));

    const RayKnightMechanisms tilted = limit_mechanism(DriftedBm(0.7, 0.7));
    for (double lambda : {0.5, 1.0, 2.0})
        CHECK(tilted.R.eval(lambda) ==
              doctest::Approx(lambda - lambda * lambda).epsilon(1e-12));
}

TEST_CASE("downcrossing chains feed the rescaled branching functional") {
    const DriftedBm bm(1.0, 1.0);
    double prev_err = 1e30;
    for (std::uint64_t k : {100ull, 1000ull, 10000ull}) {
        const Pgf g = downcrossing_pgf(bm, k);
        const double rk = rescaled_branching(g, ScalingScheme::linear(k), 1.0);
        const double err = std::abs(rk - limit_mechanism(bm).R.eval(1.0));
        CHECK(err < prev_err);
        prev_err = err;
    }
    CHECK(prev_err <= 0.01);

    // downward immigration identification: F_k(h_k) -> lambda
    double prev_gap = 1e30;
    for (std::uint64_t k : {100ull, 1000ull, 10000ull}) {
        const Pgf h = downward_offspring_pgf(bm, k);
        const double fk = rescaled_immigration(h, ScalingScheme::linear(k), 1.0);
        const double gap = std::abs(fk - 1.0);
        CHECK(gap < prev_gap);
        prev_gap = gap;
    }
    CHECK(prev_gap <= 0.01);
}

TEST_CASE("upward chain basics") {
    const DriftedBm bm(0.5, 0.0);
    // zero budget: absorbing state
    const CrossingChain none =
        simulate_crossing_chain(bm, 50, 0.004, CrossingDirection::Upward, 1.0, {3, 3});
    for (auto s : none.path.states) CHECK(s == 0);

    // critical chain is a martingale: the mean stays flat along the levels
    const std::uint64_t k = 100;
    const std::size_t n = 10000;
    const std::size_t marks[] = {25, 50, 100};
    std::vector<std::vector<double>> at_marks(3, std::vector<double>(n));
    for (std::size_t p = 0; p < n; ++p) {
        const CrossingChain c = simulate_crossing_chain(bm, k, 1.0, CrossingDirection::Upward,
                                                        1.0, {2024, p});
        for (std::size_t m = 0; m < 3; ++m) at_marks[m][p] = c.path.rescaled(marks[m]);
    }
    for (std::size_t m = 0; m < 3; ++m) {
        const MeanVar mv = mean_var(at_marks[m]);
        CHECK(std::abs(mv.mean - 1.0) <= 3.0 * mv.se());
    }
}

TEST_CASE("upward chain marginal law at small scale") {
    const DriftedBm bm(0.5, 0.0);
    const std::uint64_t k = 100;
    const std::size_t n = 20000;
    std::vector<double> vals(n);
    for (std::size_t p = 0; p < n; ++p) {
        const CrossingChain c = simulate_crossing_chain(bm, k, 1.0, CrossingDirection::Upward,
                                                        1.0, {5150, p});
        vals[p] = std::exp(-c.path.rescaled(c.path.states.size() - 1));
    }
    const MeanVar mv = mean_var(vals);
    CHECK(std::abs(mv.mean - std::exp(-0.5)) <= 3.0 * mv.se() + 0.01);
}

TEST_CASE("downward chain honours the range restriction") {
    const DriftedBm bm(0.5, 0.0);
    CHECK_THROWS_AS(simulate_crossing_chain(bm, 10, 1.0, CrossingDirection::Downward, 2.0,
                                            {1, 1}, 1.0),
                    DomainError);
    const CrossingChain c =
        simulate_crossing_chain(bm, 10, 1.0, CrossingDirection::Downward, 1.0, {1, 1}, 1.0);
    CHECK(c.path.states.size() == 11);
}

TEST_CASE("sde cross validation at a tiny scale") {
    const DriftedBm bm(0.5, 0.0);
    SdeOptions opt;
    opt.k = 10;
    opt.u = 0.5;
    opt.a = 1.0;
    opt.t_grid = {0.25, 0.5};
    opt.lambda_grid = {1.0};
    opt.n_paths = 80;
    opt.seed = 7;
    opt.threads = 2;
    opt.time_cap = 500.0;
    opt.record_field = true;
    const SdeReport rep = sde_cross_validate(bm, opt);

    CHECK(rep.n_paths == 80);
    CHECK(rep.n_censored < 20);
    CHECK(rep.start_u == doctest::Approx(0.5));
    REQUIRE(!rep.xi.empty());
    REQUIRE(!rep.eta.empty());
    // loose sanity at this scale: means near the continuum values
    for (const auto& m : rep.xi) {
        CHECK(m.mean_stat.mean > 0.0);
        CHECK(std::abs(m.mean_stat.mean - m.theoretical_mean) <=
              4.0 * m.mean_stat.se() + 0.15);
    }
    REQUIRE(!rep.boxes.empty());
    CHECK(rep.boxes[0].mean_rel_error < 0.35);

    // recorded field: nondecreasing in time at every level
    const LocalTimeField& field = rep.field;
    REQUIRE(field.times.size() >= 2);
    for (std::size_t j = 0; j < field.levels.size(); ++j)
        for (std::size_t i = 1; i < field.times.size(); ++i)
            CHECK(field.values[i][j] >= field.values[i - 1][j]);
}

TEST_CASE("sde zero budget short-circuits") {
    const DriftedBm bm(0.5, 0.0);
    SdeOptions opt;
    opt.k = 10;
    opt.u = 0.0;
    opt.n_paths = 4;
    opt.t_grid = {0.5};
    opt.lambda_grid = {1.0};
    const SdeReport rep = sde_cross_validate(bm, opt);
    for (const auto& m : rep.xi) {
        CHECK(m.mean_stat.mean == doctest::Approx(0.0));
        for (const auto& ls : m.laplace_stats) CHECK(ls.mean == doctest::Approx(1.0));
    }
}
