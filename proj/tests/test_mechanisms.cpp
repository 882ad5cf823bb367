#include <doctest.h>

#include <cmath>

#include "branchlim/mechanisms.hpp"

using namespace branchlim;

TEST_CASE("branching mechanism closed-form values") {
    CHECK(BranchingMechanism(0.0, 0.5).eval(2.0) == doctest::Approx(-2.0));
    CHECK(BranchingMechanism(1.0, 1.0).eval(1.0) == doctest::Approx(0.0));

    // single atom, linear compensation: R(1) = -(e^{-1} - 1 + 1) = -e^{-1};
    // cross-check e^{-1} by its power series
    double em1 = 0.0, term = 1.0;
    for (int n = 0; n <= 30; ++n) {
        em1 += term;
        term *= -1.0 / (n + 1);
    }
    const BranchingMechanism atom(0.0, 0.0, LevyAtoms{{{1.0, 1.0}}});
    CHECK(atom.eval(1.0) == doctest::Approx(-em1).epsilon(1e-12));
    CHECK(atom.eval(1.0) == doctest::Approx(-0.3678794411714423).epsilon(1e-10));
    CHECK(atom.eval(0.0) == doctest::Approx(0.0));
}

TEST_CASE("immigration mechanism closed-form values") {
    CHECK(ImmigrationMechanism(1.0).eval(3.0) == doctest::Approx(3.0));
    const ImmigrationMechanism atom(0.0, LevyAtoms{{{1.0, 1.0}}});
    CHECK(atom.eval(1.0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
    CHECK(atom.eval(1.0) == doctest::Approx(0.6321206).epsilon(1e-6));
    CHECK(ImmigrationMechanism(0.7, LevyAtoms{{{2.0, 0.3}}}).eval(0.0) == doctest::Approx(0.0));
}

TEST_CASE("shape on a grid: R concave, F nondecreasing concave") {
    const BranchingMechanism R(0.4, 0.2, LevyAtoms{{{0.5, 0.3}, {2.0, 0.1}}});
    const ImmigrationMechanism F(0.2, LevyAtoms{{{1.0, 0.5}, {0.2, 0.8}}});
    const double h = 0.1;
    for (int i = 1; i < 100; ++i) {
        const double lam = i * h;
        const double d2R = (R.eval(lam + h) - 2.0 * R.eval(lam) + R.eval(lam - h)) / (h * h);
        CHECK(d2R <= 1e-9);
        const double d2F = (F.eval(lam + h) - 2.0 * F.eval(lam) + F.eval(lam - h)) / (h * h);
        CHECK(d2F <= 1e-9);
        CHECK(F.eval(lam + h) >= F.eval(lam) - 1e-12);
        CHECK(F.eval(lam) >= 0.0);
    }
}

TEST_CASE("R(lambda)/lambda tends to beta at zero") {
    const BranchingMechanism R(1.0, 0.3, LevyAtoms{{{0.5, 0.2}, {2.0, 0.1}}});
    const double lam = 1e-6;
    CHECK(std::abs(R.eval(lam) / lam - 1.0) <= 1e-4);
}

TEST_CASE("linear-compensator bound R <= beta lambda") {
    const BranchingMechanism R(0.7, 0.1, LevyAtoms{{{1.5, 0.4}}});
    for (int i = 0; i <= 100; ++i) {
        const double lam = 0.1 * i;
        CHECK(R.eval(lam) <= 0.7 * lam + 1e-12);
    }
}

TEST_CASE("conservativity: linear class is analytic") {
    const auto rep = check_conservative(BranchingMechanism(0.0, 1.0));
    CHECK(rep.verdict == Conservativity::Conservative);
    CHECK(!rep.reason.empty());
    CHECK(check_conservative(BranchingMechanism(1.0, 0.0)).verdict ==
          Conservativity::Conservative);
    CHECK(check_conservative(BranchingMechanism(-2.0, 0.3, LevyAtoms{{{1.0, 1.0}}})).verdict ==
          Conservativity::Conservative);
}

TEST_CASE("conservativity: truncated class goes through the integrator") {
    // R <= 0 everywhere: the positive part vanishes, divergent by convention
    const auto neg =
        check_conservative(BranchingMechanism(0.0, 1.0, {}, Compensator::Truncated));
    CHECK(neg.verdict == Conservativity::Conservative);
    CHECK(!neg.table.empty());
    CHECK(neg.table.back().hit_nonpositive);

    // R(l) = l: the decade contributions stay flat, divergent
    const auto lin =
        check_conservative(BranchingMechanism(1.0, 0.0, {}, Compensator::Truncated));
    CHECK(lin.verdict == Conservativity::Conservative);
    CHECK(lin.table.size() == 5);

    const auto atom = check_conservative(
        BranchingMechanism(0.5, 0.0, LevyAtoms{{{1.0, 0.2}}}, Compensator::Truncated));
    CHECK(atom.verdict == Conservativity::Conservative);
}

TEST_CASE("conservativity verdicts on synthetic integrands") {
    // sqrt: integral of 1/sqrt converges fast -> not conservative
    const auto not_cons =
        conservativity_from_function([](double l) { return std::sqrt(l); });
    CHECK(not_cons.verdict == Conservativity::NotConservative);

    // l^0.9: converges, but so slowly the doubling heuristic cannot call it
    const auto border =
        conservativity_from_function([](double l) { return std::pow(l, 0.9); });
    CHECK(border.verdict == Conservativity::Inconclusive);

    // l log^2: convergent integral, shrinking contributions
    const auto wedge = conservativity_from_function(
        [](double l) { return l * std::log(10.0 / l) * std::log(10.0 / l); });
    CHECK(wedge.verdict != Conservativity::Conservative);

    // linear growth: divergent
    const auto cons = conservativity_from_function([](double l) { return 2.0 * l; });
    CHECK(cons.verdict == Conservativity::Conservative);
    // the diagnostic table reports per-decade contributions
    CHECK(cons.table.size() == 5);
    for (const auto& row : cons.table) CHECK(row.contribution > 0.0);
}

TEST_CASE("validation") {
    CHECK_THROWS_AS(BranchingMechanism(0.0, -0.1), DomainError);
    CHECK_THROWS_AS(BranchingMechanism(0.0, 0.1, LevyAtoms{{{-1.0, 1.0}}}), DomainError);
    CHECK_THROWS_AS(BranchingMechanism(0.0, 0.1, LevyAtoms{{{1.0, -1.0}}}), DomainError);
    CHECK_THROWS_AS(ImmigrationMechanism(-0.5), DomainError);
    CHECK_THROWS_AS((void)BranchingMechanism(0.0, 0.5).eval(-1.0), DomainError);
    CHECK_THROWS_AS((void)ImmigrationMechanism(1.0).eval(-0.5), DomainError);
}
