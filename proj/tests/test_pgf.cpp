#include <doctest.h>

#include <cmath>
#include <vector>

#include "branchlim/pgf.hpp"
#include "branchlim/rng.hpp"
#include "branchlim/stats.hpp"

using namespace branchlim;

namespace {

Pgf binary_law() { return Pgf::finite_support({0.5, 0.0, 0.5}); } // (1 + z^2)/2

std::vector<Pgf> all_variants() {
    return {binary_law(), Pgf::geometric(0.35), Pgf::poisson(1.7), Pgf::point_mass(2),
            Pgf::mixture({{0.3, Pgf::point_mass(0)},
                          {0.3, Pgf::point_mass(1)},
                          {0.4, Pgf::poisson(2.5)}})};
}

} // namespace

TEST_CASE("evaluation closed forms") {
    CHECK(Pgf::geometric(0.5).eval(1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(binary_law().eval(0.0) == doctest::Approx(0.5).epsilon(1e-12));

    // geometric series oracle: sum q p^n z^n over 60 terms
    double series = 0.0;
    for (int n = 0; n < 60; ++n) series += 0.5 * std::pow(0.5, n) * std::pow(0.5, n);
    CHECK(Pgf::geometric(0.5).eval(0.5) == doctest::Approx(series).epsilon(1e-12));
    CHECK(Pgf::geometric(0.5).eval(0.5) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("normalization at z = 1 for every variant") {
    for (const auto& g : all_variants()) CHECK(std::abs(g.eval(1.0) - 1.0) <= 1e-12);
}

TEST_CASE("means") {
    CHECK(Pgf::geometric(0.5).mean() == doctest::Approx(1.0));
    CHECK(binary_law().mean() == doctest::Approx(1.0));
    CHECK(Pgf::point_mass(1).mean() == doctest::Approx(1.0));
    CHECK(Pgf::poisson(2.5).mean() == doctest::Approx(2.5));
}

TEST_CASE("variance via the second factorial moment") {
    // series oracle for the geometric law: E[Y^2] = sum n^2 q p^n
    const double p = 0.5;
    double ey = 0.0, ey2 = 0.0;
    for (int n = 0; n < 200; ++n) {
        const double w = (1.0 - p) * std::pow(p, n);
        ey += n * w;
        ey2 += double(n) * n * w;
    }
    const double var_oracle = ey2 - ey * ey;
    CHECK(Pgf::geometric(p).variance() == doctest::Approx(var_oracle).epsilon(1e-10));
    CHECK(Pgf::geometric(p).variance() == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(binary_law().variance() == doctest::Approx(1.0));
    CHECK(Pgf::poisson(3.0).variance() == doctest::Approx(3.0));
    CHECK(Pgf::point_mass(4).variance() == doctest::Approx(0.0));
}

TEST_CASE("monotone and convex on [0,1]") {
    for (const auto& g : all_variants()) {
        double prev = g.eval(0.0);
        double prev_diff = -1e30;
        for (int i = 1; i <= 100; ++i) {
            const double z = i / 100.0;
            const double v = g.eval(z);
            CHECK(v >= prev - 1e-12);
            const double diff = v - prev;
            if (i >= 2) CHECK(diff - prev_diff >= -1e-9);
            prev_diff = diff;
            prev = v;
        }
    }
}

TEST_CASE("composition iteration") {
    const Pgf b = binary_law();
    CHECK(compose_iterate(b, 0, 0.3) == doctest::Approx(0.3));
    CHECK(compose_iterate(b, 2, 0.0) == doctest::Approx(0.625)); // g(g(0)) = g(0.5)

    // critical geometric iterates have the closed form (n - (n-1)z)/((n+1) - nz)
    const Pgf geo = Pgf::geometric(0.5);
    for (int n : {1, 2, 5, 17, 30}) {
        for (double z : {0.0, 0.25, 0.6, 0.95}) {
            const double expected = (n - (n - 1) * z) / ((n + 1) - n * z);
            CHECK(compose_iterate(geo, n, z) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    CHECK(compose_iterate(geo, 2, 0.0) == doctest::Approx(2.0 / 3.0));

    // semigroup of iteration: g^(i+j) = g^i o g^j
    for (const auto& g : all_variants()) {
        for (const auto& [i, j] : {std::pair<int, int>{3, 4}, {0, 9}, {11, 2}}) {
            for (double z : {0.1, 0.5, 0.9}) {
                const double whole = compose_iterate(g, i + j, z);
                const double split = compose_iterate(g, i, compose_iterate(g, j, z));
                CHECK(std::abs(whole - split) <= 1e-10);
            }
        }
    }
}

TEST_CASE("domain and validation errors") {
    CHECK_THROWS_AS((void)binary_law().eval(1.0 + 1e-9), DomainError);
    CHECK_THROWS_AS((void)binary_law().eval(-0.1), DomainError);
    CHECK_THROWS_AS((void)compose_iterate(binary_law(), 3, 1.5), DomainError);
    CHECK_THROWS_AS(Pgf::finite_support({0.5, -0.1, 0.6}), DomainError);
    CHECK_THROWS_AS(Pgf::finite_support({0.5, 0.4}), DomainError);
    CHECK_THROWS_AS(Pgf::geometric(1.0), DomainError);
    CHECK_THROWS_AS(Pgf::geometric(0.0), DomainError);
    CHECK_THROWS_AS(Pgf::poisson(-1.0), DomainError);
    CHECK_THROWS_AS(compose_iterate(binary_law(), 20, 0.5, 10), IterationCapError);
}

TEST_CASE("point mass sampling is deterministic") {
    Rng rng(1, 0);
    const Pgf g = Pgf::point_mass(3);
    for (int i = 0; i < 100; ++i) CHECK(g.sample(rng) == 3);
}

TEST_CASE("binary sampling frequency") {
    Rng rng(123, 5);
    const Pgf b = binary_law();
    const std::size_t n = 1000000;
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (b.sample(rng) == 0) ++zeros;
    // exact coefficient 0.5, binomial 4 sigma band ~ 0.002
    CHECK(std::abs(double(zeros) / n - 0.5) < 0.002);
}

TEST_CASE("geometric sampling mean") {
    Rng rng(321, 9);
    const Pgf g = Pgf::geometric(0.5);
    const std::size_t n = 1000000;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += double(g.sample(rng));
    // variance from the second factorial moment is 2, so 3 sigma ~ 0.0042
    CHECK(std::abs(sum / n - 1.0) < 0.005);
}

TEST_CASE("empirical PGF matches eval") {
    Rng rng(777, 0);
    const std::size_t n = 100000;
    for (const auto& g : all_variants()) {
        std::vector<std::uint64_t> draws(n);
        for (auto& d : draws) d = g.sample(rng);
        for (double z : {0.2, 0.5, 0.8}) {
            std::vector<double> vals(n);
            for (std::size_t i = 0; i < n; ++i) vals[i] = std::pow(z, double(draws[i]));
            const MeanVar mv = mean_var(vals);
            CHECK(std::abs(mv.mean - g.eval(z)) <= 4.0 * mv.se() + 1e-12);
        }
    }
}

TEST_CASE("alias table kicks in for wide support") {
    std::vector<double> w(24);
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = 1.0 / double(i + 2);
        sum += w[i];
    }
    for (auto& x : w) x /= sum;
    const Pgf g = Pgf::finite_support(w);

    Rng rng(55, 0);
    const std::size_t n = 400000;
    std::vector<std::uint64_t> counts(w.size(), 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[g.sample(rng)];
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double expected = w[i] * n;
        CHECK(std::abs(double(counts[i]) - expected) < 6.0 * std::sqrt(expected) + 6.0);
    }
}

TEST_CASE("sample_sum agrees with naive summation in law") {
    Rng rng(9001, 0);
    const std::size_t n = 100000;
    struct Case {
        Pgf g;
        std::uint64_t count;
    };
    const Case cases[] = {{binary_law(), 7},
                          {Pgf::geometric(0.4), 5},
                          {Pgf::poisson(0.7), 9},
                          {Pgf::mixture({{0.6, Pgf::point_mass(1)}, {0.4, Pgf::poisson(3.0)}}), 6}};
    for (const auto& c : cases) {
        std::vector<double> fast(n), naive(n);
        for (std::size_t i = 0; i < n; ++i) fast[i] = double(c.g.sample_sum(c.count, rng));
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t acc = 0;
            for (std::uint64_t j = 0; j < c.count; ++j) acc += c.g.sample(rng);
            naive[i] = double(acc);
        }
        const MeanVar mf = mean_var(fast);
        const MeanVar mn = mean_var(naive);
        const double exact_mean = double(c.count) * c.g.mean();
        const double exact_var = double(c.count) * c.g.variance();
        CHECK(std::abs(mf.mean - exact_mean) <= 4.0 * std::sqrt(exact_var / n));
        CHECK(std::abs(mn.mean - exact_mean) <= 4.0 * std::sqrt(exact_var / n));
        CHECK(std::abs(mf.variance - exact_var) / exact_var < 0.06);
        const double se_diff = std::sqrt(mf.se() * mf.se() + mn.se() * mn.se());
        CHECK(std::abs(mf.mean - mn.mean) <= 4.0 * se_diff);
    }
}

TEST_CASE("point mass zero immigration stays zero") {
    Rng rng(4, 4);
    CHECK(Pgf::point_mass(0).sample(rng) == 0);
    CHECK(Pgf::point_mass(0).sample_sum(1000, rng) == 0);
    CHECK(Pgf::point_mass(0).eval(0.0) == doctest::Approx(1.0));
}
