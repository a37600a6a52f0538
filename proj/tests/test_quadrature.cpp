#include "fosls/quadrature.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace fosls;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_SUITE_BEGIN("quadrature");

TEST_CASE("uniform partition tiles the box") {
    const Partition p1 = partition_uniform(Box::unit_interval(), {4});
    REQUIRE(p1.cell_count() == 4);
    for (const auto& cell : p1.cells) CHECK(cell.volume() == doctest::Approx(0.25).epsilon(1e-14));

    const Partition p2 = partition_uniform(Box::unit_square(), {2, 2});
    REQUIRE(p2.cell_count() == 4);
    double vol = 0.0;
    for (const auto& cell : p2.cells) {
        CHECK(cell.volume() == doctest::Approx(0.25).epsilon(1e-14));
        vol += cell.volume();
    }
    CHECK(vol == doctest::Approx(1.0).epsilon(1e-14));

    const Partition p3 = partition_uniform(Box::unit_square(), {100, 100});
    CHECK(p3.cell_count() == 10000);

    CHECK_THROWS_AS(partition_uniform(Box::unit_interval(), {0}), std::invalid_argument);
}

TEST_CASE("P1 rule is an antithetic pair per cell") {
    const Partition part = partition_uniform(Box::unit_interval(), {1});
    const QuadratureRule rule = sample_p1(part, 7);
    REQUIRE(rule.size() == 2);
    CHECK(rule.weights(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rule.weights(1) == doctest::Approx(0.5).epsilon(1e-15));
    // reflection about the cell center
    CHECK(rule.points(0, 0) + rule.points(1, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("P1 weights sum to the volume and the rule is seed-deterministic") {
    const Partition part = partition_uniform(Box::unit_square(), {7, 3});
    for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
        const QuadratureRule rule = sample_p1(part, seed);
        CHECK(rule.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
        const QuadratureRule again = sample_p1(part, seed);
        CHECK((rule.points - again.points).cwiseAbs().maxCoeff() == 0.0);
        CHECK((rule.weights - again.weights).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("P1 rule integrates per-cell affine functions exactly") {
    const Box box(Vector::Constant(1, 0.3), Vector::Constant(1, 1.7));
    const Partition part = partition_uniform(box, {5});
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const QuadratureRule rule = sample_p1(part, seed);
        const double got = integrate(rule, [](const Vector& x) { return 2.0 + 3.0 * x(0); });
        const double want = 2.0 * box.volume() + 1.5 * (1.7 * 1.7 - 0.3 * 0.3);
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
    // 2D: affine in both coordinates
    const Partition part2 = partition_uniform(Box::unit_square(), {3, 4});
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const QuadratureRule rule = sample_p1(part2, seed);
        const double got =
            integrate(rule, [](const Vector& x) { return 1.0 - 0.5 * x(0) + 2.0 * x(1); });
        CHECK(got == doctest::Approx(1.0 - 0.25 + 1.0).epsilon(1e-12));
    }
}

TEST_CASE("stochastic rules are unbiased: averaging oracle over resamples") {
    // Monte Carlo averaging against the closed-form integrals; tolerance is
    // three estimated standard errors of the resample mean.
    const int resamples = 10000;

    auto run_check = [&](auto make_rule, auto integrand, double exact) {
        double sum = 0.0, sumsq = 0.0;
        for (int m = 0; m < resamples; ++m) {
            const double q = integrate(make_rule(static_cast<std::uint64_t>(m)), integrand);
            sum += q;
            sumsq += q * q;
        }
        const double mean = sum / resamples;
        const double var = (sumsq - sum * sum / resamples) / (resamples - 1);
        const double se = std::sqrt(var / resamples);
        CHECK(std::abs(mean - exact) <= 3.0 * se + 1e-14);
    };

    const Partition part = partition_uniform(Box::unit_interval(), {50});
    run_check([&](std::uint64_t s) { return sample_p1(part, s); },
              [](const Vector& x) { return x(0) * x(0); }, 1.0 / 3.0);
    run_check([&](std::uint64_t s) { return sample_p1(part, s); },
              [](const Vector& x) { return std::sin(2.0 * kPi * x(0)); }, 0.0);
    run_check([&](std::uint64_t s) { return sample_mc(Box::unit_interval(), 100, s); },
              [](const Vector& x) { return x(0); }, 0.5);
    run_check([&](std::uint64_t s) { return sample_mc(Box::unit_interval(), 100, s); },
              [](const Vector& x) { return x(0) * x(0); }, 1.0 / 3.0);
}

TEST_CASE("Monte Carlo estimator variance matches the closed form") {
    // Var(Q[x]) on (0,1) with N points is Var(x)/N = 1/(12 N).
    const int resamples = 20000;
    const int n_points = 100;
    double sum = 0.0, sumsq = 0.0;
    for (int m = 0; m < resamples; ++m) {
        const double q = integrate(sample_mc(Box::unit_interval(), n_points, 1000 + m),
                                   [](const Vector& x) { return x(0); });
        sum += q;
        sumsq += q * q;
    }
    const double var = (sumsq - sum * sum / resamples) / (resamples - 1);
    CHECK(var == doctest::Approx(1.0 / 12.0 / n_points).epsilon(0.20));
}

TEST_CASE("Monte Carlo integrates constants exactly") {
    const Box box(Vector::Constant(2, -1.0), Vector::Constant(2, 2.0));
    const QuadratureRule rule = sample_mc(box, 37, 5);
    CHECK(integrate(rule, [](const Vector&) { return 4.5; }) ==
          doctest::Approx(4.5 * 9.0).epsilon(1e-13));
}

TEST_CASE("trapezoid rule") {
    CHECK(integrate(trapezoid_rule(Box::unit_interval(), {2}),
                    [](const Vector& x) { return x(0); }) == doctest::Approx(0.5).epsilon(1e-15));
    const double sin2 = integrate(trapezoid_rule(Box::unit_interval(), {1001}), [](const Vector& x) {
        const double s = std::sin(2.0 * kPi * x(0));
        return s * s;
    });
    CHECK(std::abs(sin2 - 0.5) <= 1e-5);
    CHECK(integrate(trapezoid_rule(Box::unit_square(), {3, 3}),
                    [](const Vector&) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(trapezoid_rule(Box::unit_interval(), {1}), std::invalid_argument);
}

TEST_CASE("integrate on a fixed two-point rule") {
    QuadratureRule rule;
    rule.points.resize(2, 1);
    rule.points << 0.25, 0.75;
    rule.weights.resize(2);
    rule.weights << 0.5, 0.5;
    CHECK(integrate(rule, [](const Vector& x) { return x(0); }) == doctest::Approx(0.5));
    CHECK(integrate(rule, [](const Vector&) { return 1.0; }) == doctest::Approx(1.0));
}

TEST_CASE("trapezoid convergence on a kinked square") {
    const double got = integrate(trapezoid_rule(Box::unit_interval(), {10001}), [](const Vector& x) {
        const double v = 1.0 - 2.0 * x(0);
        return v * v;
    });
    CHECK(std::abs(got - 1.0 / 3.0) <= 1e-7);
}

TEST_CASE("non-finite integrand values are reported with the point") {
    const QuadratureRule rule = trapezoid_rule(Box::unit_interval(), {11});
    CHECK_THROWS_AS(integrate(rule,
                              [](const Vector& x) {
                                  return x(0) > 0.49 && x(0) < 0.51
                                             ? std::numeric_limits<double>::infinity()
                                             : 1.0;
                              }),
                    NonFiniteSampleError);
}

TEST_SUITE_END();
