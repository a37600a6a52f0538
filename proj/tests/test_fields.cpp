#include "fosls/fields.hpp"
#include "fosls/quadrature.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace fosls;

namespace {
constexpr double kPi = std::numbers::pi;

Vector pt(double x) {
    Vector v(1);
    v(0) = x;
    return v;
}

Vector pt(double x, double y) {
    Vector v(2);
    v(0) = x;
    v(1) = y;
    return v;
}

// Shared consistency checks for a problem with an exact bundle.
void check_exact_bundle(const ProblemSpec& p, std::uint64_t seed) {
    REQUIRE(p.exact.has_value());
    const int d = p.box.dim();

    // div q* = f in quadrature: integral of the squared defect is tiny
    // relative to the source norm.
    std::vector<int> nodes(static_cast<std::size_t>(d), d == 1 ? 20001 : 301);
    const QuadratureRule fine = trapezoid_rule(p.box, nodes);
    const double defect = integrate(fine, [&](const Vector& x) {
        const double r = p.exact->div_q(x) - p.source(x);
        return r * r;
    });
    const double fnorm = integrate(fine, [&](const Vector& x) {
        const double f = p.source(x);
        return f * f;
    });
    CHECK(defect <= 1e-16 * fnorm);

    // q* = -kappa grad u* at random interior points (off interfaces a.s.).
    SplitMix64 rng(seed);
    for (int i = 0; i < 1000; ++i) {
        Vector x(d);
        for (int k = 0; k < d; ++k)
            x(k) = p.box.lower(k) + (p.box.upper(k) - p.box.lower(k)) * rng.uniform01();
        const Vector q = p.exact->q(x);
        const Vector residual = q + p.kappa(x) * p.exact->grad_u(x);
        CHECK(residual.cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + q.cwiseAbs().maxCoeff()));
    }

    // The exact pair annihilates both first-order residuals pointwise.
    for (int i = 0; i < 200; ++i) {
        Vector x(d);
        for (int k = 0; k < d; ++k)
            x(k) = p.box.lower(k) + (p.box.upper(k) - p.box.lower(k)) * rng.uniform01();
        const double kap = p.kappa(x);
        const Vector r1 =
            p.exact->q(x) / std::sqrt(kap) + std::sqrt(kap) * p.exact->grad_u(x);
        const double r2 = p.exact->div_q(x) - p.source(x);
        CHECK(r1.cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + p.exact->q(x).cwiseAbs().maxCoeff()));
        CHECK(std::abs(r2) <= 1e-9 * (1.0 + std::abs(p.source(x))));
    }

    // Lifting: boundary zero, interior positive, gradient consistent with
    // finite differences.
    const double h = 1e-6;
    for (int i = 0; i < 200; ++i) {
        Vector x(d);
        for (int k = 0; k < d; ++k)
            x(k) = p.box.lower(k) +
                   (p.box.upper(k) - p.box.lower(k)) * (0.01 + 0.98 * rng.uniform01());
        CHECK(p.lifting.value(x) > 0.0);
        const Vector grad = p.lifting.gradient(x);
        for (int k = 0; k < d; ++k) {
            Vector xp = x, xm = x;
            xp(k) += h;
            xm(k) -= h;
            const double fd = (p.lifting.value(xp) - p.lifting.value(xm)) / (2.0 * h);
            CHECK(grad(k) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

} // namespace

TEST_SUITE_BEGIN("fields");

TEST_CASE("smooth 1D problem") {
    const ProblemSpec p = problem_smooth_1d();
    CHECK(p.exact->u(pt(0.25)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(p.exact->q(pt(0.0))(0) == doctest::Approx(-2.0 * kPi).epsilon(1e-14));
    CHECK(*p.poincare_reference == doctest::Approx(1.0 / kPi).epsilon(1e-15));
    check_exact_bundle(p, 11);
}

TEST_CASE("1D interface problem") {
    const ProblemSpec p1 = problem_interface_1d(1.0);
    CHECK(p1.exact->u(pt(0.25)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(p1.exact->q(pt(0.5))(0) == doctest::Approx(2.0 * kPi).epsilon(1e-13));

    const ProblemSpec p3 = problem_interface_1d(3.0);
    const double left = p3.exact->grad_u(pt(0.5 - 1e-12))(0);
    const double right = p3.exact->grad_u(pt(0.5 + 1e-12))(0);
    CHECK(std::abs(right - left) == doctest::Approx(2.0 * kPi * (1.0 - 1.0 / 3.0)).epsilon(1e-6));

    for (double kappa0 : {0.5, 1.0, 3.0, 1e3}) {
        const ProblemSpec p = problem_interface_1d(kappa0);
        CHECK(std::abs(p.exact->u(pt(0.0))) <= 1e-14);
        CHECK(std::abs(p.exact->u(pt(1.0))) <= 1e-13);
    }

    // u* is continuous at the interface while kappa jumps
    CHECK(p3.exact->u(pt(0.5 - 1e-13)) == doctest::Approx(p3.exact->u(pt(0.5 + 1e-13))).epsilon(1e-10));
    CHECK(p3.kappa(pt(0.5)) == 3.0);  // closed-left: first region owns the interface
    CHECK(p3.kappa(pt(0.5 + 1e-13)) == 1.0);

    CHECK_THROWS_AS(problem_interface_1d(0.0), std::invalid_argument);
    CHECK_THROWS_AS(problem_interface_1d(-2.0), std::invalid_argument);

    check_exact_bundle(p3, 22);
    check_exact_bundle(problem_interface_1d(1e-6), 23);
    check_exact_bundle(problem_interface_1d(1e6), 24);
}

TEST_CASE("2D circular-interface problem") {
    const ProblemSpec p = problem_circle_2d();
    CHECK(std::abs(p.exact->u(pt(0.5, 0.75))) <= 1e-14);

    // Both branches of u* vanish on the circle.
    for (double t : {0.1, 0.7, 2.3, 4.0}) {
        const double r = 0.25;
        const Vector inside = pt(0.5 + (r - 1e-12) * std::cos(t), 0.5 + (r - 1e-12) * std::sin(t));
        const Vector outside = pt(0.5 + (r + 1e-12) * std::cos(t), 0.5 + (r + 1e-12) * std::sin(t));
        CHECK(std::abs(p.exact->u(inside)) <= 1e-10);
        CHECK(std::abs(p.exact->u(outside)) <= 1e-10);
        // Flux continuous, gradient jumps by the coefficient ratio.
        const Vector dq = p.exact->q(inside) - p.exact->q(outside);
        CHECK(dq.cwiseAbs().maxCoeff() <= 1e-9);
        const Vector dgrad = p.exact->grad_u(inside) - p.exact->grad_u(outside);
        CHECK(dgrad.cwiseAbs().maxCoeff() >= 1e-3);
    }
    CHECK(p.kappa(pt(0.5, 0.5)) == 1.0);
    CHECK(p.kappa(pt(0.9, 0.9)) == 3.0);
    check_exact_bundle(p, 33);
}

TEST_CASE("2D planar-interface problem") {
    const ProblemSpec p = problem_plane_2d();
    for (double y : {0.2, 0.5, 0.9})
        CHECK(std::abs(p.exact->grad_u(pt(0.5, y))(0)) <= 1e-12);

    // Tangential flux jumps by the coefficient ratio 3 across x = 1/2.
    const double qy_left = p.exact->q(pt(0.5 - 1e-12, 0.25))(1);
    const double qy_right = p.exact->q(pt(0.5 + 1e-12, 0.25))(1);
    CHECK(qy_right == doctest::Approx(3.0 * qy_left).epsilon(1e-6));
    // Normal flux continuous.
    CHECK(p.exact->q(pt(0.5 - 1e-12, 0.25))(0) ==
          doctest::Approx(p.exact->q(pt(0.5 + 1e-12, 0.25))(0)).epsilon(1e-6));

    for (double y : {0.0, 0.3, 1.0}) CHECK(std::abs(p.exact->u(pt(0.0, y))) <= 1e-14);
    check_exact_bundle(p, 44);
}

TEST_CASE("problem lookup by identifier") {
    CHECK(make_problem("smooth1d", 1.0).id == "smooth1d");
    CHECK(make_problem("interface1d", 2.0).id == "interface1d");
    CHECK(make_problem("circle2d", 1.0).box.dim() == 2);
    CHECK(make_problem("plane2d", 1.0).box.dim() == 2);
    CHECK_THROWS_AS(make_problem("nope", 1.0), std::invalid_argument);
}

TEST_SUITE_END();
