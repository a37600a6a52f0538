#include "fosls/metrics.hpp"
#include "fosls/training.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace fosls;

namespace {

constexpr double kPi = std::numbers::pi;

struct InSpan {
    ProblemSpec problem;
    DiscreteSolution sol;

    InSpan() {
        problem = problem_smooth_1d();
        problem.id = "inspan";
        problem.source = [](const Vector&) { return 2.0; };
        ExactSolution ex;
        ex.u = [](const Vector& x) { return x(0) * (1.0 - x(0)); };
        ex.grad_u = [](const Vector& x) {
            Vector g(1);
            g(0) = 1.0 - 2.0 * x(0);
            return g;
        };
        ex.q = [](const Vector& x) {
            Vector q(1);
            q(0) = 2.0 * x(0) - 1.0;
            return q;
        };
        ex.div_q = [](const Vector&) { return 2.0; };
        problem.exact = ex;

        sol.net.input_dim = 1;
        sol.net.layers.push_back({(Matrix(3, 1) << 0.0, 1.0, 1.0).finished(),
                                  (Vector(3) << 1.0, 1.0, 2.0).finished()});
        sol.coefficients.c_u = (Vector(3) << 1.0, 0.0, 0.0).finished();
        sol.coefficients.c_q = (Vector(3) << -4.0, -1.0, 1.0).finished();
        sol.poincare = 1.0 / kPi;
        sol.problem_id = "inspan";
        sol.lifting = problem.lifting;
    }
};

} // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("exact reproduction gives vanishing errors") {
    const InSpan fx;
    const QuadratureRule fine = trapezoid_rule(fx.problem.box, {20001});
    const ErrorReport rep = energy_errors(fx.sol, fx.problem, fx.sol.poincare, fine);
    CHECK(rep.rel_u <= 1e-7);
    CHECK(rep.rel_q <= 1e-7);
    CHECK(rep.rel_total <= 1e-7);
    CHECK(rep.loss_fine <= 1e-14);
}

TEST_CASE("zero solution has unit relative errors") {
    const InSpan fx;
    DiscreteSolution zero = fx.sol;
    zero.coefficients.c_u.setZero();
    zero.coefficients.c_q.setZero();
    const QuadratureRule fine = trapezoid_rule(fx.problem.box, {20001});
    const ErrorReport rep = energy_errors(zero, fx.problem, zero.poincare, fine);
    CHECK(rep.rel_u == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(rep.rel_q == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(rep.rel_total == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("ratio reports the undefined-at-zero sentinel") {
    FineEvaluation fine;
    fine.has_exact = true;
    fine.nrm_u2 = 1.0;
    fine.nrm_q2 = 1.0;
    fine.loss = 0.0;
    const ErrorReport rep = error_report(fine);
    CHECK(std::isnan(rep.ratio));
}

TEST_CASE("component decomposition is Pythagorean") {
    const ProblemSpec p = problem_interface_1d(3.0);
    Network net = init_1d(8);
    apply_jitter(net, 0.1, 3);
    SplitMix64 rng(12);
    Coefficients c;
    c.c_u.resize(8);
    c.c_q.resize(8);
    for (int i = 0; i < 8; ++i) {
        c.c_u(i) = 2.0 * rng.uniform01() - 1.0;
        c.c_q(i) = 2.0 * rng.uniform01() - 1.0;
    }
    const double poincare = 0.4;
    const QuadratureRule fine = trapezoid_rule(p.box, {20001});
    const FineEvaluation fe = evaluate_fine(net, p, c, poincare, fine);
    const ErrorReport rep = error_report(fe);
    const double lhs = rep.rel_total * rep.rel_total * fe.nrm_total2();
    const double rhs = rep.rel_u * rep.rel_u * fe.nrm_u2 + rep.rel_q * rep.rel_q * fe.nrm_hdivk2();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("fine-rule loss equals the assembled quadratic form on the same rule") {
    const ProblemSpec p = problem_interface_1d(3.0);
    Network net = init_1d(8);
    apply_jitter(net, 0.05, 4);
    SplitMix64 rng(9);
    Coefficients c;
    c.c_u.resize(8);
    c.c_q.resize(8);
    for (int i = 0; i < 8; ++i) {
        c.c_u(i) = 2.0 * rng.uniform01() - 1.0;
        c.c_q(i) = 2.0 * rng.uniform01() - 1.0;
    }
    const double poincare = 0.37;
    const QuadratureRule fine = trapezoid_rule(p.box, {8001});
    const FineEvaluation fe = evaluate_fine(net, p, c, poincare, fine);
    const AssembledSystem sys = assemble(net, p, fine, poincare);
    CHECK(fe.loss == doctest::Approx(loss_at(sys, c)).epsilon(1e-10));
}

TEST_CASE("TV oracle returns exactly the jump of the ideal ramp") {
    const double A = 4.7;
    for (double eps : {0.003, 0.01, 0.05}) {
        auto ramp_integral = [A, eps](double x) {
            // antiderivative of the ramp g_eps centered at 0.5
            const double t = x - 0.5;
            if (t < -eps) return 0.0;
            if (t > eps) return A * t;  // A*eps/2 absorbed into a constant slope part
            return A * (t + eps) * (t + eps) / (4.0 * eps);
        };
        // Exact up to the rectified slope-rounding floor: in the flat regions
        // |delta slope| rectifies ~4e-12 noise per interval, so the discrete
        // TV carries an O(n eps |e| / h^2) offset even for the ideal ramp.
        const double tv = tv_of_derivative(ramp_integral, 0.4, 0.6, 4001);
        CHECK(tv == doctest::Approx(A).epsilon(1e-7));
    }
}

TEST_CASE("TV with a known gradient jump measures the transition layer only") {
    // Exact solution kink: e' = A step - g_eps; the absolutely continuous
    // part of e'' integrates to exactly A for the ideal ramp, and to 0 for
    // the zero approximant (whose error IS the bare step).
    const double A = 3.3, eps = 0.004;
    auto e_ramp = [A, eps](double x) {
        const double t = x - 0.5;
        const double kink = A * std::max(0.0, t);          // exact part
        double ramp;                                        // approximant part
        if (t < -eps)
            ramp = 0.0;
        else if (t > eps)
            ramp = A * t;
        else
            ramp = A * (t + eps) * (t + eps) / (4.0 * eps);
        return kink - ramp;
    };
    const GradientJump jump{0.5, A};
    CHECK(tv_of_derivative(e_ramp, 0.4, 0.6, 4001, jump) == doctest::Approx(A).epsilon(1e-7));

    auto e_bare_step = [A](double x) { return A * std::max(0.0, x - 0.5); };
    CHECK(tv_of_derivative(e_bare_step, 0.4, 0.6, 4001, jump) <= 1e-7);
    // Without the correction the same error carries the full delta.
    CHECK(tv_of_derivative(e_bare_step, 0.4, 0.6, 4001) ==
          doctest::Approx(A).epsilon(1e-7));
}

TEST_CASE("TV dominates the jump for ramps with a smooth background") {
    const double A = 2.0, eps = 0.01;
    auto e = [A, eps](double x) {
        const double t = x - 0.5;
        double ramp;
        if (t < -eps)
            ramp = 0.0;
        else if (t > eps)
            ramp = A * t;
        else
            ramp = A * (t + eps) * (t + eps) / (4.0 * eps);
        return ramp + 0.05 * std::sin(3.0 * x);
    };
    CHECK(tv_of_derivative(e, 0.4, 0.6, 4001) >= A * (1.0 - 1e-6));
}

TEST_CASE("TV of an exact reproduction is zero") {
    const InSpan fx;
    CHECK(tv_gradient_error(fx.sol, fx.problem, 0.4, 0.6, 2001) <= 1e-10);
}

TEST_CASE("TV window must stay inside the domain") {
    const InSpan fx;
    CHECK_THROWS_AS(tv_gradient_error(fx.sol, fx.problem, -0.1, 0.6, 101),
                    std::invalid_argument);
}

TEST_CASE("standard ratio is defined and positive for a rough solution") {
    const InSpan fx;
    DiscreteSolution zero = fx.sol;
    zero.coefficients.c_u.setZero();
    zero.coefficients.c_q.setZero();
    const QuadratureRule fine = trapezoid_rule(fx.problem.box, {8001});
    const FineEvaluation fe =
        evaluate_fine(zero.net, fx.problem, zero.coefficients, zero.poincare, fine);
    CHECK(standard_ratio(fe) > 0.0);
}

TEST_SUITE_END();
