#include "fosls/fields.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fosls {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

Lifting lifting_1d() {
    Lifting g;
    g.value = [](const Vector& x) { return x(0) * (1.0 - x(0)); };
    g.gradient = [](const Vector& x) {
        Vector grad(1);
        grad(0) = 1.0 - 2.0 * x(0);
        return grad;
    };
    return g;
}

Lifting lifting_2d() {
    Lifting g;
    g.value = [](const Vector& x) {
        return x(0) * (1.0 - x(0)) * x(1) * (1.0 - x(1));
    };
    g.gradient = [](const Vector& x) {
        Vector grad(2);
        grad(0) = (1.0 - 2.0 * x(0)) * x(1) * (1.0 - x(1));
        grad(1) = x(0) * (1.0 - x(0)) * (1.0 - 2.0 * x(1));
        return grad;
    };
    return g;
}

} // namespace

ProblemSpec problem_smooth_1d() {
    ProblemSpec p;
    p.id = "smooth1d";
    p.box = Box::unit_interval();
    p.kappa = PiecewiseConstantCoefficient::constant(1.0);
    p.source = [](const Vector& x) { return 4.0 * kPi * kPi * std::sin(kTwoPi * x(0)); };
    p.lifting = lifting_1d();

    ExactSolution ex;
    ex.u = [](const Vector& x) { return std::sin(kTwoPi * x(0)); };
    ex.grad_u = [](const Vector& x) {
        Vector g(1);
        g(0) = kTwoPi * std::cos(kTwoPi * x(0));
        return g;
    };
    ex.q = [](const Vector& x) {
        Vector q(1);
        q(0) = -kTwoPi * std::cos(kTwoPi * x(0));
        return q;
    };
    ex.div_q = [](const Vector& x) { return 4.0 * kPi * kPi * std::sin(kTwoPi * x(0)); };
    p.exact = std::move(ex);
    p.poincare_reference = 1.0 / kPi;  // smallest Dirichlet eigenvalue of -u'' on (0,1) is pi^2
    return p;
}

ProblemSpec problem_interface_1d(double kappa0) {
    if (!(kappa0 > 0.0))
        throw std::invalid_argument("problem_interface_1d: kappa0 must be positive");

    ProblemSpec p;
    p.id = "interface1d";
    p.box = Box::unit_interval();
    p.kappa.regions.push_back({[](const Vector& x) { return x(0) <= 0.5; }, kappa0});
    p.kappa.default_value = 1.0;
    p.source = [](const Vector& x) { return 4.0 * kPi * kPi * std::sin(kTwoPi * x(0)); };
    p.lifting = lifting_1d();

    ExactSolution ex;
    ex.u = [kappa0](const Vector& x) {
        const double s = std::sin(kTwoPi * x(0));
        return x(0) <= 0.5 ? s / kappa0 : s;
    };
    ex.grad_u = [kappa0](const Vector& x) {
        Vector g(1);
        const double c = kTwoPi * std::cos(kTwoPi * x(0));
        g(0) = x(0) <= 0.5 ? c / kappa0 : c;
        return g;
    };
    ex.q = [](const Vector& x) {
        Vector q(1);
        q(0) = -kTwoPi * std::cos(kTwoPi * x(0));
        return q;
    };
    ex.div_q = [](const Vector& x) { return 4.0 * kPi * kPi * std::sin(kTwoPi * x(0)); };
    p.exact = std::move(ex);
    p.interface_points = {0.5};
    return p;
}

ProblemSpec problem_circle_2d() {
    const double r2_interface = 1.0 / 16.0;
    auto inside = [r2_interface](const Vector& x) {
        const double dx = x(0) - 0.5, dy = x(1) - 0.5;
        return dx * dx + dy * dy <= r2_interface;
    };

    ProblemSpec p;
    p.id = "circle2d";
    p.box = Box::unit_square();
    p.kappa.regions.push_back({inside, 1.0});
    p.kappa.default_value = 3.0;
    p.lifting = lifting_2d();

    // With S = sin(2 pi x) sin(2 pi y) and P = r^2 - 1/16 the solution is
    // u* = S P / kappa, hence kappa grad u* = grad(S P) independently of the
    // material, q* = -grad(S P) and f = -Laplace(S P).
    auto sp = [](const Vector& x, double& S, double& P, Vector& gS, Vector& gP) {
        const double sx = std::sin(kTwoPi * x(0)), sy = std::sin(kTwoPi * x(1));
        const double cx = std::cos(kTwoPi * x(0)), cy = std::cos(kTwoPi * x(1));
        S = sx * sy;
        P = (x(0) - 0.5) * (x(0) - 0.5) + (x(1) - 0.5) * (x(1) - 0.5) - 1.0 / 16.0;
        gS.resize(2);
        gS(0) = kTwoPi * cx * sy;
        gS(1) = kTwoPi * sx * cy;
        gP.resize(2);
        gP(0) = 2.0 * (x(0) - 0.5);
        gP(1) = 2.0 * (x(1) - 0.5);
    };

    p.source = [sp](const Vector& x) {
        double S, P;
        Vector gS, gP;
        sp(x, S, P, gS, gP);
        // -Laplace(S P) = 8 pi^2 S P - 2 grad S . grad P - 4 S
        return 8.0 * kPi * kPi * S * P - 2.0 * gS.dot(gP) - 4.0 * S;
    };

    auto kappa = p.kappa;
    ExactSolution ex;
    ex.u = [sp, kappa](const Vector& x) {
        double S, P;
        Vector gS, gP;
        sp(x, S, P, gS, gP);
        return S * P / kappa(x);
    };
    ex.grad_u = [sp, kappa](const Vector& x) {
        double S, P;
        Vector gS, gP;
        sp(x, S, P, gS, gP);
        return Vector((gS * P + S * gP) / kappa(x));
    };
    ex.q = [sp](const Vector& x) {
        double S, P;
        Vector gS, gP;
        sp(x, S, P, gS, gP);
        return Vector(-(gS * P + S * gP));
    };
    ex.div_q = p.source;
    p.exact = std::move(ex);
    return p;
}

ProblemSpec problem_plane_2d() {
    ProblemSpec p;
    p.id = "plane2d";
    p.box = Box::unit_square();
    p.kappa.regions.push_back({[](const Vector& x) { return x(0) <= 0.5; }, 1.0});
    p.kappa.default_value = 3.0;
    p.lifting = lifting_2d();

    auto kappa = p.kappa;
    p.source = [kappa](const Vector& x) {
        // f = kappa pi^2 sin(pi y) (5 cos(2 pi x) - 1)
        return kappa(x) * kPi * kPi * std::sin(kPi * x(1)) * (5.0 * std::cos(kTwoPi * x(0)) - 1.0);
    };

    ExactSolution ex;
    ex.u = [](const Vector& x) {
        return (std::cos(kTwoPi * x(0)) - 1.0) * std::sin(kPi * x(1));
    };
    ex.grad_u = [](const Vector& x) {
        Vector g(2);
        g(0) = -kTwoPi * std::sin(kTwoPi * x(0)) * std::sin(kPi * x(1));
        g(1) = (std::cos(kTwoPi * x(0)) - 1.0) * kPi * std::cos(kPi * x(1));
        return g;
    };
    ex.q = [kappa](const Vector& x) {
        Vector q(2);
        const double k = kappa(x);
        q(0) = k * kTwoPi * std::sin(kTwoPi * x(0)) * std::sin(kPi * x(1));
        q(1) = -k * (std::cos(kTwoPi * x(0)) - 1.0) * kPi * std::cos(kPi * x(1));
        return q;
    };
    ex.div_q = p.source;
    p.exact = std::move(ex);
    return p;
}

ProblemSpec make_problem(const std::string& id, double kappa0) {
    if (id == "smooth1d") return problem_smooth_1d();
    if (id == "interface1d") return problem_interface_1d(kappa0);
    if (id == "circle2d") return problem_circle_2d();
    if (id == "plane2d") return problem_plane_2d();
    throw std::invalid_argument("make_problem: unknown problem id '" + id + "'");
}

} // namespace fosls
