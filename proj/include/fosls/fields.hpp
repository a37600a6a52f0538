#ifndef FOSLS_FIELDS_HPP
#define FOSLS_FIELDS_HPP

#include "fosls/geometry.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fosls {

using ScalarField = std::function<double(const Vector&)>;
using VectorField = std::function<Vector(const Vector&)>;

// Piecewise-constant diffusion coefficient. Regions are checked in order and
// the first match wins; membership predicates use closed conditions, so the
// value on an interface is the one of the region listed first. Every value
// must be strictly positive.
struct PiecewiseConstantCoefficient {
    struct Region {
        std::function<bool(const Vector&)> contains;
        double value;
    };
    std::vector<Region> regions;
    double default_value = 1.0;

    double operator()(const Vector& x) const {
        for (const auto& r : regions)
            if (r.contains(x)) return r.value;
        return default_value;
    }

    static PiecewiseConstantCoefficient constant(double value) {
        PiecewiseConstantCoefficient k;
        k.default_value = value;
        return k;
    }
};

// Cutoff g_D: vanishes on the boundary, positive inside, C^{1,1}.
struct Lifting {
    ScalarField value;
    VectorField gradient;
};

// Exact (u*, q*) bundle for error evaluation; q* = -kappa grad u* and
// div q* = f hold piecewise, with one-sided values on interfaces taken from
// the first-matching region.
struct ExactSolution {
    ScalarField u;
    VectorField grad_u;
    VectorField q;
    ScalarField div_q;
};

struct ProblemSpec {
    std::string id;
    Box box;
    PiecewiseConstantCoefficient kappa;
    ScalarField source;
    Lifting lifting;
    std::optional<ExactSolution> exact;
    std::optional<double> poincare_reference;
    // 1D material-interface coordinates (where the exact gradient may jump).
    std::vector<double> interface_points;
};

// kappa = 1, u* = sin(2 pi x) on (0,1); reference Poincare constant 1/pi.
ProblemSpec problem_smooth_1d();

// Two-material problem on (0,1): kappa = kappa0 on (0,1/2), 1 on (1/2,1),
// f = 4 pi^2 sin(2 pi x); u* scales by 1/kappa0 on the left half and the
// flux q* = -2 pi cos(2 pi x) stays smooth.
ProblemSpec problem_interface_1d(double kappa0);

// Circular interface on (0,1)^2: kappa = 1 inside the radius-1/4 disk about
// (1/2,1/2), 3 outside; u* = sin(2 pi x) sin(2 pi y)(r^2 - 1/16)/kappa, so the
// flux is globally smooth while grad u* jumps across the circle.
ProblemSpec problem_circle_2d();

// Planar interface on (0,1)^2: kappa = 1 for x < 1/2, 3 for x > 1/2;
// u* = (cos(2 pi x) - 1) sin(pi y) is smooth, the tangential flux component
// jumps by the coefficient ratio while the normal flux stays continuous.
ProblemSpec problem_plane_2d();

// Lookup by the identifiers used in run configurations.
ProblemSpec make_problem(const std::string& id, double kappa0);

} // namespace fosls

#endif
