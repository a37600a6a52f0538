#ifndef FOSLS_SOLUTION_HPP
#define FOSLS_SOLUTION_HPP

#include "fosls/assembly.hpp"

namespace fosls {

// Trained pair (u, q) = (sum c^u_i phi_i, sum c^q_i tau_i); carries the
// lifting so it can be evaluated standalone at any domain point.
struct DiscreteSolution {
    Network net;
    Coefficients coefficients;
    double poincare = 1.0;
    std::string problem_id;
    Lifting lifting;

    double u(const Vector& x) const;
    Vector grad_u(const Vector& x) const;
    Vector q(const Vector& x) const;
    double div_q(const Vector& x) const;
};

} // namespace fosls

#endif
