#ifndef FOSLS_POINCARE_HPP
#define FOSLS_POINCARE_HPP

#include "fosls/assembly.hpp"

namespace fosls {

// Discrete energy-norm Poincare constant C = lambda_min^{-1/2} of the pencil
// H^{uu} a = lambda M a over the current trial space. The discrete value is a
// lower bound of the continuous constant, so training keeps a running max.
struct PoincareEstimate {
    double value = 0.0;
    double lambda_min = 0.0;
    int iteration = 0;
    double running_max = 0.0;
    double alpha1_used = 0.0;      // regularization after consistency refinement
    bool alpha_consistent = true;  // halving alpha moved lambda by <= 1%
};

// Mass matrix M_ij = int phi_i phi_j on the rule.
Matrix assemble_mass(const Network& net, const Lifting& lifting, const QuadratureRule& rule);
Matrix mass_from_batch(const SpanningBatch& batch);

// Smallest eigenvalue of the regularized scaled pencil
//   (H~ + alpha1 I) a~ = lambda (M~ + alpha2 I) a~,
// with H~ = D^{-1} H D^{-1}, M~ = D^{-1} M D^{-1} and D the u-block of the
// assembly scaling. The given (alpha1, alpha2) are starting values: they are
// halved jointly until the smallest eigenvalue becomes insensitive to a
// further halving (<= 1% change), since an adapted basis can be ill enough
// conditioned that the default regularization biases lambda_min.
PoincareEstimate estimate_poincare(const Matrix& H_uu, const Matrix& M, const Vector& D_u,
                                   double alpha1, double alpha2);

// Convenience: D_u built from diag(H_uu) with the assembly epsilon.
PoincareEstimate estimate_poincare(const Matrix& H_uu, const Matrix& M, double epsilon,
                                   double alpha1, double alpha2);

// Smallest positive root lambda_1 of the two-material transcendental equation
//   sqrt(k2) tan(sqrt(lambda/k1) x0) + sqrt(k1) tan(sqrt(lambda/k2) (1-x0)) = 0
// on (0,1). Root-finding is performed on the de-poled characteristic
//   F(s) = sqrt(k2) sin(a1) cos(a2) + sqrt(k1) cos(a1) sin(a2),
// a1 = s x0 / sqrt(k1), a2 = s (1-x0) / sqrt(k2), s = sqrt(lambda), whose
// positive zeros are exactly the eigenvalues (including the tangent-pole
// crossings of the raw form).
double oracle_lambda1(double kappa1, double kappa2, double x0);

} // namespace fosls

#endif
