#ifndef FOSLS_METRICS_HPP
#define FOSLS_METRICS_HPP

#include "fosls/poincare.hpp"
#include "fosls/solution.hpp"

#include <functional>
#include <optional>

namespace fosls {

// Squared norms and losses of a discrete pair on a deterministic rule,
// evaluated in fixed-size chunks with a fixed accumulation order. The same
// Poincare value weights the loss and the H(div,kappa) norm.
struct FineEvaluation {
    double poincare = 1.0;
    double loss = 0.0;       // robust weighted FOSLS loss
    double loss_std = 0.0;   // first-order-system loss with unit divergence weight
    double err_u2 = 0.0;     // | u - u* |^2 in H^1_{0,kappa}
    double err_q2 = 0.0;     // | q - q* |^2 in (L^2_kappa)^d
    double err_div2 = 0.0;   // | Div(q - q*) |^2 in L^2
    double nrm_u2 = 0.0;     // exact-solution counterparts
    double nrm_q2 = 0.0;
    double nrm_div2 = 0.0;
    double err_std2 = 0.0;   // unweighted H^1_0 x H(div) error
    double nrm_std2 = 0.0;
    double ritz_energy = 0.0;
    double ritz_energy_exact = 0.0;
    bool has_exact = false;
    bool has_flux = true;

    double err_hdivk2() const { return err_q2 + poincare * poincare * err_div2; }
    double nrm_hdivk2() const { return nrm_q2 + poincare * poincare * nrm_div2; }
    double err_total2() const { return err_u2 + err_hdivk2(); }
    double nrm_total2() const { return nrm_u2 + nrm_hdivk2(); }
};

FineEvaluation evaluate_fine(const Network& net, const ProblemSpec& problem,
                             const Coefficients& c, double poincare,
                             const QuadratureRule& rule);

// Relative errors in the weighted energy spaces.
struct ErrorReport {
    double rel_u = 0.0;
    double rel_q = 0.0;
    double rel_total = 0.0;
    double loss_fine = 0.0;
    double ratio = 0.0;  // sqrt(loss)/|||e|||; NaN when the error vanishes
    double poincare = 1.0;
};

ErrorReport error_report(const FineEvaluation& fine);

ErrorReport energy_errors(const DiscreteSolution& sol, const ProblemSpec& problem,
                          double poincare, const QuadratureRule& fine_rule);

// sqrt(loss)/|||e|||, in [sqrt(1/8), sqrt(2)] for the robust pair when the
// true constant is used.
double robustness_ratio(const ErrorReport& report);
constexpr double robustness_lower_bound() { return 0.35355339059327373; }  // sqrt(1/8)
constexpr double robustness_upper_bound() { return 1.4142135623730951; }   // sqrt(2)

// Ratio of the standard (unweighted) loss to the unweighted norm, used to
// contrast the non-robust formulation across material regimes.
double standard_ratio(const FineEvaluation& fine);

// Known jump of e' at a point (the exact gradient's discontinuity across a
// material interface; the approximant's gradient is continuous).
struct GradientJump {
    double location = 0.0;
    double magnitude = 0.0;  // e'(location+) - e'(location-)
};

// Total variation of e' on the window: the L1 norm of the discrete second
// difference of e on a uniform grid offset by half a step. The L1 norm sees
// only the absolutely continuous part of e'', so when e' has a known jump the
// second difference straddling it is corrected by the jump; an ideal
// non-oscillatory transition layer then contributes exactly the jump height.
double tv_of_derivative(const std::function<double(double)>& e, double window_lo,
                        double window_hi, int grid_nodes,
                        const std::optional<GradientJump>& jump = std::nullopt);

// TV of the gradient error of a 1D solution against the exact one; the
// problem's interface points inside the window supply the jump corrections.
double tv_gradient_error(const DiscreteSolution& sol, const ProblemSpec& problem,
                         double window_lo, double window_hi, int grid_nodes);

} // namespace fosls

#endif
