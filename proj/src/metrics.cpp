#include "fosls/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fosls {

namespace {
constexpr Eigen::Index kChunk = 32768;
}

FineEvaluation evaluate_fine(const Network& net, const ProblemSpec& problem,
                             const Coefficients& c, double poincare,
                             const QuadratureRule& rule) {
    const int d = net.input_dim;
    const int n_L = net.output_dim();
    const bool has_flux = c.c_q.size() > 0;
    if (has_flux && c.c_q.size() != static_cast<Eigen::Index>(d) * n_L)
        throw std::invalid_argument("evaluate_fine: flux coefficient size mismatch");

    FineEvaluation out;
    out.poincare = poincare;
    out.has_exact = problem.exact.has_value();
    out.has_flux = has_flux;
    const double cl = 2.0 * poincare * poincare;

    Vector x(d);
    for (Eigen::Index start = 0; start < rule.size(); start += kChunk) {
        const Eigen::Index len = std::min(kChunk, rule.size() - start);
        QuadratureRule sub;
        sub.kind = rule.kind;
        sub.points = rule.points.middleRows(start, len);
        sub.weights = rule.weights.segment(start, len);

        const SpanningBatch batch = make_spanning_batch(net, problem, std::move(sub), false);
        const SolutionFields sol = evaluate_solution(batch, has_flux ? c
                                                                     : Coefficients{c.c_u, Vector::Zero(static_cast<Eigen::Index>(d) * n_L)});

        for (Eigen::Index i = 0; i < len; ++i) {
            const double w = batch.rule.weights(i);
            const double kap = batch.kappa(i);
            const double f = batch.source(i);

            double first = 0.0, gradsq = 0.0;
            for (int k = 0; k < d; ++k) {
                const double r1 = sol.q[k](i) / std::sqrt(kap) + std::sqrt(kap) * sol.grad_u[k](i);
                first += r1 * r1;
                gradsq += sol.grad_u[k](i) * sol.grad_u[k](i);
            }
            const double r2 = sol.div_q(i) - f;
            out.loss += w * (first + cl * r2 * r2);
            out.loss_std += w * (first + r2 * r2);
            out.ritz_energy += w * (0.5 * kap * gradsq - f * sol.u(i));

            if (out.has_exact) {
                x = batch.rule.points.row(i).transpose();
                const Vector gu_ex = problem.exact->grad_u(x);
                const Vector q_ex = problem.exact->q(x);
                const double divq_ex = problem.exact->div_q(x);
                const double u_ex = problem.exact->u(x);

                double eu2 = 0.0, eq2 = 0.0, gu_ex2 = 0.0, q_ex2 = 0.0, eu_std2 = 0.0,
                       eq_std2 = 0.0, gradsq_ex = 0.0;
                for (int k = 0; k < d; ++k) {
                    const double eg = sol.grad_u[k](i) - gu_ex(k);
                    const double eq = sol.q[k](i) - q_ex(k);
                    eu2 += eg * eg;
                    eq2 += eq * eq;
                    gu_ex2 += gu_ex(k) * gu_ex(k);
                    q_ex2 += q_ex(k) * q_ex(k);
                    eu_std2 += eg * eg;
                    eq_std2 += eq * eq;
                    gradsq_ex += gu_ex(k) * gu_ex(k);
                }
                const double ediv = sol.div_q(i) - divq_ex;
                out.err_u2 += w * kap * eu2;
                out.err_q2 += w * eq2 / kap;
                out.err_div2 += w * ediv * ediv;
                out.nrm_u2 += w * kap * gu_ex2;
                out.nrm_q2 += w * q_ex2 / kap;
                out.nrm_div2 += w * divq_ex * divq_ex;
                out.err_std2 += w * (eu_std2 + eq_std2 + ediv * ediv);
                out.nrm_std2 += w * (gu_ex2 + q_ex2 + divq_ex * divq_ex);
                out.ritz_energy_exact += w * (0.5 * kap * gradsq_ex - f * u_ex);
            }
        }
    }
    return out;
}

ErrorReport error_report(const FineEvaluation& fine) {
    if (!fine.has_exact)
        throw std::invalid_argument("error_report: problem has no exact solution bundle");
    ErrorReport rep;
    rep.poincare = fine.poincare;
    rep.loss_fine = fine.loss;
    if (!(fine.nrm_u2 > 0.0) || (fine.has_flux && !(fine.nrm_hdivk2() > 0.0)))
        throw std::runtime_error("error_report: exact norm vanishes");
    rep.rel_u = std::sqrt(fine.err_u2 / fine.nrm_u2);
    rep.rel_q = fine.has_flux ? std::sqrt(fine.err_hdivk2() / fine.nrm_hdivk2())
                              : std::numeric_limits<double>::quiet_NaN();
    rep.rel_total = std::sqrt(fine.err_total2() / fine.nrm_total2());
    const double err2 = fine.err_total2();
    rep.ratio = err2 > 0.0 ? std::sqrt(fine.loss / err2)
                           : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

ErrorReport energy_errors(const DiscreteSolution& sol, const ProblemSpec& problem,
                          double poincare, const QuadratureRule& fine_rule) {
    return error_report(evaluate_fine(sol.net, problem, sol.coefficients, poincare, fine_rule));
}

double robustness_ratio(const ErrorReport& report) { return report.ratio; }

double standard_ratio(const FineEvaluation& fine) {
    if (!(fine.err_std2 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(fine.loss_std / fine.err_std2);
}

double tv_of_derivative(const std::function<double(double)>& e, double window_lo,
                        double window_hi, int grid_nodes,
                        const std::optional<GradientJump>& jump) {
    if (!(window_hi > window_lo))
        throw std::invalid_argument("tv_of_derivative: empty window");
    if (grid_nodes < 3) throw std::invalid_argument("tv_of_derivative: need at least 3 nodes");
    const double h = (window_hi - window_lo) / grid_nodes;
    // Half-step offset keeps samples off breaking points.
    std::vector<double> values(static_cast<std::size_t>(grid_nodes));
    for (int i = 0; i < grid_nodes; ++i)
        values[static_cast<std::size_t>(i)] = e(window_lo + (i + 0.5) * h);

    std::vector<double> slopes(static_cast<std::size_t>(grid_nodes - 1));
    for (int i = 0; i + 1 < grid_nodes; ++i)
        slopes[static_cast<std::size_t>(i)] =
            (values[static_cast<std::size_t>(i + 1)] - values[static_cast<std::size_t>(i)]) / h;

    // Slope-change terms touching the jump location are replaced by the net
    // slope change across the touched block with the known jump removed.
    int touch_lo = grid_nodes, touch_hi = -1;  // slope-difference indices i: s_i - s_{i-1}
    if (jump) {
        for (int i = 1; i + 1 < grid_nodes; ++i) {
            // s_i - s_{i-1} spans points x_{i-1}..x_{i+1}
            const double span_lo = window_lo + (i - 0.5) * h;
            const double span_hi = window_lo + (i + 1.5) * h;
            if (jump->location >= span_lo && jump->location <= span_hi) {
                touch_lo = std::min(touch_lo, i);
                touch_hi = std::max(touch_hi, i);
            }
        }
    }

    double tv = 0.0;
    for (int i = 1; i + 1 < grid_nodes; ++i) {
        if (i >= touch_lo && i <= touch_hi) continue;
        tv += std::abs(slopes[static_cast<std::size_t>(i)] -
                       slopes[static_cast<std::size_t>(i - 1)]);
    }
    if (touch_hi >= touch_lo)
        tv += std::abs(slopes[static_cast<std::size_t>(touch_hi)] -
                       slopes[static_cast<std::size_t>(touch_lo - 1)] - jump->magnitude);
    return tv;
}

double tv_gradient_error(const DiscreteSolution& sol, const ProblemSpec& problem,
                         double window_lo, double window_hi, int grid_nodes) {
    if (sol.net.input_dim != 1)
        throw std::invalid_argument("tv_gradient_error: 1D solutions only");
    if (!problem.exact)
        throw std::invalid_argument("tv_gradient_error: problem has no exact solution");
    if (window_lo < problem.box.lower(0) || window_hi > problem.box.upper(0))
        throw std::invalid_argument("tv_gradient_error: window outside the domain");
    auto err = [&](double x) {
        Vector p(1);
        p(0) = x;
        return problem.exact->u(p) - sol.u(p);
    };

    // e' inherits the exact gradient's interface jump (the approximant's
    // gradient is continuous); the L1 norm excludes that delta.
    std::optional<GradientJump> jump;
    for (double x0 : problem.interface_points) {
        if (x0 <= window_lo || x0 >= window_hi) continue;
        const double delta = 1e-9;
        Vector xp(1), xm(1);
        xp(0) = x0 + delta;
        xm(0) = x0 - delta;
        const double magnitude = problem.exact->grad_u(xp)(0) - problem.exact->grad_u(xm)(0);
        if (jump)
            throw std::invalid_argument(
                "tv_gradient_error: multiple interfaces inside the window are not supported");
        jump = GradientJump{x0, magnitude};
    }
    return tv_of_derivative(err, window_lo, window_hi, grid_nodes, jump);
}

} // namespace fosls
