#include "fosls/poincare.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fosls {

Matrix mass_from_batch(const SpanningBatch& batch) {
    const Matrix phi_weighted = batch.phi.array().colwise() * batch.rule.weights.array();
    Matrix M = batch.phi.transpose() * phi_weighted;
    if (!M.allFinite()) throw std::runtime_error("assemble_mass: non-finite entry");
    return M;
}

Matrix assemble_mass(const Network& net, const Lifting& lifting, const QuadratureRule& rule) {
    const Eigen::Index n_pts = rule.size();
    const int d = rule.dim();
    Matrix values(n_pts, net.output_dim());
    Vector gd(n_pts);
    {
        BatchEval eval = forward_batch(net, rule.points, false);
        values = std::move(eval.values);
    }
    Vector x(d);
    for (Eigen::Index i = 0; i < n_pts; ++i) {
        x = rule.points.row(i).transpose();
        gd(i) = lifting.value(x);
    }
    const Matrix phi = values.array().colwise() * gd.array();
    const Matrix phi_weighted = phi.array().colwise() * rule.weights.array();
    Matrix M = phi.transpose() * phi_weighted;
    if (!M.allFinite()) throw std::runtime_error("assemble_mass: non-finite entry");
    return M;
}

PoincareEstimate estimate_poincare(const Matrix& H_uu, const Matrix& M, const Vector& D_u,
                                   double alpha1, double alpha2) {
    if (!(alpha1 > 0.0) || !(alpha2 > 0.0))
        throw std::invalid_argument("estimate_poincare: alpha1, alpha2 must be positive");
    const Eigen::Index n = H_uu.rows();
    if (M.rows() != n || D_u.size() != n)
        throw std::invalid_argument("estimate_poincare: dimension mismatch");

    const Vector dinv = D_u.cwiseInverse();
    const Matrix H_scaled = dinv.asDiagonal() * H_uu * dinv.asDiagonal();
    const Matrix M_scaled = dinv.asDiagonal() * M * dinv.asDiagonal();

    auto smallest = [&](double a1, double a2) {
        Matrix A = H_scaled;
        Matrix B = M_scaled;
        A.diagonal().array() += a1;
        B.diagonal().array() += a2;
        Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(A, B, Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("estimate_poincare: generalized eigensolver did not converge");
        return solver.eigenvalues()(0);
    };

    // Consistency refinement: keep halving while a further halving still moves
    // lambda_min by more than 1%. Adapted spanning sets can be ill-conditioned
    // enough that the starting regularization dominates the true eigenvalue.
    double a1 = alpha1, a2 = alpha2;
    double lambda = smallest(a1, a2);
    bool consistent = false;
    for (int iter = 0; iter < 60 && a1 * 0.5 > 1e-15; ++iter) {
        const double lambda_half = smallest(0.5 * a1, 0.5 * a2);
        consistent = std::abs(lambda_half - lambda) <= 0.01 * std::abs(lambda_half);
        lambda = lambda_half;
        a1 *= 0.5;
        a2 *= 0.5;
        if (consistent) break;
    }

    PoincareEstimate est;
    est.lambda_min = lambda;
    est.alpha1_used = a1;
    est.alpha_consistent = consistent;
    if (!(est.lambda_min > 0.0))
        throw std::runtime_error("estimate_poincare: nonpositive smallest eigenvalue");
    est.value = 1.0 / std::sqrt(est.lambda_min);
    est.running_max = est.value;
    return est;
}

PoincareEstimate estimate_poincare(const Matrix& H_uu, const Matrix& M, double epsilon,
                                   double alpha1, double alpha2) {
    const Vector D_u = (H_uu.diagonal().array() + epsilon).sqrt();
    return estimate_poincare(H_uu, M, D_u, alpha1, alpha2);
}

double oracle_lambda1(double kappa1, double kappa2, double x0) {
    if (!(kappa1 > 0.0) || !(kappa2 > 0.0))
        throw std::invalid_argument("oracle_lambda1: material values must be positive");
    if (!(x0 > 0.0) || !(x0 < 1.0))
        throw std::invalid_argument("oracle_lambda1: interface must be strictly interior");

    const double r1 = x0 / std::sqrt(kappa1);
    const double r2 = (1.0 - x0) / std::sqrt(kappa2);
    const double s1 = std::sqrt(kappa1);
    const double s2 = std::sqrt(kappa2);
    auto F = [&](double s) {
        return s2 * std::sin(r1 * s) * std::cos(r2 * s) + s1 * std::cos(r1 * s) * std::sin(r2 * s);
    };

    // lambda_1 <= max(kappa) pi^2 by Rayleigh monotonicity; scan s = sqrt(lambda)
    // up to 2 pi sqrt(max kappa) with a step resolving the faster oscillation.
    const double s_max = 2.0 * std::numbers::pi * std::sqrt(std::max(kappa1, kappa2));
    const double step = std::numbers::pi / (20.0 * (r1 + r2));
    double lo = step, hi = 0.0;
    double f_lo = F(lo);
    bool bracketed = false;
    for (double s = 2.0 * step; s <= s_max + step; s += step) {
        const double f = F(s);
        if (f == 0.0) return s * s;
        if (f_lo * f < 0.0) {
            hi = s;
            bracketed = true;
            break;
        }
        lo = s;
        f_lo = f;
    }
    if (!bracketed)
        throw std::runtime_error("oracle_lambda1: no sign change found on (0, " +
                                 std::to_string(s_max) + "] in s");

    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = F(mid);
        if (f_mid == 0.0) {
            lo = hi = mid;
            break;
        }
        if (f_lo * f_mid < 0.0) {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
        if (hi - lo <= 1e-13 * hi) break;
    }
    const double s_root = 0.5 * (lo + hi);
    return s_root * s_root;
}

} // namespace fosls
