#include "fosls/assembly.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fosls {

SpanningBatch make_spanning_batch(const Network& net, const ProblemSpec& problem,
                                  QuadratureRule rule, bool keep_caches) {
    const int d = net.input_dim;
    if (rule.dim() != d)
        throw std::invalid_argument("make_spanning_batch: rule dimension mismatch");

    SpanningBatch batch;
    batch.dim = d;
    batch.n_L = net.output_dim();
    batch.eval = forward_batch(net, rule.points, keep_caches);

    const Eigen::Index n_pts = rule.size();
    batch.gd.resize(n_pts);
    batch.gd_grad.resize(n_pts, d);
    batch.kappa.resize(n_pts);
    batch.source.resize(n_pts);
    Vector x(d);
    for (Eigen::Index i = 0; i < n_pts; ++i) {
        x = rule.points.row(i).transpose();
        batch.gd(i) = problem.lifting.value(x);
        batch.gd_grad.row(i) = problem.lifting.gradient(x).transpose();
        batch.kappa(i) = problem.kappa(x);
        batch.source(i) = problem.source(x);
    }
    if (!(batch.kappa.array() > 0.0).all())
        throw std::runtime_error("make_spanning_batch: kappa must be positive at all points");

    batch.phi = batch.eval.values.array().colwise() * batch.gd.array();
    for (int k = 0; k < d; ++k)
        batch.grad_phi[k] = (batch.eval.jac[k].array().colwise() * batch.gd.array() +
                             batch.eval.values.array().colwise() * batch.gd_grad.col(k).array())
                                .matrix();

    batch.rule = std::move(rule);

    if (!batch.eval.values.allFinite())
        throw std::runtime_error("make_spanning_batch: non-finite network value at a quadrature point");
    for (int k = 0; k < d; ++k)
        if (!batch.eval.jac[k].allFinite())
            throw std::runtime_error("make_spanning_batch: non-finite network Jacobian at a quadrature point");
    return batch;
}

RawSystem assemble_raw(const SpanningBatch& batch) {
    const int d = batch.dim;
    const int n_L = batch.n_L;
    const Vector& w = batch.rule.weights;

    RawSystem raw;
    raw.dim = d;
    raw.n_L = n_L;
    raw.rule_fingerprint = batch.rule.fingerprint();

    // All blocks are accumulated as (N x n)^T (N x n) products; this matches
    // the per-point outer-product sum and is validated against it in tests.
    raw.Huu = Matrix::Zero(n_L, n_L);
    const Vector wk = (w.array() * batch.kappa.array()).matrix();
    for (int k = 0; k < d; ++k) {
        const Matrix scaled = batch.grad_phi[k].array().colwise() * wk.array();
        raw.Huu.noalias() += batch.grad_phi[k].transpose() * scaled;
    }

    const Matrix v_weighted = batch.eval.values.array().colwise() * w.array();
    for (int k = 0; k < d; ++k)
        raw.Huq[k].noalias() = batch.grad_phi[k].transpose() * v_weighted;

    const Vector winvk = (w.array() / batch.kappa.array()).matrix();
    const Matrix v_invk = batch.eval.values.array().colwise() * winvk.array();
    raw.Vgram.noalias() = batch.eval.values.transpose() * v_invk;

    raw.DivGram = Matrix::Zero(static_cast<Eigen::Index>(d) * n_L,
                               static_cast<Eigen::Index>(d) * n_L);
    for (int k = 0; k < d; ++k) {
        const Matrix dk_weighted = batch.eval.jac[k].array().colwise() * w.array();
        for (int kp = k; kp < d; ++kp) {
            Matrix block = batch.eval.jac[kp].transpose() * dk_weighted;
            raw.DivGram.block(kp * n_L, k * n_L, n_L, n_L) = block;
            if (kp != k)
                raw.DivGram.block(k * n_L, kp * n_L, n_L, n_L) = block.transpose();
        }
    }

    const Vector wf = (w.array() * batch.source.array()).matrix();
    raw.f_div.resize(static_cast<Eigen::Index>(d) * n_L);
    for (int k = 0; k < d; ++k)
        raw.f_div.segment(k * n_L, n_L).noalias() = batch.eval.jac[k].transpose() * wf;

    raw.qf2 = wf.dot(batch.source);

    if (!raw.Huu.allFinite()) throw std::runtime_error("assemble: non-finite entry in H_uu");
    if (!raw.Vgram.allFinite() || !raw.DivGram.allFinite())
        throw std::runtime_error("assemble: non-finite entry in H_qq");
    if (!raw.f_div.allFinite() || !std::isfinite(raw.qf2))
        throw std::runtime_error("assemble: non-finite entry in the load");
    return raw;
}

AssembledSystem combine_system(const RawSystem& raw, double poincare) {
    if (!(poincare > 0.0))
        throw std::invalid_argument("combine_system: Poincare constant must be positive");
    const int d = raw.dim;
    const int n_L = raw.n_L;
    const double cp2 = 2.0 * poincare * poincare;

    AssembledSystem sys;
    sys.poincare = poincare;
    sys.rule_fingerprint = raw.rule_fingerprint;
    sys.H_uu = raw.Huu;
    sys.H_uq.resize(n_L, static_cast<Eigen::Index>(d) * n_L);
    for (int k = 0; k < d; ++k) sys.H_uq.middleCols(k * n_L, n_L) = raw.Huq[k];
    sys.H_qq = cp2 * raw.DivGram;
    for (int k = 0; k < d; ++k)
        sys.H_qq.block(k * n_L, k * n_L, n_L, n_L) += raw.Vgram;
    sys.f_vec = Vector::Zero(sys.n());
    sys.f_vec.tail(sys.n_q()) = cp2 * raw.f_div;
    sys.ell = cp2 * raw.qf2;
    return sys;
}

AssembledSystem assemble(const Network& net, const ProblemSpec& problem,
                         const QuadratureRule& rule, double poincare) {
    return combine_system(assemble_raw(make_spanning_batch(net, problem, rule, false)), poincare);
}

Matrix AssembledSystem::full_matrix() const {
    Matrix H(n(), n());
    H.topLeftCorner(n_u(), n_u()) = H_uu;
    H.topRightCorner(n_u(), n_q()) = H_uq;
    H.bottomLeftCorner(n_q(), n_u()) = H_uq.transpose();
    H.bottomRightCorner(n_q(), n_q()) = H_qq;
    return H;
}

ScaledSystem scale(const AssembledSystem& system, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("scale: epsilon must be positive");
    const Matrix H = system.full_matrix();
    ScaledSystem scaled;
    scaled.D = (H.diagonal().array() + epsilon).sqrt();
    const Vector dinv = scaled.D.cwiseInverse();
    scaled.H_tilde = dinv.asDiagonal() * H * dinv.asDiagonal();
    scaled.f_tilde = dinv.asDiagonal() * system.f_vec;
    scaled.n_u = system.n_u();
    return scaled;
}

Vector Coefficients::stacked() const {
    Vector c(c_u.size() + c_q.size());
    c << c_u, c_q;
    return c;
}

Coefficients Coefficients::split(const Vector& c, Eigen::Index n_u) {
    Coefficients out;
    out.c_u = c.head(n_u);
    out.c_q = c.tail(c.size() - n_u);
    return out;
}

Coefficients solve_ls(const ScaledSystem& scaled, double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("solve_ls: mu must be positive");
    const Eigen::Index n = scaled.H_tilde.rows();
    Matrix A = scaled.H_tilde;
    A.diagonal().array() += mu;

    Eigen::LDLT<Matrix> ldlt(A);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("solve_ls: factorization failed");

    const double fnorm = scaled.f_tilde.norm();
    Vector c_tilde = Vector::Zero(n);
    if (fnorm > 0.0) {
        c_tilde = ldlt.solve(scaled.f_tilde);
        // Fixed-precision iterative refinement; the Tikhonov shift keeps the
        // system solvable but can leave cond ~ n/mu, so a couple of refinement
        // sweeps are needed to meet the residual contract.
        for (int it = 0; it < 8; ++it) {
            const Vector r = scaled.f_tilde - A.selfadjointView<Eigen::Lower>() * c_tilde;
            if (r.norm() <= 1e-12 * fnorm) break;
            c_tilde += ldlt.solve(r);
        }
        const double resid = (scaled.f_tilde - A.selfadjointView<Eigen::Lower>() * c_tilde).norm();
        if (!(resid <= 1e-10 * fnorm)) {
            std::ostringstream os;
            os << "solve_ls: residual " << resid / fnorm << " relative exceeds 1e-10"
               << " (|c~| = " << c_tilde.norm() << ", mu = " << mu
               << "); the scaled system is severely ill-conditioned";
            throw std::runtime_error(os.str());
        }
    }

    const Vector c = scaled.D.cwiseInverse().asDiagonal() * c_tilde;
    return Coefficients::split(c, scaled.n_u);
}

double loss_at(const AssembledSystem& system, const Coefficients& c) {
    const Vector cs = c.stacked();
    if (cs.size() != system.n())
        throw std::invalid_argument("loss_at: coefficient dimension mismatch");
    const double quad = cs.dot(system.full_matrix().selfadjointView<Eigen::Lower>() * cs);
    const double value = quad - 2.0 * cs.dot(system.f_vec) + system.ell;
    if (value < 0.0) {
        const double guard = 1e-12 * system.ell + 1e-13 * (std::abs(quad) + system.ell);
        if (value >= -guard) return 0.0;
        std::ostringstream os;
        os << "loss_at: loss " << value << " below the negativity guard " << -guard
           << "; assembly is inconsistent";
        throw std::runtime_error(os.str());
    }
    return value;
}

SolutionFields evaluate_solution(const SpanningBatch& batch, const Coefficients& c) {
    const int d = batch.dim;
    const int n_L = batch.n_L;
    SolutionFields out;
    out.u.noalias() = batch.phi * c.c_u;
    out.div_q = Vector::Zero(batch.size());
    for (int k = 0; k < d; ++k) {
        out.grad_u[k].noalias() = batch.grad_phi[k] * c.c_u;
        out.q[k].noalias() = batch.eval.values * c.c_q.segment(k * n_L, n_L);
        out.div_q.noalias() += batch.eval.jac[k] * c.c_q.segment(k * n_L, n_L);
    }
    return out;
}

std::string system_to_json(const AssembledSystem& system, const ScaledSystem& scaled,
                           const Coefficients& c) {
    nlohmann::json j;
    auto flat = [](const Matrix& M) {
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(M.size()));
        for (Eigen::Index i = 0; i < M.rows(); ++i)
            for (Eigen::Index jj = 0; jj < M.cols(); ++jj) v.push_back(M(i, jj));
        return v;
    };
    const Matrix H = system.full_matrix();
    j["n_u"] = system.n_u();
    j["n_q"] = system.n_q();
    j["H"] = flat(H);
    j["f"] = std::vector<double>(system.f_vec.data(), system.f_vec.data() + system.f_vec.size());
    j["ell"] = system.ell;
    j["poincare"] = system.poincare;
    j["rule"] = system.rule_fingerprint;
    j["D"] = std::vector<double>(scaled.D.data(), scaled.D.data() + scaled.D.size());
    const Vector cs = c.stacked();
    j["c_star"] = std::vector<double>(cs.data(), cs.data() + cs.size());
    return j.dump(2);
}

} // namespace fosls
