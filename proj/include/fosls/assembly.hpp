#ifndef FOSLS_ASSEMBLY_HPP
#define FOSLS_ASSEMBLY_HPP

#include "fosls/network.hpp"

#include <array>
#include <string>

namespace fosls {

// Spanning functions, problem fields and network intermediates evaluated at
// all points of one quadrature rule. This is the shared input of assembly,
// the parameter gradient and the error evaluation.
struct SpanningBatch {
    QuadratureRule rule;
    BatchEval eval;                   // values = Phi_L, jac[k] = d_k Phi_L
    Matrix phi;                       // N x n_u, g_D Phi_L
    std::array<Matrix, 3> grad_phi;   // N x n_u per direction
    Vector gd;                        // lifting values
    Matrix gd_grad;                   // N x d lifting gradients
    Vector kappa;                     // coefficient at the points
    Vector source;                    // f at the points
    int dim = 1;
    int n_L = 0;

    Eigen::Index size() const { return rule.size(); }
};

SpanningBatch make_spanning_batch(const Network& net, const ProblemSpec& problem,
                                  QuadratureRule rule, bool keep_caches);

// Quadrature Gram pieces that do not depend on the Poincare constant, so the
// constant can be updated from the same batch before the blocks are combined.
struct RawSystem {
    Matrix Huu;                      // int kappa grad phi_i . grad phi_j
    std::array<Matrix, 3> Huq;       // per direction k: int d_k phi_i Phi_j
    Matrix Vgram;                    // int kappa^{-1} Phi_i Phi_j
    Matrix DivGram;                  // n_q x n_q, int (Div tau_i)(Div tau_j)
    Vector f_div;                    // n_q, int f Div tau_j
    double qf2 = 0.0;                // int f^2
    std::string rule_fingerprint;
    int dim = 1;
    int n_L = 0;
};

RawSystem assemble_raw(const SpanningBatch& batch);

// Algebraic loss L(c) = c^T H c - 2 c^T f + ell with the block layout
//   H = [ Huu  Huq ; Huq^T  Hqq ],
// q-indices grouped by direction k, then unit j (tau_{j+(k-1)n_L}).
struct AssembledSystem {
    Matrix H_uu;
    Matrix H_uq;     // n_u x n_q
    Matrix H_qq;     // n_q x n_q, includes the 2 (C_P)^2 divergence term
    Vector f_vec;    // length n, first n_u entries zero
    double ell = 0.0;
    double poincare = 1.0;
    std::string rule_fingerprint;

    Eigen::Index n_u() const { return H_uu.rows(); }
    Eigen::Index n_q() const { return H_qq.rows(); }
    Eigen::Index n() const { return n_u() + n_q(); }
    Matrix full_matrix() const;
};

AssembledSystem combine_system(const RawSystem& raw, double poincare);

AssembledSystem assemble(const Network& net, const ProblemSpec& problem,
                         const QuadratureRule& rule, double poincare);

// Diagonal scaling d_i = sqrt(H_ii + epsilon); the scaled matrix has diagonal
// entries bounded by one, hence lambda_max <= n.
struct ScaledSystem {
    Vector D;
    Matrix H_tilde;
    Vector f_tilde;
    Eigen::Index n_u = 0;
};

ScaledSystem scale(const AssembledSystem& system, double epsilon);

struct Coefficients {
    Vector c_u;
    Vector c_q;  // direction-major: entry (k-1) n_L + j multiplies tau_{j+(k-1)n_L}

    Vector stacked() const;
    static Coefficients split(const Vector& c, Eigen::Index n_u);
};

// Tikhonov-regularized solve (H_tilde + mu I) c_tilde = f_tilde by a
// symmetric factorization with iterative refinement; returns the physical
// coefficients c = D^{-1} c_tilde.
Coefficients solve_ls(const ScaledSystem& scaled, double mu);

double loss_at(const AssembledSystem& system, const Coefficients& c);

// Discrete pair (u, q) = (sum c^u_i phi_i, sum c^q_i tau_i) at the batch's
// quadrature points.
struct SolutionFields {
    Vector u;
    std::array<Vector, 3> grad_u;
    std::array<Vector, 3> q;
    Vector div_q;
};

SolutionFields evaluate_solution(const SpanningBatch& batch, const Coefficients& c);

// Debug dump of H, f, ell, D, c* as flat row-major arrays (u-block first,
// then q-blocks by direction, then unit).
std::string system_to_json(const AssembledSystem& system, const ScaledSystem& scaled,
                           const Coefficients& c);

} // namespace fosls

#endif
