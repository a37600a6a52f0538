#include "fosls/solution.hpp"

namespace fosls {

double DiscreteSolution::u(const Vector& x) const {
    const SpanningSample s = spanning_sample(net, lifting, x);
    return s.phi.dot(coefficients.c_u);
}

Vector DiscreteSolution::grad_u(const Vector& x) const {
    const SpanningSample s = spanning_sample(net, lifting, x);
    return s.grad_phi.transpose() * coefficients.c_u;
}

Vector DiscreteSolution::q(const Vector& x) const {
    const SpanningSample s = spanning_sample(net, lifting, x);
    const int d = net.input_dim;
    const int n_L = net.output_dim();
    Vector out = Vector::Zero(d);
    if (coefficients.c_q.size() == 0) return out;
    for (int k = 0; k < d; ++k)
        out(k) = s.tau_values.dot(coefficients.c_q.segment(k * n_L, n_L));
    return out;
}

double DiscreteSolution::div_q(const Vector& x) const {
    const SpanningSample s = spanning_sample(net, lifting, x);
    const int d = net.input_dim;
    const int n_L = net.output_dim();
    double out = 0.0;
    if (coefficients.c_q.size() == 0) return out;
    for (int k = 0; k < d; ++k)
        out += s.div_tau.col(k).dot(coefficients.c_q.segment(k * n_L, n_L));
    return out;
}

} // namespace fosls
