#ifndef FOSLS_NETWORK_HPP
#define FOSLS_NETWORK_HPP

#include "fosls/fields.hpp"
#include "fosls/quadrature.hpp"

#include <array>
#include <string>
#include <vector>

namespace fosls {

using Matrix = Eigen::MatrixXd;

// Admissible activations are C^{1,1}_loc; ReLU is rejected at configuration
// time because its parameter derivatives are distributional.
enum class Activation { ReQU, ScaledTanh };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

// Feedforward network Phi_l = sigma(W_l Phi_{l-1} + b_l) whose last hidden
// layer provides the spanning set. For ScaledTanh, sigma(x) = tanh(m x) with
// the slope m a trainable parameter appended to the parameter vector.
struct Network {
    struct Layer {
        Matrix W;  // n_l x n_{l-1}
        Vector b;  // n_l
    };
    std::vector<Layer> layers;
    Activation activation = Activation::ReQU;
    double m = 50.0;
    int input_dim = 1;

    int depth() const { return static_cast<int>(layers.size()); }
    int output_dim() const { return static_cast<int>(layers.back().b.size()); }
    int parameter_count() const;
    bool has_trainable_m() const { return activation == Activation::ScaledTanh; }

    void check_finite() const;
};

// Gradients with the same shapes as the network parameters.
struct ParameterGradient {
    std::vector<Network::Layer> layers;
    double dm = 0.0;

    static ParameterGradient zeros_like(const Network& net);
    double squared_norm() const;
};

// Flat views used by the optimizer; ordering is layer-major (W row-major,
// then b), with m last when trainable.
Vector flatten_parameters(const Network& net);
void unflatten_parameters(Network& net, const Vector& theta);
Vector flatten_gradient(const Network& net, const ParameterGradient& grad);

// Batched evaluation of Phi_L and its spatial Jacobian at N points, keeping
// the per-layer intermediates needed by the reverse pass.
struct BatchEval {
    struct LayerCache {
        Matrix pre;                      // A_l = Phi_{l-1} W_l^T + b_l
        Matrix in_value;                 // Phi_{l-1}
        std::array<Matrix, 3> in_jac;    // d_k Phi_{l-1}
        std::array<Matrix, 3> pre_jac;   // B_l^k = (d_k Phi_{l-1}) W_l^T
    };
    std::vector<LayerCache> caches;      // empty when caches are not requested
    Matrix values;                       // N x n_L
    std::array<Matrix, 3> jac;           // d_k Phi_L, for k < input_dim
    int dim = 1;
};

BatchEval forward_batch(const Network& net, const Matrix& points, bool keep_caches);

// Reverse pass for sum_p [<value_bar, Phi_L> + sum_k <jac_bar_k, d_k Phi_L>],
// propagating the value and spatial-derivative channels jointly (this is
// where sigma'' enters).
ParameterGradient backward_batch(const Network& net, const BatchEval& eval,
                                 const Matrix& value_bar,
                                 const std::array<Matrix, 3>& jac_bar);

// Single-point interface.
void forward_with_jacobian(const Network& net, const Vector& x, Vector& values, Matrix& jacobian);

// Spanning functions at one point under the multiplicative ansatz:
//   phi_j = g_D Phi_L^{(j)},  tau_{j+(k-1)n_L} = Phi_L^{(j)} e_k.
// div_tau(j,k) = d_k Phi_L^{(j)} is the divergence of tau_{j+(k-1)n_L}.
struct SpanningSample {
    Vector phi;        // n_u
    Matrix grad_phi;   // n_u x d
    Vector tau_values; // n_L (shared across the d canonical directions)
    Matrix div_tau;    // n_L x d
};

SpanningSample spanning_sample(const Network& net, const Lifting& lifting, const Vector& x);

// Per-point adjoints matching the SpanningSample fields over a whole rule;
// any matrix may be empty, meaning a zero cotangent.
struct SpanningCotangents {
    Matrix phi_bar;                      // N x n_u
    std::array<Matrix, 3> grad_phi_bar;  // N x n_u per direction
    Matrix tau_bar;                      // N x n_L
    std::array<Matrix, 3> div_tau_bar;   // N x n_L per direction
};

// Gradient of sum_p <cotangent_p, sample_p> with respect to all network
// parameters, given a forward evaluation with caches at the rule's points.
ParameterGradient backprop_parameter_gradient(const Network& net, const Lifting& lifting,
                                              const QuadratureRule& rule, const BatchEval& eval,
                                              const SpanningCotangents& cotangents);

// Variant taking the lifting already evaluated at the points.
ParameterGradient backprop_parameter_gradient(const Network& net, const Vector& gd,
                                              const Matrix& gd_grad, const BatchEval& eval,
                                              const SpanningCotangents& cotangents);

// First hidden layer with weights (-1)^{i+1} and biases (-1)^i i/(n1+1):
// equispaced breaking points i/(n1+1) strictly inside (0,1).
Network init_1d(int n1, Activation activation = Activation::ReQU);

// Tensor-product extension: n_per_axis units per coordinate direction with
// the 1D alternating sign pattern, giving axis-aligned equispaced breaking
// hyperplanes. First-layer width is d * n_per_axis.
Network init_tensor(int n_per_axis, int d, Activation activation = Activation::ReQU);

// Appends (or resets) layers 2..L as identity maps with zero bias; requires
// equal hidden widths.
Network init_identity_tail(Network net, int total_layers);

// Optional seeded uniform perturbation of all parameters (default-off path).
void apply_jitter(Network& net, double amplitude, std::uint64_t seed);

// JSON checkpoint format (row-major weight matrices, activation tag, m).
std::string network_to_json(const Network& net);
Network network_from_json(const std::string& text);

} // namespace fosls

#endif
