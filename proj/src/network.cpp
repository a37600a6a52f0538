#include "fosls/network.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace fosls {

namespace {

using Array = Eigen::ArrayXXd;

// sigma, sigma' and sigma'' evaluated entrywise on the pre-activations.
struct ActivationTriplet {
    Array value;
    Array d1;
    Array d2;
};

ActivationTriplet evaluate_activation(Activation act, double m, const Matrix& pre) {
    ActivationTriplet out;
    const Array a = pre.array();
    if (act == Activation::ReQU) {
        const Array ap = a.max(0.0);
        out.value = ap.square();
        out.d1 = 2.0 * ap;
        // sigma'' = 2 on {a > 0}, taken as 0 at exactly 0
        out.d2 = (a > 0.0).cast<double>() * 2.0;
    } else {
        const Array t = (m * a).tanh();
        const Array sech2 = 1.0 - t.square();
        out.value = t;
        out.d1 = m * sech2;
        out.d2 = -2.0 * m * m * t * sech2;
    }
    return out;
}

// Derivatives of sigma and sigma' with respect to the tanh slope m.
void activation_m_derivatives(double m, const Matrix& pre, Array& dvalue_dm, Array& dd1_dm) {
    const Array a = pre.array();
    const Array t = (m * a).tanh();
    const Array sech2 = 1.0 - t.square();
    dvalue_dm = a * sech2;
    dd1_dm = sech2 * (1.0 - 2.0 * m * a * t);
}

} // namespace

std::string activation_name(Activation a) {
    return a == Activation::ReQU ? "requ" : "scaled_tanh";
}

Activation parse_activation(const std::string& name) {
    if (name == "requ") return Activation::ReQU;
    if (name == "scaled_tanh" || name == "tanh") return Activation::ScaledTanh;
    if (name == "relu")
        throw std::invalid_argument(
            "activation 'relu' is not admissible: parameter derivatives of the loss would be "
            "distributional; use 'requ' or 'scaled_tanh'");
    throw std::invalid_argument("unknown activation '" + name + "'");
}

int Network::parameter_count() const {
    int n = 0;
    for (const auto& layer : layers)
        n += static_cast<int>(layer.W.size() + layer.b.size());
    if (has_trainable_m()) ++n;
    return n;
}

void Network::check_finite() const {
    for (const auto& layer : layers)
        if (!layer.W.allFinite() || !layer.b.allFinite())
            throw std::runtime_error("Network: non-finite parameter");
    if (!std::isfinite(m)) throw std::runtime_error("Network: non-finite tanh slope");
}

ParameterGradient ParameterGradient::zeros_like(const Network& net) {
    ParameterGradient g;
    g.layers.reserve(net.layers.size());
    for (const auto& layer : net.layers)
        g.layers.push_back({Matrix::Zero(layer.W.rows(), layer.W.cols()),
                            Vector::Zero(layer.b.size())});
    g.dm = 0.0;
    return g;
}

double ParameterGradient::squared_norm() const {
    double s = dm * dm;
    for (const auto& layer : layers)
        s += layer.W.squaredNorm() + layer.b.squaredNorm();
    return s;
}

Vector flatten_parameters(const Network& net) {
    Vector theta(net.parameter_count());
    Eigen::Index pos = 0;
    for (const auto& layer : net.layers) {
        for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
            for (Eigen::Index j = 0; j < layer.W.cols(); ++j) theta(pos++) = layer.W(i, j);
        theta.segment(pos, layer.b.size()) = layer.b;
        pos += layer.b.size();
    }
    if (net.has_trainable_m()) theta(pos++) = net.m;
    return theta;
}

void unflatten_parameters(Network& net, const Vector& theta) {
    Eigen::Index pos = 0;
    for (auto& layer : net.layers) {
        for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
            for (Eigen::Index j = 0; j < layer.W.cols(); ++j) layer.W(i, j) = theta(pos++);
        layer.b = theta.segment(pos, layer.b.size());
        pos += layer.b.size();
    }
    if (net.has_trainable_m()) net.m = theta(pos++);
    if (pos != theta.size())
        throw std::invalid_argument("unflatten_parameters: size mismatch");
}

Vector flatten_gradient(const Network& net, const ParameterGradient& grad) {
    Vector g(net.parameter_count());
    Eigen::Index pos = 0;
    for (const auto& layer : grad.layers) {
        for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
            for (Eigen::Index j = 0; j < layer.W.cols(); ++j) g(pos++) = layer.W(i, j);
        g.segment(pos, layer.b.size()) = layer.b;
        pos += layer.b.size();
    }
    if (net.has_trainable_m()) g(pos++) = grad.dm;
    return g;
}

BatchEval forward_batch(const Network& net, const Matrix& points, bool keep_caches) {
    net.check_finite();
    const int d = net.input_dim;
    if (points.cols() != d)
        throw std::invalid_argument("forward_batch: point dimension mismatch");
    const Eigen::Index n_pts = points.rows();

    BatchEval eval;
    eval.dim = d;
    if (keep_caches) eval.caches.resize(net.layers.size());

    Matrix value = points;
    std::array<Matrix, 3> jac;
    for (int k = 0; k < d; ++k) {
        jac[k] = Matrix::Zero(n_pts, d);
        jac[k].col(k).setOnes();  // d_k of the identity map
    }

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        Matrix pre = value * layer.W.transpose();
        pre.rowwise() += layer.b.transpose();
        std::array<Matrix, 3> pre_jac;
        for (int k = 0; k < d; ++k) pre_jac[k] = jac[k] * layer.W.transpose();

        const ActivationTriplet act = evaluate_activation(net.activation, net.m, pre);
        if (keep_caches) {
            auto& cache = eval.caches[l];
            cache.pre = pre;
            cache.in_value = std::move(value);
            for (int k = 0; k < d; ++k) cache.in_jac[k] = std::move(jac[k]);
            for (int k = 0; k < d; ++k) cache.pre_jac[k] = pre_jac[k];
        }
        value = act.value.matrix();
        for (int k = 0; k < d; ++k) jac[k] = (act.d1 * pre_jac[k].array()).matrix();
    }

    eval.values = std::move(value);
    for (int k = 0; k < d; ++k) eval.jac[k] = std::move(jac[k]);
    return eval;
}

ParameterGradient backward_batch(const Network& net, const BatchEval& eval,
                                 const Matrix& value_bar,
                                 const std::array<Matrix, 3>& jac_bar) {
    if (eval.caches.size() != net.layers.size())
        throw std::invalid_argument("backward_batch: forward evaluation lacks caches");
    const int d = eval.dim;

    ParameterGradient grad = ParameterGradient::zeros_like(net);
    Matrix vbar = value_bar;
    std::array<Matrix, 3> jbar = jac_bar;

    for (int l = net.depth() - 1; l >= 0; --l) {
        const auto& layer = net.layers[static_cast<std::size_t>(l)];
        const auto& cache = eval.caches[static_cast<std::size_t>(l)];
        const ActivationTriplet act = evaluate_activation(net.activation, net.m, cache.pre);

        // Adjoint of the pre-activation collects the value channel through
        // sigma' and the derivative channel through sigma''.
        Array pre_bar = vbar.array() * act.d1;
        std::array<Matrix, 3> bbar;  // adjoint of B_l^k = (d_k Phi_{l-1}) W_l^T
        for (int k = 0; k < d; ++k) {
            pre_bar += jbar[k].array() * act.d2 * cache.pre_jac[k].array();
            bbar[k] = (jbar[k].array() * act.d1).matrix();
        }

        if (net.has_trainable_m()) {
            Array dvalue_dm, dd1_dm;
            activation_m_derivatives(net.m, cache.pre, dvalue_dm, dd1_dm);
            grad.dm += (vbar.array() * dvalue_dm).sum();
            for (int k = 0; k < d; ++k)
                grad.dm += (jbar[k].array() * dd1_dm * cache.pre_jac[k].array()).sum();
        }

        const Matrix pre_bar_m = pre_bar.matrix();
        auto& glayer = grad.layers[static_cast<std::size_t>(l)];
        glayer.W.noalias() += pre_bar_m.transpose() * cache.in_value;
        for (int k = 0; k < d; ++k)
            glayer.W.noalias() += bbar[k].transpose() * cache.in_jac[k];
        glayer.b += pre_bar_m.colwise().sum().transpose();

        if (l > 0) {
            vbar.noalias() = pre_bar_m * layer.W;
            for (int k = 0; k < d; ++k) jbar[k] = bbar[k] * layer.W;
        }
    }
    return grad;
}

void forward_with_jacobian(const Network& net, const Vector& x, Vector& values, Matrix& jacobian) {
    if (!x.allFinite()) throw std::invalid_argument("forward_with_jacobian: non-finite point");
    BatchEval eval = forward_batch(net, x.transpose(), false);
    values = eval.values.row(0).transpose();
    jacobian.resize(net.output_dim(), net.input_dim);
    for (int k = 0; k < net.input_dim; ++k)
        jacobian.col(k) = eval.jac[k].row(0).transpose();
}

SpanningSample spanning_sample(const Network& net, const Lifting& lifting, const Vector& x) {
    Vector values;
    Matrix jacobian;
    forward_with_jacobian(net, x, values, jacobian);
    const double gd = lifting.value(x);
    const Vector gd_grad = lifting.gradient(x);

    SpanningSample s;
    s.phi = gd * values;
    s.grad_phi = gd * jacobian + values * gd_grad.transpose();
    s.tau_values = values;
    s.div_tau = jacobian;
    return s;
}

ParameterGradient backprop_parameter_gradient(const Network& net, const Lifting& lifting,
                                              const QuadratureRule& rule, const BatchEval& eval,
                                              const SpanningCotangents& cotangents) {
    const Eigen::Index n_pts = rule.size();
    const int d = net.input_dim;
    // Lifting values at the rule points, needed to push phi adjoints onto the
    // raw network channels: phi = g_D Phi, grad phi = g_D dPhi + Phi grad g_D.
    Vector gd(n_pts);
    Matrix gd_grad(n_pts, d);
    Vector x(d);
    for (Eigen::Index i = 0; i < n_pts; ++i) {
        x = rule.points.row(i).transpose();
        gd(i) = lifting.value(x);
        gd_grad.row(i) = lifting.gradient(x).transpose();
    }
    return backprop_parameter_gradient(net, gd, gd_grad, eval, cotangents);
}

ParameterGradient backprop_parameter_gradient(const Network& net, const Vector& gd,
                                              const Matrix& gd_grad, const BatchEval& eval,
                                              const SpanningCotangents& cotangents) {
    const Eigen::Index n_pts = gd.size();
    const int d = net.input_dim;
    const int n = net.output_dim();

    auto check = [](const Matrix& mat, const char* name) {
        if (mat.size() > 0 && !mat.allFinite())
            throw std::invalid_argument(std::string("backprop_parameter_gradient: non-finite cotangent in ") + name);
    };
    check(cotangents.phi_bar, "phi");
    check(cotangents.tau_bar, "tau");
    for (int k = 0; k < d; ++k) {
        check(cotangents.grad_phi_bar[k], "grad_phi");
        check(cotangents.div_tau_bar[k], "div_tau");
    }

    Matrix value_bar = Matrix::Zero(n_pts, n);
    std::array<Matrix, 3> jac_bar;
    for (int k = 0; k < d; ++k) jac_bar[k] = Matrix::Zero(n_pts, n);

    if (cotangents.tau_bar.size() > 0) value_bar += cotangents.tau_bar;
    if (cotangents.phi_bar.size() > 0)
        value_bar.array() += cotangents.phi_bar.array().colwise() * gd.array();
    for (int k = 0; k < d; ++k) {
        if (cotangents.grad_phi_bar[k].size() > 0) {
            value_bar.array() +=
                cotangents.grad_phi_bar[k].array().colwise() * gd_grad.col(k).array();
            jac_bar[k].array() += cotangents.grad_phi_bar[k].array().colwise() * gd.array();
        }
        if (cotangents.div_tau_bar[k].size() > 0) jac_bar[k] += cotangents.div_tau_bar[k];
    }

    return backward_batch(net, eval, value_bar, jac_bar);
}

Network init_1d(int n1, Activation activation) {
    if (n1 < 1) throw std::invalid_argument("init_1d: n1 must be >= 1");
    Network net;
    net.activation = activation;
    net.input_dim = 1;
    Network::Layer layer;
    layer.W.resize(n1, 1);
    layer.b.resize(n1);
    for (int i = 1; i <= n1; ++i) {
        const double sign = (i % 2 == 1) ? 1.0 : -1.0;  // (-1)^{i+1}
        layer.W(i - 1, 0) = sign;
        layer.b(i - 1) = -sign * static_cast<double>(i) / (n1 + 1);
    }
    net.layers.push_back(std::move(layer));
    return net;
}

Network init_tensor(int n_per_axis, int d, Activation activation) {
    if (n_per_axis < 1) throw std::invalid_argument("init_tensor: n_per_axis must be >= 1");
    if (d < 2 || d > 3) throw std::invalid_argument("init_tensor: dimension must be 2 or 3");
    Network net;
    net.activation = activation;
    net.input_dim = d;
    Network::Layer layer;
    layer.W = Matrix::Zero(static_cast<Eigen::Index>(d) * n_per_axis, d);
    layer.b.resize(static_cast<Eigen::Index>(d) * n_per_axis);
    for (int axis = 0; axis < d; ++axis) {
        for (int i = 1; i <= n_per_axis; ++i) {
            const Eigen::Index row = static_cast<Eigen::Index>(axis) * n_per_axis + (i - 1);
            const double sign = (i % 2 == 1) ? 1.0 : -1.0;
            layer.W(row, axis) = sign;
            layer.b(row) = -sign * static_cast<double>(i) / (n_per_axis + 1);
        }
    }
    net.layers.push_back(std::move(layer));
    return net;
}

Network init_identity_tail(Network net, int total_layers) {
    if (net.layers.empty())
        throw std::invalid_argument("init_identity_tail: first layer must be initialized");
    if (total_layers < static_cast<int>(net.layers.size()))
        throw std::invalid_argument("init_identity_tail: cannot shrink the network");
    const Eigen::Index width = net.layers.front().b.size();
    for (std::size_t l = 1; l < net.layers.size(); ++l)
        if (net.layers[l].b.size() != width)
            throw std::invalid_argument("init_identity_tail: hidden widths must all be equal");
    for (int l = static_cast<int>(net.layers.size()); l < total_layers; ++l)
        net.layers.push_back({Matrix::Identity(width, width), Vector::Zero(width)});
    for (std::size_t l = 1; l < net.layers.size(); ++l) {
        net.layers[l].W = Matrix::Identity(width, width);
        net.layers[l].b = Vector::Zero(width);
    }
    return net;
}

void apply_jitter(Network& net, double amplitude, std::uint64_t seed) {
    if (amplitude == 0.0) return;
    SplitMix64 g(seed);
    for (auto& layer : net.layers) {
        for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
            for (Eigen::Index j = 0; j < layer.W.cols(); ++j)
                layer.W(i, j) += amplitude * (2.0 * g.uniform01() - 1.0);
        for (Eigen::Index i = 0; i < layer.b.size(); ++i)
            layer.b(i) += amplitude * (2.0 * g.uniform01() - 1.0);
    }
}

std::string network_to_json(const Network& net) {
    nlohmann::json j;
    j["activation"] = activation_name(net.activation);
    j["input_dim"] = net.input_dim;
    j["m"] = net.m;
    j["layers"] = nlohmann::json::array();
    for (const auto& layer : net.layers) {
        nlohmann::json jl;
        jl["rows"] = layer.W.rows();
        jl["cols"] = layer.W.cols();
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.W.size()));
        for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
            for (Eigen::Index c = 0; c < layer.W.cols(); ++c) w.push_back(layer.W(i, c));
        jl["W"] = w;
        jl["b"] = std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size());
        j["layers"].push_back(std::move(jl));
    }
    return j.dump(2);
}

Network network_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    Network net;
    net.activation = parse_activation(j.at("activation").get<std::string>());
    net.input_dim = j.at("input_dim").get<int>();
    net.m = j.at("m").get<double>();
    for (const auto& jl : j.at("layers")) {
        Network::Layer layer;
        const auto rows = jl.at("rows").get<Eigen::Index>();
        const auto cols = jl.at("cols").get<Eigen::Index>();
        const auto w = jl.at("W").get<std::vector<double>>();
        const auto b = jl.at("b").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
            static_cast<Eigen::Index>(b.size()) != rows)
            throw std::invalid_argument("network_from_json: layer size mismatch");
        layer.W.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index c = 0; c < cols; ++c)
                layer.W(i, c) = w[static_cast<std::size_t>(i * cols + c)];
        layer.b = Eigen::Map<const Vector>(b.data(), rows);
        net.layers.push_back(std::move(layer));
    }
    net.check_finite();
    return net;
}

} // namespace fosls
