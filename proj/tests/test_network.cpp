#include "fosls/network.hpp"
#include "fosls/fields.hpp"

#include <doctest.h>

#include <cmath>

using namespace fosls;

namespace {

Vector pt1(double x) {
    Vector v(1);
    v(0) = x;
    return v;
}

Lifting lifting_of(const ProblemSpec& p) { return p.lifting; }

// theta |-> sum over points of <cotangents, sample fields>, evaluated by
// rebuilding the network from a flat parameter vector; reference for the
// reverse pass.
double cotangent_objective(const Network& proto, const Vector& theta, const Lifting& lifting,
                           const QuadratureRule& rule, const SpanningCotangents& cot) {
    Network net = proto;
    unflatten_parameters(net, theta);
    double acc = 0.0;
    Vector x(net.input_dim);
    for (Eigen::Index i = 0; i < rule.size(); ++i) {
        x = rule.points.row(i).transpose();
        const SpanningSample s = spanning_sample(net, lifting, x);
        if (cot.phi_bar.size() > 0) acc += cot.phi_bar.row(i).dot(s.phi);
        if (cot.tau_bar.size() > 0) acc += cot.tau_bar.row(i).dot(s.tau_values);
        for (int k = 0; k < net.input_dim; ++k) {
            if (cot.grad_phi_bar[k].size() > 0)
                acc += cot.grad_phi_bar[k].row(i).dot(s.grad_phi.col(k));
            if (cot.div_tau_bar[k].size() > 0)
                acc += cot.div_tau_bar[k].row(i).dot(s.div_tau.col(k));
        }
    }
    return acc;
}

Network test_net(int d, int layers, Activation act, std::uint64_t jitter_seed) {
    Network net = (d == 1) ? init_1d(6, act) : init_tensor(3, d, act);
    if (layers > 1) net = init_identity_tail(std::move(net), layers);
    net.m = 2.0;  // moderate slope keeps tanh derivatives well scaled for FD
    apply_jitter(net, 0.15, jitter_seed);
    return net;
}

QuadratureRule random_points_rule(int d, int n, std::uint64_t seed) {
    Box box = (d == 1) ? Box::unit_interval() : Box::unit_square();
    return sample_mc(box, n, seed);
}

} // namespace

TEST_SUITE_BEGIN("network");

TEST_CASE("single ReQU unit value and derivative") {
    Network net;
    net.input_dim = 1;
    net.layers.push_back({Matrix::Constant(1, 1, 1.0), Vector::Constant(1, -0.5)});

    Vector values;
    Matrix jac;
    forward_with_jacobian(net, pt1(0.75), values, jac);
    CHECK(values(0) == doctest::Approx(0.0625).epsilon(1e-15));
    CHECK(jac(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

    forward_with_jacobian(net, pt1(0.25), values, jac);
    CHECK(values(0) == 0.0);
    CHECK(jac(0, 0) == 0.0);
}

TEST_CASE("identity second layer composes ReQU once more") {
    Network one = init_1d(4);
    Network two = init_identity_tail(init_1d(4), 2);
    SplitMix64 rng(3);
    for (int i = 0; i < 5; ++i) {
        const Vector x = pt1(rng.uniform01());
        Vector v1, v2;
        Matrix j1, j2;
        forward_with_jacobian(one, x, v1, j1);
        forward_with_jacobian(two, x, v2, j2);
        for (int u = 0; u < 4; ++u) {
            // Phi_2 = ReQU(Phi_1), d Phi_2 = 2 max(0, Phi_1) dPhi_1
            CHECK(v2(u) == doctest::Approx(std::pow(std::max(0.0, v1(u)), 2)).epsilon(1e-13));
            CHECK(j2(u, 0) ==
                  doctest::Approx(2.0 * std::max(0.0, v1(u)) * j1(u, 0)).epsilon(1e-12));
        }
    }
}

TEST_CASE("1D initialization places equispaced breaking points") {
    for (int n1 : {10, 16}) {
        const Network net = init_1d(n1);
        for (int i = 1; i <= n1; ++i) {
            const double w = net.layers[0].W(i - 1, 0);
            const double b = net.layers[0].b(i - 1);
            CHECK(std::abs(w) == 1.0);
            // sign alternates starting positive
            CHECK(w == ((i % 2 == 1) ? 1.0 : -1.0));
            // pre-activation vanishes at i/(n1+1)
            CHECK(std::abs(w * (static_cast<double>(i) / (n1 + 1)) + b) <= 1e-14);
        }
    }
    const Network net = init_1d(10);
    CHECK(net.layers[0].W(1, 0) == -1.0);
    CHECK(net.layers[0].b(1) == doctest::Approx(2.0 / 11.0).epsilon(1e-15));
}

TEST_CASE("tensor initialization yields axis-aligned breaking lines") {
    const Network net = init_tensor(2, 2);
    REQUIRE(net.layers[0].W.rows() == 4);
    // Units 0,1 break on x = 1/3, 2/3; units 2,3 on y = 1/3, 2/3.
    for (int i = 0; i < 2; ++i) {
        CHECK(net.layers[0].W(i, 1) == 0.0);
        const double root = -net.layers[0].b(i) / net.layers[0].W(i, 0);
        CHECK(root == doctest::Approx((i + 1) / 3.0).epsilon(1e-14));
    }
    for (int i = 2; i < 4; ++i) {
        CHECK(net.layers[0].W(i, 0) == 0.0);
        const double root = -net.layers[0].b(i) / net.layers[0].W(i, 1);
        CHECK(root == doctest::Approx((i - 1) / 3.0).epsilon(1e-14));
    }

    // Each unit is constant along its breaking line's direction.
    Vector x(2);
    x << 0.9, 0.8;
    Vector va;
    Matrix j;
    forward_with_jacobian(net, x, va, j);
    for (int i = 0; i < 2; ++i) CHECK(j(i, 1) == 0.0);
    for (int i = 2; i < 4; ++i) CHECK(j(i, 0) == 0.0);

    const Network wide = init_tensor(16, 2);
    CHECK(wide.layers[0].W.rows() == 32);
}

TEST_CASE("identity tail requires equal widths and resets deep layers") {
    Network net = init_identity_tail(init_1d(16), 2);
    CHECK(net.layers[1].W.isIdentity(0.0));
    CHECK(net.layers[1].b.isZero(0.0));

    Network bad = init_1d(4);
    bad.layers.push_back({Matrix::Zero(3, 4), Vector::Zero(3)});
    CHECK_THROWS_AS(init_identity_tail(std::move(bad), 2), std::invalid_argument);
}

TEST_CASE("spanning functions vanish on the boundary") {
    const ProblemSpec p = problem_smooth_1d();
    Network net = init_identity_tail(init_1d(8), 2);
    apply_jitter(net, 0.2, 99);
    for (double xb : {0.0, 1.0}) {
        const SpanningSample s = spanning_sample(net, lifting_of(p), pt1(xb));
        CHECK(s.phi.cwiseAbs().maxCoeff() <= 1e-14);
    }
    // 2D: 500 boundary points
    const ProblemSpec p2 = problem_circle_2d();
    Network net2 = init_tensor(4, 2);
    apply_jitter(net2, 0.2, 100);
    SplitMix64 rng(17);
    for (int i = 0; i < 500; ++i) {
        Vector x(2);
        const double t = rng.uniform01();
        switch (i % 4) {
            case 0: x << 0.0, t; break;
            case 1: x << 1.0, t; break;
            case 2: x << t, 0.0; break;
            default: x << t, 1.0; break;
        }
        const SpanningSample s = spanning_sample(net2, lifting_of(p2), x);
        CHECK(s.phi.cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("spanning sample hand value") {
    // Unit with breaking point 1/3, evaluated at 2/3 under g_D = x(1-x):
    // phi = g_D(2/3) ReQU(1/3) = (2/9)(1/9) = 2/81.
    Network net;
    net.input_dim = 1;
    net.layers.push_back({Matrix::Constant(1, 1, 1.0), Vector::Constant(1, -1.0 / 3.0)});
    const ProblemSpec p = problem_smooth_1d();
    const SpanningSample s = spanning_sample(net, lifting_of(p), pt1(2.0 / 3.0));
    CHECK(s.phi(0) == doctest::Approx(2.0 / 81.0).epsilon(1e-14));
}

TEST_CASE("spatial Jacobian matches finite differences") {
    for (int d : {1, 2}) {
        for (int layers : {1, 2}) {
            for (Activation act : {Activation::ReQU, Activation::ScaledTanh}) {
                const Network net = test_net(d, layers, act, 7 + d + layers);
                SplitMix64 rng(55);
                const double h = 1e-6;
                for (int trial = 0; trial < 20; ++trial) {
                    Vector x(d);
                    for (int k = 0; k < d; ++k) x(k) = 0.05 + 0.9 * rng.uniform01();
                    Vector v;
                    Matrix jac;
                    forward_with_jacobian(net, x, v, jac);
                    for (int k = 0; k < d; ++k) {
                        Vector xp = x, xm = x;
                        xp(k) += h;
                        xm(k) -= h;
                        Vector vp, vm;
                        Matrix jtmp;
                        forward_with_jacobian(net, xp, vp, jtmp);
                        forward_with_jacobian(net, xm, vm, jtmp);
                        for (int u = 0; u < net.output_dim(); ++u) {
                            const double fd = (vp(u) - vm(u)) / (2.0 * h);
                            CHECK(jac(u, k) ==
                                  doctest::Approx(fd).epsilon(1e-6).scale(1.0 + std::abs(fd)));
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("grad_phi matches finite differences of phi") {
    const ProblemSpec p = problem_smooth_1d();
    Network net = test_net(1, 2, Activation::ReQU, 31);
    SplitMix64 rng(8);
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        const double x = 0.05 + 0.9 * rng.uniform01();
        const SpanningSample s = spanning_sample(net, lifting_of(p), pt1(x));
        const SpanningSample sp = spanning_sample(net, lifting_of(p), pt1(x + h));
        const SpanningSample sm = spanning_sample(net, lifting_of(p), pt1(x - h));
        for (int u = 0; u < net.output_dim(); ++u) {
            const double fd = (sp.phi(u) - sm.phi(u)) / (2.0 * h);
            CHECK(s.grad_phi(u, 0) ==
                  doctest::Approx(fd).epsilon(1e-6).scale(1.0 + std::abs(fd)));
        }
    }
}

TEST_CASE("backprop: zero cotangents give a zero gradient") {
    const ProblemSpec p = problem_smooth_1d();
    const Network net = test_net(1, 1, Activation::ReQU, 1);
    const QuadratureRule rule = random_points_rule(1, 16, 4);
    const BatchEval eval = forward_batch(net, rule.points, true);
    SpanningCotangents cot;  // all empty -> zero
    const ParameterGradient g =
        backprop_parameter_gradient(net, lifting_of(p), rule, eval, cot);
    CHECK(g.squared_norm() == 0.0);
}

TEST_CASE("backprop: single-point phi cotangent equals the hand chain rule") {
    // phi = g_D(x) ReQU(W x + b): d/dW = g_D 2 max(0, Wx+b) x, d/db = g_D 2 max(0, Wx+b).
    Network net;
    net.input_dim = 1;
    net.layers.push_back({Matrix::Constant(1, 1, 1.3), Vector::Constant(1, -0.4)});
    const ProblemSpec p = problem_smooth_1d();

    QuadratureRule rule;
    rule.points = Matrix::Constant(1, 1, 0.7);
    rule.weights = Vector::Ones(1);
    const BatchEval eval = forward_batch(net, rule.points, true);

    SpanningCotangents cot;
    cot.phi_bar = Matrix::Ones(1, 1);
    const ParameterGradient g = backprop_parameter_gradient(net, lifting_of(p), rule, eval, cot);

    const double x = 0.7, gd = x * (1.0 - x);
    const double pre = 1.3 * x - 0.4;
    CHECK(g.layers[0].W(0, 0) == doctest::Approx(gd * 2.0 * pre * x).epsilon(1e-13));
    CHECK(g.layers[0].b(0) == doctest::Approx(gd * 2.0 * pre).epsilon(1e-13));
}

TEST_CASE("backprop matches finite differences through all channels") {
    for (int d : {1, 2}) {
        for (int layers : {1, 2}) {
            for (Activation act : {Activation::ReQU, Activation::ScaledTanh}) {
                const ProblemSpec p = (d == 1) ? problem_smooth_1d() : problem_circle_2d();
                const Network net = test_net(d, layers, act, 70 + d + layers);
                const QuadratureRule rule = random_points_rule(d, 12, 5);
                const int n = net.output_dim();

                SpanningCotangents cot;
                SplitMix64 rng(21);
                auto rand_mat = [&](Eigen::Index rows, Eigen::Index cols) {
                    Matrix m(rows, cols);
                    for (Eigen::Index i = 0; i < rows; ++i)
                        for (Eigen::Index j = 0; j < cols; ++j)
                            m(i, j) = 2.0 * rng.uniform01() - 1.0;
                    return m;
                };
                cot.phi_bar = rand_mat(rule.size(), n);
                cot.tau_bar = rand_mat(rule.size(), n);
                for (int k = 0; k < d; ++k) {
                    cot.grad_phi_bar[k] = rand_mat(rule.size(), n);
                    cot.div_tau_bar[k] = rand_mat(rule.size(), n);
                }

                const BatchEval eval = forward_batch(net, rule.points, true);
                const ParameterGradient grad =
                    backprop_parameter_gradient(net, p.lifting, rule, eval, cot);
                const Vector g = flatten_gradient(net, grad);

                const Vector theta = flatten_parameters(net);
                const double gmax = g.cwiseAbs().maxCoeff();
                for (Eigen::Index j = 0; j < theta.size(); ++j) {
                    const double h = 1e-5 * (1.0 + std::abs(theta(j)));
                    Vector tp = theta, tm = theta;
                    tp(j) += h;
                    tm(j) -= h;
                    const double fp = cotangent_objective(net, tp, p.lifting, rule, cot);
                    const double fm = cotangent_objective(net, tm, p.lifting, rule, cot);
                    const double fd = (fp - fm) / (2.0 * h);
                    CHECK(std::abs(g(j) - fd) <= 1e-4 * (std::abs(fd) + 1e-6 * gmax + 1e-12));
                }
            }
        }
    }
}

TEST_CASE("ReLU is rejected by the activation gate") {
    CHECK_THROWS_AS(parse_activation("relu"), std::invalid_argument);
    CHECK(parse_activation("requ") == Activation::ReQU);
    CHECK(parse_activation("scaled_tanh") == Activation::ScaledTanh);
}

TEST_CASE("JSON round trip preserves parameters") {
    Network net = test_net(2, 2, Activation::ScaledTanh, 5);
    net.m = 37.5;
    const Network back = network_from_json(network_to_json(net));
    REQUIRE(back.layers.size() == net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        CHECK((back.layers[l].W - net.layers[l].W).cwiseAbs().maxCoeff() == 0.0);
        CHECK((back.layers[l].b - net.layers[l].b).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(back.m == net.m);
    CHECK(back.activation == net.activation);
    CHECK(back.input_dim == net.input_dim);
}

TEST_SUITE_END();
