#include "fosls/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fosls {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

double DecaySchedule::rate_at(double base_rate, int iteration) const {
    if (!exponential || iteration <= start_iteration) return base_rate;
    return base_rate * std::pow(factor, iteration - start_iteration);
}

int QuadSpec::point_count(const Box& box) const {
    if (kind == QuadKind::MonteCarlo) return mc_points;
    long cells = 1;
    for (int n : cells_per_axis) cells *= n;
    (void)box;
    return static_cast<int>(2 * cells);
}

QuadratureRule make_stochastic_rule(const Box& box, const QuadSpec& spec, std::uint64_t seed) {
    if (spec.kind == QuadKind::MonteCarlo) return sample_mc(box, spec.mc_points, seed);
    if (spec.kind == QuadKind::StratifiedP1)
        return sample_p1(partition_uniform(box, spec.cells_per_axis), seed);
    throw std::invalid_argument("make_stochastic_rule: rule kind must be stochastic");
}

double fosls_loss_pointwise(const SpanningSample& sample, const Coefficients& c,
                            double kappa, double f, double poincare) {
    if (!(kappa > 0.0)) throw std::invalid_argument("fosls_loss_pointwise: kappa must be positive");
    const int d = static_cast<int>(sample.grad_phi.cols());
    const auto n_L = sample.tau_values.size();
    const double sk = std::sqrt(kappa);

    double first = 0.0;
    double div_q = 0.0;
    for (int k = 0; k < d; ++k) {
        const double q_k = sample.tau_values.dot(c.c_q.segment(k * n_L, n_L));
        const double du_k = sample.grad_phi.col(k).dot(c.c_u);
        const double r1 = q_k / sk + sk * du_k;
        first += r1 * r1;
        div_q += sample.div_tau.col(k).dot(c.c_q.segment(k * n_L, n_L));
    }
    const double r2 = div_q - f;
    return first + 2.0 * poincare * poincare * r2 * r2;
}

double deep_ritz_loss(const Network& net, const ProblemSpec& problem,
                      const QuadratureRule& rule, const Vector& c_u) {
    const SpanningBatch batch = make_spanning_batch(net, problem, rule, false);
    const Vector u = batch.phi * c_u;
    double energy = 0.0;
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
        double gradsq = 0.0;
        for (int k = 0; k < batch.dim; ++k) {
            const double g = batch.grad_phi[k].row(i).dot(c_u);
            gradsq += g * g;
        }
        energy += batch.rule.weights(i) * (0.5 * batch.kappa(i) * gradsq - batch.source(i) * u(i));
    }
    return energy;
}

ParameterGradient envelope_gradient(const Network& net, const SpanningBatch& batch,
                                    const Coefficients& c_star, double poincare) {
    const int d = batch.dim;
    const int n_L = batch.n_L;
    const Vector& w = batch.rule.weights;
    const SolutionFields sol = evaluate_solution(batch, c_star);

    const Eigen::ArrayXd sqrt_k = batch.kappa.array().sqrt();
    const Eigen::ArrayXd r2 = sol.div_q.array() - batch.source.array();

    SpanningCotangents cot;
    cot.tau_bar = Matrix::Zero(batch.size(), n_L);
    const Eigen::ArrayXd div_factor =
        w.array() * (4.0 * poincare * poincare) * r2;  // d(2 C^2 r2^2)/d(div q) = 4 C^2 r2
    for (int k = 0; k < d; ++k) {
        const Eigen::ArrayXd r1 =
            sol.q[k].array() / sqrt_k + sqrt_k * sol.grad_u[k].array();
        const Vector a = (w.array() * 2.0 * r1 / sqrt_k).matrix();
        const Vector b = (w.array() * 2.0 * r1 * sqrt_k).matrix();
        cot.tau_bar.noalias() += a * c_star.c_q.segment(k * n_L, n_L).transpose();
        cot.grad_phi_bar[k].noalias() = b * c_star.c_u.transpose();
        cot.div_tau_bar[k].noalias() =
            div_factor.matrix() * c_star.c_q.segment(k * n_L, n_L).transpose();
    }
    return backprop_parameter_gradient(net, batch.gd, batch.gd_grad, batch.eval, cot);
}

ParameterGradient deep_ritz_gradient(const Network& net, const SpanningBatch& batch,
                                     const Vector& c_u) {
    const int d = batch.dim;
    const Vector& w = batch.rule.weights;

    SpanningCotangents cot;
    cot.phi_bar.noalias() =
        Vector(-(w.array() * batch.source.array()).matrix()) * c_u.transpose();
    for (int k = 0; k < d; ++k) {
        const Vector du_k = batch.grad_phi[k] * c_u;
        cot.grad_phi_bar[k].noalias() =
            Vector((w.array() * batch.kappa.array() * du_k.array()).matrix()) * c_u.transpose();
    }
    return backprop_parameter_gradient(net, batch.gd, batch.gd_grad, batch.eval, cot);
}

Coefficients solve_fosls_coefficients(const RawSystem& raw, double poincare, double epsilon,
                                      double mu) {
    const AssembledSystem sys = combine_system(raw, poincare);
    return solve_ls(scale(sys, epsilon), mu);
}

Vector solve_deep_ritz_coefficients(const SpanningBatch& batch, const RawSystem& raw,
                                    double epsilon, double mu) {
    // Minimizer of 1/2 c^T Huu c - c^T F over the u-space, with the same
    // diagonal scaling and Tikhonov shift as the FOSLS solver.
    const Vector F = batch.phi.transpose() *
                     (batch.rule.weights.array() * batch.source.array()).matrix();
    const Vector D = (raw.Huu.diagonal().array() + epsilon).sqrt();
    const Vector dinv = D.cwiseInverse();
    Matrix A = dinv.asDiagonal() * raw.Huu * dinv.asDiagonal();
    A.diagonal().array() += mu;
    const Vector f_tilde = dinv.asDiagonal() * F;
    Eigen::LDLT<Matrix> ldlt(A);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("solve_deep_ritz_coefficients: factorization failed");
    Vector c_tilde = ldlt.solve(f_tilde);
    for (int it = 0; it < 4; ++it) {
        const Vector r = f_tilde - A.selfadjointView<Eigen::Lower>() * c_tilde;
        if (r.norm() <= 1e-12 * std::max(1e-300, f_tilde.norm())) break;
        c_tilde += ldlt.solve(r);
    }
    return dinv.asDiagonal() * c_tilde;
}

void adam_step(AdamState& state, Network& net, const ParameterGradient& grad, double lr,
               double beta1, double beta2, double eps) {
    Vector theta = flatten_parameters(net);
    const Vector g = flatten_gradient(net, grad);
    if (state.m.size() != theta.size()) {
        state.m = Vector::Zero(theta.size());
        state.v = Vector::Zero(theta.size());
        state.step = 0;
    }
    ++state.step;
    state.m = beta1 * state.m + (1.0 - beta1) * g;
    state.v = beta2 * state.v + (1.0 - beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(beta1, state.step);
    const double bc2 = 1.0 - std::pow(beta2, state.step);
    const Vector m_hat = state.m / bc1;
    const Vector v_hat = state.v / bc2;
    theta -= lr * (m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
    unflatten_parameters(net, theta);
}

TrainResult train(const ProblemSpec& problem, Network net, const TrainConfig& config) {
    using clock = std::chrono::steady_clock;
    const bool fosls = config.loss_kind == LossKind::FOSLS;
    const bool estimate_poincare_flag =
        fosls && (config.force_poincare_estimate || !problem.poincare_reference.has_value());

    std::optional<Partition> partition;
    if (config.quad.kind == QuadKind::StratifiedP1)
        partition = partition_uniform(problem.box, config.quad.cells_per_axis);

    std::optional<QuadratureRule> val_rule;
    if (!config.validation_nodes.empty())
        val_rule = trapezoid_rule(problem.box, config.validation_nodes);

    TrainResult result;
    AdamState adam;
    double running_poincare = 0.0;
    bool have_estimate = false;
    PoincareEstimate last_estimate;

    auto current_constant = [&]() -> double {
        if (!estimate_poincare_flag)
            return problem.poincare_reference ? *problem.poincare_reference : 1.0;
        return running_poincare;
    };

    auto draw_rule = [&](int iteration) {
        const std::uint64_t seed = derive_seed(config.base_seed, 2, static_cast<std::uint64_t>(iteration));
        QuadratureRule rule = partition ? sample_p1(*partition, seed)
                                        : sample_mc(problem.box, config.quad.mc_points, seed);
        return std::make_pair(rule, seed);
    };

    auto update_poincare = [&](const RawSystem& raw, const SpanningBatch& batch, int iteration) {
        const Matrix M = mass_from_batch(batch);
        const Vector D_u = (raw.Huu.diagonal().array() + config.epsilon_scale).sqrt();
        PoincareEstimate est = estimate_poincare(raw.Huu, M, D_u, config.alpha1, config.alpha2);
        est.iteration = iteration;
        // The discrete value underestimates the continuous constant, so keep
        // the largest value seen so far.
        running_poincare = have_estimate ? std::max(running_poincare, est.value) : est.value;
        have_estimate = true;
        est.running_max = running_poincare;
        last_estimate = est;
    };

    for (int k = 0; k < config.iterations; ++k) {
        const auto t0 = clock::now();
        auto [rule, seed] = draw_rule(k);
        const SpanningBatch batch = make_spanning_batch(net, problem, std::move(rule), true);
        const RawSystem raw = assemble_raw(batch);

        if (estimate_poincare_flag && (k % config.poincare_period == 0))
            update_poincare(raw, batch, k);
        const double poincare = current_constant();

        Coefficients c;
        double train_loss = 0.0;
        ParameterGradient grad;
        if (fosls) {
            const AssembledSystem sys = combine_system(raw, poincare);
            c = solve_ls(scale(sys, config.epsilon_scale), config.mu);
            train_loss = loss_at(sys, c);
            grad = envelope_gradient(net, batch, c, poincare);
        } else {
            c.c_u = solve_deep_ritz_coefficients(batch, raw, config.epsilon_scale, config.mu);
            c.c_q.resize(0);
            const Vector F = batch.phi.transpose() *
                             (batch.rule.weights.array() * batch.source.array()).matrix();
            train_loss = 0.5 * c.c_u.dot(raw.Huu.selfadjointView<Eigen::Lower>() * c.c_u) -
                         c.c_u.dot(F);
            grad = deep_ritz_gradient(net, batch, c.c_u);
        }

        if (!std::isfinite(train_loss)) {
            std::ostringstream os;
            os << "train: non-finite loss at iteration " << k << " (rule seed " << seed << ")";
            throw TrainingAbortError(k, seed, os.str());
        }

        HistoryRow row;
        row.iteration = k;
        row.train_loss = train_loss;
        row.lr = config.decay.rate_at(config.learning_rate, k);
        row.poincare = poincare;
        row.grad_norm = std::sqrt(grad.squared_norm());
        row.val_loss = kNaN;
        row.err_u = kNaN;
        row.err_q = kNaN;
        row.err_total = kNaN;

        const bool validate =
            val_rule && (k % config.val_period == 0 || k + 1 == config.iterations);
        if (validate) {
            const FineEvaluation fine = evaluate_fine(net, problem, c, poincare, *val_rule);
            row.val_loss = fosls ? fine.loss : fine.ritz_energy;
            if (fine.has_exact) {
                row.err_u = std::sqrt(fine.err_u2 / fine.nrm_u2);
                if (fosls) {
                    row.err_q = std::sqrt(fine.err_hdivk2() / fine.nrm_hdivk2());
                    row.err_total = std::sqrt(fine.err_total2() / fine.nrm_total2());
                    RobustnessRow rr;
                    rr.iteration = k;
                    const double err2 = fine.err_total2();
                    rr.ratio = err2 > 0.0 ? std::sqrt(fine.loss / err2) : kNaN;
                    rr.ratio_std = standard_ratio(fine);
                    result.robustness.push_back(rr);
                }
            }
        }

        if (config.snapshot_period > 0 && k % config.snapshot_period == 0)
            result.snapshots.push_back({k, net, c, poincare});

        adam_step(adam, net, grad, row.lr, config.beta1, config.beta2, config.eps_adam);

        row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        result.history.push_back(row);
    }

    // Terminal least-squares solve on a fresh sample.
    auto [rule, seed] = draw_rule(config.iterations);
    const SpanningBatch batch = make_spanning_batch(net, problem, std::move(rule), false);
    const RawSystem raw = assemble_raw(batch);
    if (estimate_poincare_flag && !have_estimate) update_poincare(raw, batch, config.iterations);
    const double poincare = current_constant();

    Coefficients c_final;
    if (fosls) {
        const AssembledSystem sys = combine_system(raw, poincare);
        c_final = solve_ls(scale(sys, config.epsilon_scale), config.mu);
        const double final_loss = loss_at(sys, c_final);
        if (!std::isfinite(final_loss))
            throw TrainingAbortError(config.iterations, seed, "train: non-finite terminal loss");
    } else {
        c_final.c_u = solve_deep_ritz_coefficients(batch, raw, config.epsilon_scale, config.mu);
        c_final.c_q.resize(0);
    }

    result.snapshots.push_back({config.iterations, net, c_final, poincare});
    result.poincare = last_estimate;
    result.poincare.running_max = estimate_poincare_flag ? running_poincare : poincare;
    if (!estimate_poincare_flag) {
        result.poincare.value = poincare;
        result.poincare.lambda_min = 1.0 / (poincare * poincare);
    }

    result.solution.net = std::move(net);
    result.solution.coefficients = std::move(c_final);
    result.solution.poincare = poincare;
    result.solution.problem_id = problem.id;
    result.solution.lifting = problem.lifting;
    return result;
}

VarianceProbeReport gradient_variance_probe(const Network& net, const ProblemSpec& problem,
                                            const Coefficients& c_star, double poincare,
                                            const QuadSpec& quad, int resamples,
                                            std::uint64_t seed, LossKind loss_kind) {
    if (resamples < 2)
        throw std::invalid_argument("gradient_variance_probe: need at least 2 resamples");
    const int n_params = net.parameter_count();
    const int d = net.input_dim;

    // Empirical per-component variance of the stochastic gradient at fixed
    // (theta, c*): the quadrature rule is the only randomness.
    Matrix grads(resamples, n_params);
    for (int m = 0; m < resamples; ++m) {
        const std::uint64_t rule_seed = derive_seed(seed, 3, static_cast<std::uint64_t>(m));
        QuadratureRule rule = make_stochastic_rule(problem.box, quad, rule_seed);
        const SpanningBatch batch = make_spanning_batch(net, problem, std::move(rule), true);
        ParameterGradient g;
        if (loss_kind == LossKind::FOSLS) {
            g = envelope_gradient(net, batch, c_star, poincare);
        } else {
            g = deep_ritz_gradient(net, batch, c_star.c_u);
        }
        grads.row(m) = flatten_gradient(net, g).transpose();
    }
    const Eigen::RowVectorXd mean = grads.colwise().mean();
    VarianceProbeReport report;
    report.variance =
        ((grads.rowwise() - mean).colwise().squaredNorm() / (resamples - 1)).transpose();
    report.max_variance = report.variance.maxCoeff();

    // Fine deterministic reference both for the loss factor in the bound and
    // for the residual-derivative sup estimate.
    std::vector<int> fine_nodes(static_cast<std::size_t>(d), d == 1 ? 8193 : 257);
    const QuadratureRule fine = trapezoid_rule(problem.box, fine_nodes);

    if (loss_kind == LossKind::FOSLS) {
        const FineEvaluation fine_eval =
            evaluate_fine(net, problem, c_star, poincare, fine);
        report.loss_fine = fine_eval.loss;

        const SpanningBatch base = make_spanning_batch(net, problem, fine, false);
        const Eigen::ArrayXd sqrt_k = base.kappa.array().sqrt();
        report.c_grad = Vector::Zero(n_params);

        Vector theta = flatten_parameters(net);
        for (int j = 0; j < n_params; ++j) {
            const double h = 1e-6 * (1.0 + std::abs(theta(j)));
            Network plus = net, minus = net;
            Vector tp = theta, tm = theta;
            tp(j) += h;
            tm(j) -= h;
            unflatten_parameters(plus, tp);
            unflatten_parameters(minus, tm);
            const SpanningBatch bp = make_spanning_batch(plus, problem, fine, false);
            const SpanningBatch bm = make_spanning_batch(minus, problem, fine, false);
            const SolutionFields sp = evaluate_solution(bp, c_star);
            const SolutionFields sm = evaluate_solution(bm, c_star);

            double sup2 = 0.0;
            for (Eigen::Index i = 0; i < fine.size(); ++i) {
                double norm2 = 0.0;
                for (int k = 0; k < d; ++k) {
                    const double dq = (sp.q[k](i) - sm.q[k](i)) / (2.0 * h);
                    const double dgu = (sp.grad_u[k](i) - sm.grad_u[k](i)) / (2.0 * h);
                    const double r = dq / sqrt_k(i) + sqrt_k(i) * dgu;
                    norm2 += r * r;
                }
                const double ddiv = (sp.div_q(i) - sm.div_q(i)) / (2.0 * h);
                norm2 += 2.0 * poincare * poincare * ddiv * ddiv;
                sup2 = std::max(sup2, norm2);
            }
            report.c_grad(j) = std::sqrt(sup2);
        }

        const double volume = problem.box.volume();
        report.bound = 4.0 * volume * report.loss_fine * report.c_grad.array().square();
        double max_ratio = 0.0;
        for (int j = 0; j < n_params; ++j)
            if (report.bound(j) > 0.0)
                max_ratio = std::max(max_ratio, report.variance(j) / report.bound(j));
        report.max_ratio = max_ratio;
    } else {
        // Deep Ritz has no passive-variance bound; report the optimality gap
        // as the loss reference instead.
        const FineEvaluation fine_eval =
            evaluate_fine(net, problem, c_star, poincare, fine);
        report.loss_fine = fine_eval.has_exact
                               ? fine_eval.ritz_energy - fine_eval.ritz_energy_exact
                               : fine_eval.ritz_energy;
    }
    return report;
}

} // namespace fosls
