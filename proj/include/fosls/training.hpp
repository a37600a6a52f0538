#ifndef FOSLS_TRAINING_HPP
#define FOSLS_TRAINING_HPP

#include "fosls/metrics.hpp"
#include "fosls/poincare.hpp"
#include "fosls/solution.hpp"

#include <optional>
#include <vector>

namespace fosls {

enum class LossKind { FOSLS, DeepRitz };

struct DecaySchedule {
    bool exponential = false;
    double factor = 0.995;
    int start_iteration = 0;

    double rate_at(double base_rate, int iteration) const;
};

// Stochastic rule drawn fresh every iteration from the base seed.
struct QuadSpec {
    QuadKind kind = QuadKind::StratifiedP1;
    int mc_points = 0;                 // MonteCarlo
    std::vector<int> cells_per_axis;   // StratifiedP1

    int point_count(const Box& box) const;
};

QuadratureRule make_stochastic_rule(const Box& box, const QuadSpec& spec, std::uint64_t seed);

struct VarianceProbeConfig {
    int period = 0;      // 0 disables the in-loop probe
    int resamples = 0;
};

struct TrainConfig {
    int iterations = 0;
    double learning_rate = 1e-4;
    DecaySchedule decay;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    double mu = 1e-12;
    double epsilon_scale = 1e-15;
    double alpha1 = 1e-8;
    double alpha2 = 1e-10;
    int poincare_period = 100;
    bool force_poincare_estimate = false;  // estimate even when a reference is known
    QuadSpec quad;
    LossKind loss_kind = LossKind::FOSLS;
    VarianceProbeConfig variance_probe;
    int val_period = 10;                   // fine-rule validation cadence
    std::vector<int> validation_nodes;     // empty disables validation
    int snapshot_period = 0;               // 0 keeps only the final snapshot
    std::uint64_t base_seed = 0;
};

struct HistoryRow {
    int iteration = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;   // NaN off the validation cadence
    double err_u = 0.0;
    double err_q = 0.0;
    double err_total = 0.0;
    double lr = 0.0;
    double poincare = 0.0;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
};

// Loss/error ratios recorded at validated iterations for the robustness study.
struct RobustnessRow {
    int iteration = 0;
    double ratio = 0.0;      // sqrt(robust loss) / |||e|||
    double ratio_std = 0.0;  // sqrt(standard loss) / standard error norm
};

struct Snapshot {
    int iteration = 0;
    Network net;
    Coefficients coefficients;
    double poincare = 1.0;
};

struct TrainResult {
    DiscreteSolution solution;
    PoincareEstimate poincare;
    std::vector<HistoryRow> history;
    std::vector<Snapshot> snapshots;
    std::vector<RobustnessRow> robustness;
};

// Thrown when the stochastic loss turns non-finite; carries the iteration and
// the rule seed for reproduction.
struct TrainingAbortError : std::runtime_error {
    int iteration;
    std::uint64_t rule_seed;
    TrainingAbortError(int it, std::uint64_t seed, const std::string& msg)
        : std::runtime_error(msg), iteration(it), rule_seed(seed) {}
};

// Integrand of the weighted loss at one point:
//   |kappa^{-1/2} q + kappa^{1/2} grad u|^2 + 2 C^2 (Div q - f)^2.
double fosls_loss_pointwise(const SpanningSample& sample, const Coefficients& c,
                            double kappa, double f, double poincare);

// Ritz energy 1/2 int kappa |grad u|^2 - int f u of u = sum c^u_i phi_i.
double deep_ritz_loss(const Network& net, const ProblemSpec& problem,
                      const QuadratureRule& rule, const Vector& c_u);

// Gradient of the quadrature loss with the coefficients frozen at the inner
// minimizer and the Poincare constant held fixed (envelope differentiation);
// the batch must carry forward caches.
ParameterGradient envelope_gradient(const Network& net, const SpanningBatch& batch,
                                    const Coefficients& c_star, double poincare);

ParameterGradient deep_ritz_gradient(const Network& net, const SpanningBatch& batch,
                                     const Vector& c_u);

// Inner solves shared by the loop and the probes.
Coefficients solve_fosls_coefficients(const RawSystem& raw, double poincare, double epsilon,
                                      double mu);
Vector solve_deep_ritz_coefficients(const SpanningBatch& batch, const RawSystem& raw,
                                    double epsilon, double mu);

// Bias-corrected Adam on the flattened parameter vector.
struct AdamState {
    Vector m;
    Vector v;
    int step = 0;
};

void adam_step(AdamState& state, Network& net, const ParameterGradient& grad, double lr,
               double beta1, double beta2, double eps);

TrainResult train(const ProblemSpec& problem, Network net, const TrainConfig& config);

// Empirical per-component gradient variance over M independent rules at a
// fixed (theta, c*), together with the passive-variance bound
// 4 C_grad^2 |Omega| L, C_grad estimated from residual-derivative maxima.
struct VarianceProbeReport {
    Vector variance;    // per parameter component
    Vector c_grad;      // per-component residual-derivative sup estimate
    Vector bound;       // 4 c_grad^2 |Omega| L
    double loss_fine = 0.0;
    double max_variance = 0.0;
    double max_ratio = 0.0;  // max variance / bound
};

VarianceProbeReport gradient_variance_probe(const Network& net, const ProblemSpec& problem,
                                            const Coefficients& c_star, double poincare,
                                            const QuadSpec& quad, int resamples,
                                            std::uint64_t seed, LossKind loss_kind);

} // namespace fosls

#endif
