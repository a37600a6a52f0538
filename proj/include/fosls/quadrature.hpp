#ifndef FOSLS_QUADRATURE_HPP
#define FOSLS_QUADRATURE_HPP

#include "fosls/geometry.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fosls {

enum class QuadKind { MonteCarlo, StratifiedP1, TensorTrapezoid };

std::string quad_kind_name(QuadKind kind);

// Quadrature rule over a box: N points (rows) with positive weights summing
// to |Omega|, so constants are integrated exactly by all three rules.
struct QuadratureRule {
    Eigen::MatrixXd points;  // N x d
    Vector weights;          // N
    QuadKind kind = QuadKind::TensorTrapezoid;
    std::optional<std::uint64_t> seed;

    Eigen::Index size() const { return weights.size(); }
    int dim() const { return static_cast<int>(points.cols()); }
    std::string fingerprint() const;
};

// Counter-based stream: every draw is a pure function of (key, counter), so
// per-cell streams keyed by (seed, cell index) are reproducible regardless of
// evaluation order.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        state += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

// Deterministic key derivation for nested streams (quadrature per iteration,
// probe resamples, per-cell draws).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t counter);

// Uniform sampling in the box with equal weights |Omega|/N.
QuadratureRule sample_mc(const Box& box, int n_points, std::uint64_t rng_seed);

// Stratified first-order rule: per cell an antithetic pair (x, reflected x)
// with equal weights |K|/2, exact on per-cell affine functions for any draw.
QuadratureRule sample_p1(const Partition& partition, std::uint64_t rng_seed);

// Tensor-product trapezoid weights on an equispaced grid.
QuadratureRule trapezoid_rule(const Box& box, const std::vector<int>& nodes_per_axis);

struct NonFiniteSampleError : std::runtime_error {
    Vector point;
    NonFiniteSampleError(const Vector& x, const std::string& what_arg)
        : std::runtime_error(what_arg), point(x) {}
};

// Weighted sum accumulated in point order so results do not depend on any
// parallel execution schedule.
template <class F>
double integrate(const QuadratureRule& rule, F&& integrand) {
    double acc = 0.0;
    Vector x(rule.dim());
    for (Eigen::Index i = 0; i < rule.size(); ++i) {
        x = rule.points.row(i).transpose();
        const double v = integrand(x);
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "integrate: non-finite integrand value at point (" << x.transpose() << ")";
            throw NonFiniteSampleError(x, os.str());
        }
        acc += rule.weights(i) * v;
    }
    return acc;
}

} // namespace fosls

#endif
