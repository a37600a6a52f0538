#include "fosls/quadrature.hpp"

namespace fosls {

std::string quad_kind_name(QuadKind kind) {
    switch (kind) {
        case QuadKind::MonteCarlo: return "mc";
        case QuadKind::StratifiedP1: return "p1";
        case QuadKind::TensorTrapezoid: return "trapezoid";
    }
    return "unknown";
}

std::string QuadratureRule::fingerprint() const {
    std::ostringstream os;
    os << quad_kind_name(kind) << ":n=" << size();
    if (seed) os << ":seed=" << *seed;
    return os.str();
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t counter) {
    SplitMix64 g(base ^ (0xA5A5A5A5A5A5A5A5ULL * (stream + 1)));
    g.state += counter * 0xD1342543DE82EF95ULL;
    return g.next();
}

QuadratureRule sample_mc(const Box& box, int n_points, std::uint64_t rng_seed) {
    if (n_points < 1) throw std::invalid_argument("sample_mc: n_points must be >= 1");
    const int d = box.dim();
    QuadratureRule rule;
    rule.kind = QuadKind::MonteCarlo;
    rule.seed = rng_seed;
    rule.points.resize(n_points, d);
    rule.weights = Vector::Constant(n_points, box.volume() / n_points);
    // Counter-based per-point stream: point i is a pure function of (seed, i).
    for (int i = 0; i < n_points; ++i) {
        SplitMix64 g(derive_seed(rng_seed, 0, static_cast<std::uint64_t>(i)));
        for (int k = 0; k < d; ++k)
            rule.points(i, k) = box.lower(k) + (box.upper(k) - box.lower(k)) * g.uniform01();
    }
    return rule;
}

QuadratureRule sample_p1(const Partition& partition, std::uint64_t rng_seed) {
    const int d = partition.dim();
    const auto n_cells = static_cast<Eigen::Index>(partition.cell_count());
    QuadratureRule rule;
    rule.kind = QuadKind::StratifiedP1;
    rule.seed = rng_seed;
    rule.points.resize(2 * n_cells, d);
    rule.weights.resize(2 * n_cells);

    // On the reference cell (-1,1)^d the pair is (xhat, -xhat) with weights
    // 2^{d-1} each; mapping through the affine F_K multiplies by |J_{F_K}| =
    // |K| / 2^d, so each physical point carries |K|/2.
    for (Eigen::Index c = 0; c < n_cells; ++c) {
        const Box& cell = partition.cells[static_cast<std::size_t>(c)];
        SplitMix64 g(derive_seed(rng_seed, 1, static_cast<std::uint64_t>(c)));
        const double w = cell.volume() / 2.0;
        for (int k = 0; k < d; ++k) {
            const double mid = 0.5 * (cell.lower(k) + cell.upper(k));
            const double half = 0.5 * (cell.upper(k) - cell.lower(k));
            const double xhat = 2.0 * g.uniform01() - 1.0;  // uniform in (-1,1)
            rule.points(2 * c, k) = mid + half * xhat;
            rule.points(2 * c + 1, k) = mid - half * xhat;
        }
        rule.weights(2 * c) = w;
        rule.weights(2 * c + 1) = w;
    }
    return rule;
}

QuadratureRule trapezoid_rule(const Box& box, const std::vector<int>& nodes_per_axis) {
    const int d = box.dim();
    if (static_cast<int>(nodes_per_axis.size()) != d)
        throw std::invalid_argument("trapezoid_rule: nodes_per_axis size must match dimension");
    long total = 1;
    for (int n : nodes_per_axis) {
        if (n < 2) throw std::invalid_argument("trapezoid_rule: need at least 2 nodes per axis");
        total *= n;
    }

    QuadratureRule rule;
    rule.kind = QuadKind::TensorTrapezoid;
    rule.points.resize(total, d);
    rule.weights.resize(total);

    Vector h(d);
    for (int k = 0; k < d; ++k)
        h(k) = (box.upper(k) - box.lower(k)) / (nodes_per_axis[k] - 1);

    std::vector<int> idx(d, 0);
    for (long i = 0; i < total; ++i) {
        double w = 1.0;
        for (int k = 0; k < d; ++k) {
            rule.points(i, k) = box.lower(k) + idx[k] * h(k);
            const bool edge = (idx[k] == 0 || idx[k] == nodes_per_axis[k] - 1);
            w *= h(k) * (edge ? 0.5 : 1.0);
        }
        rule.weights(i) = w;
        for (int k = 0; k < d; ++k) {
            if (++idx[k] < nodes_per_axis[k]) break;
            idx[k] = 0;
        }
    }
    return rule;
}

} // namespace fosls
