#include "fosls/geometry.hpp"

#include <stdexcept>

namespace fosls {

Box::Box(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size())
        throw std::invalid_argument("Box: lower/upper dimension mismatch");
    if (lower.size() < 1 || lower.size() > 3)
        throw std::invalid_argument("Box: dimension must be 1, 2 or 3");
    for (int k = 0; k < dim(); ++k)
        if (!(lower(k) < upper(k)))
            throw std::invalid_argument("Box: lower[k] < upper[k] required");
}

double Box::volume() const {
    return (upper - lower).prod();
}

bool Box::contains(const Vector& x) const {
    for (int k = 0; k < dim(); ++k)
        if (x(k) < lower(k) || x(k) > upper(k)) return false;
    return true;
}

Partition partition_uniform(const Box& box, const std::vector<int>& cells_per_axis) {
    const int d = box.dim();
    if (static_cast<int>(cells_per_axis.size()) != d)
        throw std::invalid_argument("partition_uniform: cells_per_axis size must match dimension");
    long total = 1;
    for (int n : cells_per_axis) {
        if (n < 1) throw std::invalid_argument("partition_uniform: cells_per_axis entries must be >= 1");
        total *= n;
    }

    Partition part;
    part.box = box;
    part.cells_per_axis = cells_per_axis;
    part.cells.reserve(static_cast<std::size_t>(total));

    Vector h(d);
    for (int k = 0; k < d; ++k)
        h(k) = (box.upper(k) - box.lower(k)) / cells_per_axis[k];

    // Lexicographic cell order, first axis fastest.
    std::vector<int> idx(d, 0);
    for (long c = 0; c < total; ++c) {
        Vector lo(d), hi(d);
        for (int k = 0; k < d; ++k) {
            lo(k) = box.lower(k) + idx[k] * h(k);
            hi(k) = (idx[k] + 1 == cells_per_axis[k]) ? box.upper(k)
                                                      : box.lower(k) + (idx[k] + 1) * h(k);
        }
        part.cells.emplace_back(std::move(lo), std::move(hi));
        for (int k = 0; k < d; ++k) {
            if (++idx[k] < cells_per_axis[k]) break;
            idx[k] = 0;
        }
    }
    return part;
}

} // namespace fosls
