#ifndef FOSLS_GEOMETRY_HPP
#define FOSLS_GEOMETRY_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace fosls {

using Vector = Eigen::VectorXd;

// Axis-aligned box in R^d, d in {1,2,3}.
struct Box {
    Vector lower;
    Vector upper;

    Box() = default;
    Box(Vector lo, Vector hi);

    int dim() const { return static_cast<int>(lower.size()); }
    double volume() const;
    bool contains(const Vector& x) const;

    static Box unit_interval() { return Box(Vector::Zero(1), Vector::Ones(1)); }
    static Box unit_square() { return Box(Vector::Zero(2), Vector::Ones(2)); }
};

// Uniform partition of a box into congruent axis-aligned cells.
struct Partition {
    Box box;
    std::vector<int> cells_per_axis;
    std::vector<Box> cells;

    int dim() const { return box.dim(); }
    std::size_t cell_count() const { return cells.size(); }
};

Partition partition_uniform(const Box& box, const std::vector<int>& cells_per_axis);

} // namespace fosls

#endif
