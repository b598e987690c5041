#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "kltwin/grid.hpp"

namespace kltwin {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class FieldKind { space_time, space_only, time_only };

inline const char* to_string(FieldKind k) {
    switch (k) {
        case FieldKind::space_time: return "space_time";
        case FieldKind::space_only: return "space_only";
        case FieldKind::time_only: return "time_only";
    }
    return "?";
}

inline Index field_length(const Grid& grid, FieldKind kind) {
    switch (kind) {
        case FieldKind::space_time: return grid.total_nodes();
        case FieldKind::space_only: return grid.space_nodes();
        case FieldKind::time_only: return grid.time_nodes();
    }
    return 0;
}

// A sampled function on the grid: all space-time nodes, the space axis, or the
// time axis, ordered by the global index (time-major for space_time).
struct Field {
    Grid grid;
    FieldKind kind = FieldKind::space_time;
    Vec values;

    Field() = default;
    Field(const Grid& g, FieldKind k) : grid(g), kind(k), values(Vec::Zero(field_length(g, k))) {}
    Field(const Grid& g, FieldKind k, Vec v) : grid(g), kind(k), values(std::move(v)) {
        validate();
    }

    void validate() const {
        if (values.size() != field_length(grid, kind)) {
            throw InvalidArgument(std::string("Field: length ") + std::to_string(values.size()) +
                                  " does not match kind " + to_string(kind));
        }
        if (!values.allFinite()) {
            throw InvalidArgument("Field: non-finite values");
        }
    }

    double& at_xt(Index x_idx, Index t_idx) { return values[grid.global_index(x_idx, t_idx)]; }
    double at_xt(Index x_idx, Index t_idx) const { return values[grid.global_index(x_idx, t_idx)]; }
};

// Tabulate a function of x on the space axis.
template <typename F>
Field space_field(const Grid& g, F&& f) {
    Field out(g, FieldKind::space_only);
    for (Index j = 0; j < g.space_nodes(); ++j) out.values[j] = f(g.x(j));
    return out;
}

// Tabulate a function of t on the time axis.
template <typename F>
Field time_field(const Grid& g, F&& f) {
    Field out(g, FieldKind::time_only);
    for (Index n = 0; n < g.time_nodes(); ++n) out.values[n] = f(g.t(n));
    return out;
}

// Tabulate a function of (x, t) on all nodes.
template <typename F>
Field space_time_field(const Grid& g, F&& f) {
    Field out(g, FieldKind::space_time);
    for (Index n = 0; n < g.time_nodes(); ++n)
        for (Index j = 0; j < g.space_nodes(); ++j)
            out.values[g.global_index(j, n)] = f(g.x(j), g.t(n));
    return out;
}

} // namespace kltwin
