#pragma once

#include <cstddef>

#include "kltwin/errors.hpp"

namespace kltwin {

using Index = std::ptrdiff_t;

// Uniform space-time mesh for the 1D diffusion problems.
//
// Space: n_x interior nodes plus two boundary nodes, x_j = j*dx for
// j = 0..n_x+1 with dx = L/(n_x+1).  Time: n_t steps, t_n = n*dt for
// n = 0..n_t with dt = T/n_t.  Space-time fields are stored time-major:
// g(x_idx, t_idx) = t_idx*(n_x+2) + x_idx.
struct Grid {
    Index n_x = 0;   // interior space nodes
    Index n_t = 0;   // time steps
    double L = 0.0;  // domain length
    double T = 0.0;  // time horizon
    double dx = 0.0;
    double dt = 0.0;

    Index space_nodes() const { return n_x + 2; }
    Index time_nodes() const { return n_t + 1; }
    Index total_nodes() const { return space_nodes() * time_nodes(); }
    Index interior_nodes() const { return n_x * n_t; }

    Index global_index(Index x_idx, Index t_idx) const { return t_idx * space_nodes() + x_idx; }

    double x(Index x_idx) const { return static_cast<double>(x_idx) * dx; }
    double t(Index t_idx) const { return static_cast<double>(t_idx) * dt; }

    bool operator==(const Grid&) const = default;
};

inline Grid build_grid(Index n_x, Index n_t, double L, double T) {
    if (n_x < 1 || n_t < 1 || !(L > 0.0) || !(T > 0.0)) {
        throw InvalidArgument("build_grid: n_x, n_t must be >= 1 and L, T > 0");
    }
    Grid g;
    g.n_x = n_x;
    g.n_t = n_t;
    g.L = L;
    g.T = T;
    g.dx = L / static_cast<double>(n_x + 1);
    g.dt = T / static_cast<double>(n_t);
    return g;
}

} // namespace kltwin
