#pragma once

#include <atomic>
#include <cstdint>
#include <optional>

#include "kltwin/field.hpp"

namespace kltwin {

// Initial and boundary conditions.  Scalars expand to constant fields.
struct Ibc {
    Field h0;   // space_only: value at t = 0
    Field h_l;  // time_only: value at x = 0
    Field h_r;  // time_only: value at x = L

    static Ibc constants(const Grid& grid, double h0, double hl, double hr);
    void validate(const Grid& grid) const;
};

// Distributed source f(x,t) and/or point source of rate q(t) at x*.
struct SourceSpec {
    std::optional<Field> f;       // space_time
    std::optional<Field> q;       // time_only
    double x_star = 0.0;          // point-source location, in (0, L)

    void validate(const Grid& grid) const;
};

// Nearest interior node to x*; the discrete point source adds q(t)/dx there.
Index point_source_node(const Grid& grid, double x_star);

// Interior tridiagonal blocks of the operator -d/dx(k dh/dx) with
// interface conductivity k_{i+1/2} = (k_i + k_{i+1})/2.  One block serves all
// time steps because k is constant in time.  Assembly accepts any k profile
// (residual rows are evaluated at sign-indefinite conductivity realizations);
// solve_diffusion enforces positivity.
struct FdOperator {
    Grid grid;
    Vec lower;      // n_x entries; lower[i] couples interior node i to i-1 (node 0 couples to the left boundary)
    Vec diag;       // n_x entries
    Vec upper;      // n_x entries; upper[i] couples interior node i to i+1
    Vec k_interface;  // n_x+1 entries, k_{j+1/2} for j = 0..n_x

    // Applies the operator to the interior slice of a space profile
    // (length n_x+2 including boundary values); returns n_x values.
    Vec apply(const Vec& profile_with_boundaries) const;
};

FdOperator assemble_fd_operator(const Grid& grid, const Field& k);

// Number of completed implicit solves since process start (instrumented for
// transfer-cost accounting).
std::uint64_t fd_solve_count();
void reset_fd_solve_count();

// Implicit first-order-in-time, second-order-in-space solve of
//   dh/dt = d/dx(k dh/dx) + f + q * delta(x - x*)
// on all grid nodes.  Boundary and initial values are copied bit-exactly from
// the Ibc; the point source is discretized as q(t)/dx at the nearest interior
// node to x*.
Field solve_diffusion(const Grid& grid, const Field& k, const SourceSpec& src, const Ibc& ibc);

// Backward-Euler residual of a space-time profile at the interior nodes:
//   r[g(i,n)] = (v[g(i,n)] - v[g(i,n-1)])/dt - d/dx(k dv/dx)[g(i,n)] ,
// for i = 1..n_x, n = 1..n_t, flattened as (n-1)*n_x + (i-1).  This is the
// exact stencil of solve_diffusion, so the residual of a solved field equals
// its source term.
Vec interior_residual(const FdOperator& op, const Vec& space_time_values);

// Columns = interior_residual applied to each column of a matrix of
// space-time profiles (e.g. basis modes).
Mat interior_residual_columns(const FdOperator& op, const Mat& space_time_columns);

// Columns = d/dx(k_mode dv/dx) applied to a fixed space-time profile v, one
// column per conductivity mode (same interface stencil as the solver).
Mat flux_divergence_columns(const Grid& grid, const Mat& k_modes, const Vec& space_time_values);

} // namespace kltwin
