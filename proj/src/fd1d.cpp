#include "kltwin/fd1d.hpp"

#include <cmath>

namespace kltwin {

namespace {
std::atomic<std::uint64_t> g_solve_count{0};
} // namespace

std::uint64_t fd_solve_count() { return g_solve_count.load(std::memory_order_relaxed); }
void reset_fd_solve_count() { g_solve_count.store(0, std::memory_order_relaxed); }

Ibc Ibc::constants(const Grid& grid, double h0, double hl, double hr) {
    Ibc ibc;
    ibc.h0 = Field(grid, FieldKind::space_only, Vec::Constant(grid.space_nodes(), h0));
    ibc.h_l = Field(grid, FieldKind::time_only, Vec::Constant(grid.time_nodes(), hl));
    ibc.h_r = Field(grid, FieldKind::time_only, Vec::Constant(grid.time_nodes(), hr));
    return ibc;
}

void Ibc::validate(const Grid& grid) const {
    if (h0.grid != grid || h0.kind != FieldKind::space_only ||
        h_l.grid != grid || h_l.kind != FieldKind::time_only ||
        h_r.grid != grid || h_r.kind != FieldKind::time_only) {
        throw InvalidArgument("Ibc: fields must be space_only/time_only on the solve grid");
    }
    h0.validate();
    h_l.validate();
    h_r.validate();
}

void SourceSpec::validate(const Grid& grid) const {
    if (f) {
        if (f->grid != grid || f->kind != FieldKind::space_time) {
            throw InvalidArgument("SourceSpec: f must be a space_time field on the solve grid");
        }
        f->validate();
    }
    if (q) {
        if (q->grid != grid || q->kind != FieldKind::time_only) {
            throw InvalidArgument("SourceSpec: q must be a time_only field on the solve grid");
        }
        q->validate();
        if (!(x_star > 0.0) || !(x_star < grid.L)) {
            throw InvalidArgument("SourceSpec: x_star must lie in (0, L)");
        }
    }
}

Index point_source_node(const Grid& grid, double x_star) {
    Index j = static_cast<Index>(std::llround(x_star / grid.dx));
    if (j < 1) j = 1;
    if (j > grid.n_x) j = grid.n_x;
    return j;
}

FdOperator assemble_fd_operator(const Grid& grid, const Field& k) {
    if (k.kind != FieldKind::space_only || k.grid != grid) {
        throw InvalidArgument("assemble_fd_operator: k must be a space_only field on the grid");
    }
    FdOperator op;
    op.grid = grid;
    const Index nx = grid.n_x;
    const double inv_dx2 = 1.0 / (grid.dx * grid.dx);
    op.k_interface = Vec(nx + 1);
    for (Index j = 0; j <= nx; ++j) op.k_interface[j] = 0.5 * (k.values[j] + k.values[j + 1]);
    op.lower = Vec(nx);
    op.diag = Vec(nx);
    op.upper = Vec(nx);
    for (Index m = 0; m < nx; ++m) {
        const double kw = op.k_interface[m];
        const double ke = op.k_interface[m + 1];
        op.lower[m] = kw * inv_dx2;
        op.diag[m] = -(kw + ke) * inv_dx2;
        op.upper[m] = ke * inv_dx2;
    }
    return op;
}

Vec FdOperator::apply(const Vec& profile_with_boundaries) const {
    const Index nx = grid.n_x;
    if (profile_with_boundaries.size() != nx + 2) {
        throw InvalidArgument("FdOperator::apply: profile must include boundary nodes");
    }
    Vec out(nx);
    for (Index m = 0; m < nx; ++m) {
        out[m] = lower[m] * profile_with_boundaries[m] + diag[m] * profile_with_boundaries[m + 1] +
                 upper[m] * profile_with_boundaries[m + 2];
    }
    return out;
}

Field solve_diffusion(const Grid& grid, const Field& k, const SourceSpec& src, const Ibc& ibc) {
    src.validate(grid);
    ibc.validate(grid);
    // Positivity is a parabolicity requirement of the marching scheme, not of
    // operator assembly (residual rows are well-defined for any k profile).
    if (!(k.values.minCoeff() > 0.0)) {
        throw InvalidArgument("solve_diffusion: conductivity must be strictly positive");
    }
    const FdOperator op = assemble_fd_operator(grid, k);

    const Index nx = grid.n_x;
    const Index sn = grid.space_nodes();
    const double inv_dt = 1.0 / grid.dt;
    const double inv_dx2 = 1.0 / (grid.dx * grid.dx);

    // Marching matrix M = I/dt - D is constant across steps; factor once.
    // Thomas forward elimination: c_mod holds the scaled superdiagonal,
    // inv_piv the reciprocal pivots.
    Vec c_mod(nx), inv_piv(nx);
    {
        double piv = inv_dt - op.diag[0];
        inv_piv[0] = 1.0 / piv;
        c_mod[0] = -op.upper[0] * inv_piv[0];
        for (Index m = 1; m < nx; ++m) {
            piv = (inv_dt - op.diag[m]) - (-op.lower[m]) * c_mod[m - 1];
            inv_piv[m] = 1.0 / piv;
            c_mod[m] = -op.upper[m] * inv_piv[m];
        }
    }

    const Index j_star = src.q ? point_source_node(grid, src.x_star) : 0;
    const double inv_dx = 1.0 / grid.dx;

    Field h(grid, FieldKind::space_time);
    // Initial level: interior from h0, corners from the boundary series.
    for (Index i = 1; i <= nx; ++i) h.values[grid.global_index(i, 0)] = ibc.h0.values[i];
    h.values[grid.global_index(0, 0)] = ibc.h_l.values[0];
    h.values[grid.global_index(nx + 1, 0)] = ibc.h_r.values[0];

    Vec rhs(nx), sol(nx);
    for (Index n = 1; n <= grid.n_t; ++n) {
        const Index prev_off = (n - 1) * sn;
        const double hl = ibc.h_l.values[n];
        const double hr = ibc.h_r.values[n];
        for (Index m = 0; m < nx; ++m) rhs[m] = h.values[prev_off + m + 1] * inv_dt;
        if (src.f) {
            const Index f_off = n * sn;
            for (Index m = 0; m < nx; ++m) rhs[m] += src.f->values[f_off + m + 1];
        }
        if (src.q) rhs[j_star - 1] += src.q->values[n] * inv_dx;
        rhs[0] += op.k_interface[0] * hl * inv_dx2;
        rhs[nx - 1] += op.k_interface[nx] * hr * inv_dx2;

        // Thomas substitution with the precomputed factors.
        sol[0] = rhs[0] * inv_piv[0];
        for (Index m = 1; m < nx; ++m) {
            sol[m] = (rhs[m] - (-op.lower[m]) * sol[m - 1]) * inv_piv[m];
        }
        for (Index m = nx - 2; m >= 0; --m) sol[m] -= c_mod[m] * sol[m + 1];

        const Index off = n * sn;
        h.values[off] = hl;
        for (Index m = 0; m < nx; ++m) h.values[off + m + 1] = sol[m];
        h.values[off + nx + 1] = hr;
    }

    g_solve_count.fetch_add(1, std::memory_order_relaxed);
    return h;
}

Vec interior_residual(const FdOperator& op, const Vec& space_time_values) {
    const Grid& grid = op.grid;
    if (space_time_values.size() != grid.total_nodes()) {
        throw InvalidArgument("interior_residual: field length does not match grid");
    }
    const Index nx = grid.n_x;
    const Index sn = grid.space_nodes();
    const double inv_dt = 1.0 / grid.dt;
    Vec r(grid.interior_nodes());
    for (Index n = 1; n <= grid.n_t; ++n) {
        const auto cur = space_time_values.segment(n * sn, sn);
        const auto prev = space_time_values.segment((n - 1) * sn, sn);
        const Index row0 = (n - 1) * nx;
        for (Index m = 0; m < nx; ++m) {
            const double diffusion = op.lower[m] * cur[m] + op.diag[m] * cur[m + 1] +
                                     op.upper[m] * cur[m + 2];
            r[row0 + m] = (cur[m + 1] - prev[m + 1]) * inv_dt - diffusion;
        }
    }
    return r;
}

Mat interior_residual_columns(const FdOperator& op, const Mat& space_time_columns) {
    Mat out(op.grid.interior_nodes(), space_time_columns.cols());
    for (Index c = 0; c < space_time_columns.cols(); ++c) {
        out.col(c) = interior_residual(op, space_time_columns.col(c));
    }
    return out;
}

Mat flux_divergence_columns(const Grid& grid, const Mat& k_modes, const Vec& space_time_values) {
    if (k_modes.rows() != grid.space_nodes()) {
        throw InvalidArgument("flux_divergence_columns: k modes must live on the space axis");
    }
    if (space_time_values.size() != grid.total_nodes()) {
        throw InvalidArgument("flux_divergence_columns: field length does not match grid");
    }
    const Index nx = grid.n_x;
    const Index sn = grid.space_nodes();
    const double inv_dx2 = 1.0 / (grid.dx * grid.dx);
    Mat out(grid.interior_nodes(), k_modes.cols());
    for (Index c = 0; c < k_modes.cols(); ++c) {
        Vec ki(nx + 1);
        for (Index j = 0; j <= nx; ++j) ki[j] = 0.5 * (k_modes(j, c) + k_modes(j + 1, c));
        for (Index n = 1; n <= grid.n_t; ++n) {
            const auto cur = space_time_values.segment(n * sn, sn);
            const Index row0 = (n - 1) * nx;
            for (Index m = 0; m < nx; ++m) {
                out(row0 + m, c) = (ki[m + 1] * (cur[m + 2] - cur[m + 1]) -
                                    ki[m] * (cur[m + 1] - cur[m])) * inv_dx2;
            }
        }
    }
    return out;
}

} // namespace kltwin
