#include "kltwin/rls.hpp"

#include <Eigen/QR>
#include <cmath>

namespace kltwin {

ResidualSystem assemble_rls_linear(const Grid& grid, const Field& k, const KlBasis& state_basis,
                                   const KlBasis& f_basis, const KlBasis& q_basis, double x_star,
                                   const RlsWeights& weights) {
    if (state_basis.kind() != FieldKind::space_time || f_basis.kind() != FieldKind::space_time ||
        q_basis.kind() != FieldKind::time_only) {
        throw InvalidArgument("assemble_rls_linear: basis kinds must be space_time/space_time/time_only");
    }
    if (state_basis.grid() != grid || f_basis.grid() != grid || q_basis.grid() != grid) {
        throw InvalidArgument("assemble_rls_linear: bases must share the solve grid");
    }
    const FdOperator op = assemble_fd_operator(grid, k);

    const Index nx = grid.n_x;
    const Index nt = grid.n_t;
    const Index sn = grid.space_nodes();
    const Index n_m = grid.interior_nodes();
    const Index n_eta = state_basis.terms();
    const Index n_f = f_basis.terms();
    const Index n_q = q_basis.terms();
    const Index rows = n_m + nx + 2 * (nt + 1);

    const double sw_r = std::sqrt(weights.residual);
    const double sw_0 = std::sqrt(weights.initial);
    const double sw_b = std::sqrt(weights.boundary);

    ResidualSystem sys;
    sys.w_r = weights.residual;
    sys.w_0 = weights.initial;
    sys.w_b = weights.boundary;
    sys.a_tilde = Mat::Zero(rows, n_eta);
    sys.b_tilde = Mat::Zero(rows, n_f + n_q + 3);

    // Interior residual rows.
    sys.a_tilde.topRows(n_m) = sw_r * interior_residual_columns(op, state_basis.modes);
    for (Index c = 0; c < n_f; ++c) {
        for (Index n = 1; n <= nt; ++n) {
            for (Index i = 1; i <= nx; ++i) {
                sys.b_tilde((n - 1) * nx + (i - 1), c) =
                    sw_r * f_basis.modes(grid.global_index(i, n), c);
            }
        }
    }
    const Index j_star = point_source_node(grid, x_star);
    const double inv_dx = 1.0 / grid.dx;
    for (Index c = 0; c < n_q; ++c) {
        for (Index n = 1; n <= nt; ++n) {
            sys.b_tilde((n - 1) * nx + (j_star - 1), n_f + c) = sw_r * q_basis.modes(n, c) * inv_dx;
        }
    }

    // Initial-trace rows (interior nodes at t = 0) against the h0 scalar.
    for (Index i = 1; i <= nx; ++i) {
        sys.a_tilde.row(n_m + (i - 1)) = sw_0 * state_basis.modes.row(grid.global_index(i, 0));
        sys.b_tilde(n_m + (i - 1), n_f + n_q + 0) = sw_0;
    }

    // Boundary-trace rows against the hr / hl scalars (xi_ext keeps the
    // extended-latent order [xi_f; xi_q; h0'; hr'; hl']).
    const Index left0 = n_m + nx;
    const Index right0 = left0 + (nt + 1);
    for (Index n = 0; n <= nt; ++n) {
        sys.a_tilde.row(left0 + n) = sw_b * state_basis.modes.row(grid.global_index(0, n));
        sys.b_tilde(left0 + n, n_f + n_q + 2) = sw_b;
        sys.a_tilde.row(right0 + n) = sw_b * state_basis.modes.row(grid.global_index(nx + 1, n));
        sys.b_tilde(right0 + n, n_f + n_q + 1) = sw_b;
    }
    return sys;
}

namespace {

Eigen::ColPivHouseholderQR<Mat> full_rank_qr(const Mat& a, const char* who) {
    Eigen::ColPivHouseholderQR<Mat> qr(a);
    if (qr.rank() < a.cols()) {
        throw DecompositionFailure(std::string(who) + ": residual matrix is rank-deficient");
    }
    return qr;
}

} // namespace

Vec solve_rls(const ResidualSystem& system, const Vec& xi_extended) {
    if (xi_extended.size() != system.b_tilde.cols()) {
        throw InvalidArgument("solve_rls: extended latent length mismatch");
    }
    return full_rank_qr(system.a_tilde, "solve_rls").solve(system.b_tilde * xi_extended);
}

LinearMap rls_transfer_matrix(const ResidualSystem& system) {
    LinearMap map;
    map.W = full_rank_qr(system.a_tilde, "rls_transfer_matrix").solve(system.b_tilde);
    map.bias = Vec();
    return map;
}

NonlinearResidual assemble_nonlinear_residual(const Grid& grid, const Field& anchor,
                                              const KlBasis& k_basis, const KlBasis& state_basis,
                                              const Vec& xi_k) {
    if (anchor.kind != FieldKind::space_time || anchor.grid != grid) {
        throw InvalidArgument("assemble_nonlinear_residual: anchor must be space_time on the grid");
    }
    if (k_basis.kind() != FieldKind::space_only || state_basis.kind() != FieldKind::space_time) {
        throw InvalidArgument("assemble_nonlinear_residual: basis kinds must be space_only/space_time");
    }
    if (xi_k.size() != k_basis.terms()) {
        throw InvalidArgument("assemble_nonlinear_residual: xi_k length mismatch");
    }
    const Field k(grid, FieldKind::space_only, kld_forward(k_basis, xi_k));
    const FdOperator op = assemble_fd_operator(grid, k);
    NonlinearResidual out;
    out.a = interior_residual_columns(op, state_basis.modes);
    out.b = interior_residual(op, anchor.values);
    return out;
}

LinearMap fit_rls_fluctuation(const Grid& grid, const Field& anchor, const KlBasis& k_basis,
                              const KlBasis& state_basis) {
    if (anchor.kind != FieldKind::space_time || anchor.grid != grid) {
        throw InvalidArgument("fit_rls_fluctuation: anchor must be space_time on the grid");
    }
    const Field k_mean(grid, FieldKind::space_only, k_basis.mean.values);
    const FdOperator op = assemble_fd_operator(grid, k_mean);
    const Mat a = interior_residual_columns(op, state_basis.modes);
    const Mat b = flux_divergence_columns(grid, k_basis.modes, anchor.values);
    LinearMap map;
    map.W = full_rank_qr(a, "fit_rls_fluctuation").solve(b);
    map.bias = Vec();
    return map;
}

} // namespace kltwin
