#pragma once

#include "kltwin/basis.hpp"
#include "kltwin/fd1d.hpp"
#include "kltwin/linear_map.hpp"

namespace kltwin {

// Stacked residual least-squares system for the linear problem:
//   rows = [sqrt(w_r) * (interior residual); sqrt(w_0) * (initial trace);
//           sqrt(w_b) * (left trace); sqrt(w_b) * (right trace)]
// so that the state coefficients solve min |A_tilde eta - B_tilde xi_ext|,
// with xi_ext = [xi_f; xi_q; h0'; hr'; hl'].
struct ResidualSystem {
    Mat a_tilde;  // (N_m + n_x + 2(n_t+1)) x n_eta
    Mat b_tilde;  // same rows x (n_f + n_q + 3)
    double w_r = 1.0, w_0 = 1.0, w_b = 1.0;
};

struct RlsWeights {
    double residual = 1.0;
    double initial = 1.0;
    double boundary = 1.0;
};

ResidualSystem assemble_rls_linear(const Grid& grid, const Field& k, const KlBasis& state_basis,
                                   const KlBasis& f_basis, const KlBasis& q_basis, double x_star,
                                   const RlsWeights& weights = {});

// Exact least-squares minimizer of |A_tilde eta - B_tilde xi_ext|.
Vec solve_rls(const ResidualSystem& system, const Vec& xi_extended);

// The matrix W with solve_rls(system, xi) = W xi for every xi.
LinearMap rls_transfer_matrix(const ResidualSystem& system);

// Interior-residual operator pair for the nonlinear problem at one
// conductivity realization k = k_mean + k_modes * xi_k:
//   A columns = residual of each state mode under k,
//   b         = residual of the anchor profile under k.
// A perfect reconstruction anchor + Psi_h eta of a solved field makes
// A eta + b equal that field's source term (zero here).
struct NonlinearResidual {
    Mat a;  // N_m x n_eta
    Vec b;  // N_m
};

NonlinearResidual assemble_nonlinear_residual(const Grid& grid, const Field& anchor,
                                              const KlBasis& k_basis, const KlBasis& state_basis,
                                              const Vec& xi_k);

// Fluctuation-equation transfer matrix for the nonlinear problem, linearized
// about the mean conductivity: solves
//   min | residual_op(k_mean) Psi_h W - flux_divergence(Psi_k, anchor) |
// column-block-wise, yielding eta = W xi_k.
LinearMap fit_rls_fluctuation(const Grid& grid, const Field& anchor, const KlBasis& k_basis,
                              const KlBasis& state_basis);

} // namespace kltwin
