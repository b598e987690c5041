#pragma once

#include <vector>

#include "kltwin/kernels.hpp"

namespace kltwin {

enum class BasisAxis { space, time, space_time };

// Truncated eigen-decomposition of a covariance operator on the grid.
//
// `modes` holds the scaled eigenfunctions psi_i = sqrt(lambda_i) * phi_i as
// columns; the phi_i are orthonormal under unit node weights, eigenvalues are
// descending, and each phi_i has its largest-magnitude entry positive.
// `rtol` is the discarded-to-total eigenvalue ratio of the truncation.
struct KlBasis {
    Field mean;       // same kind/grid as the modes
    Vec eigenvalues;  // descending, nonnegative, one per retained mode
    Mat modes;        // field_length x terms, column i = psi_i
    double rtol = 0.0;

    Index terms() const { return modes.cols(); }
    const Grid& grid() const { return mean.grid; }
    FieldKind kind() const { return mean.kind; }

    // Orthonormal eigenfunctions phi_i = psi_i / sqrt(lambda_i).
    Mat orthonormal_modes() const;

    // Same basis with every eigenvalue multiplied by factor (variance scaling).
    KlBasis scaled_variance(double factor) const;
};

// Symmetric eigendecomposition sorted by descending eigenvalue, negatives
// clipped to zero; returns (eigenvalues, eigenvectors-as-columns).
std::pair<Vec, Mat> eigendecompose_descending(const Mat& sym);

// Flip columns so the largest-magnitude entry of each is positive
// (first such entry on ties).
void fix_signs(Mat& columns);

// Analytic-kernel basis by plain collocation on the grid nodes of one axis,
// or the tensor product of the two 1D decompositions for space_time.
KlBasis kernel_basis(const SeKernel& kernel, const Grid& grid, BasisAxis axis, Index n_terms);

// Node-wise arithmetic mean of an ensemble given as matrix columns.
Vec ensemble_mean(const Mat& samples);

// Empirical basis via the method of snapshots on the centered ensemble.
// Requires n_terms <= sample count - 1; throws DecompositionFailure if any
// retained mode has (numerically) zero variance.
KlBasis empirical_basis(const Mat& samples, const Field& prototype, Index n_terms);

// mean + Psi * coeffs.
Vec kld_forward(const KlBasis& basis, const Vec& coeffs);

// argmin over c of |field - mean - Psi c|^2 + gamma |c|^2, solved through the
// normal equations (Psi^T Psi + gamma I) c = Psi^T (field - mean).
Vec kld_inverse(const KlBasis& basis, const Vec& field_values, double gamma);

// kld_inverse of every column, factoring the normal matrix once.
Mat kld_inverse_columns(const KlBasis& basis, const Mat& field_columns, double gamma);

// |field - forward(inverse(field))| / |field|.
double representation_error(const KlBasis& basis, const Vec& field_values, double gamma);

} // namespace kltwin
