#pragma once

#include "kltwin/field.hpp"

namespace kltwin {

// Affine latent-to-latent map eta = W * xi + bias (bias zero for pure linear fits).
struct LinearMap {
    Mat W;
    Vec bias;

    Vec apply(const Vec& xi) const {
        if (xi.size() != W.cols()) throw InvalidArgument("LinearMap: input length mismatch");
        if (bias.size() == 0) return W * xi;
        return W * xi + bias;
    }

    Mat apply_columns(const Mat& xi_columns) const {
        if (xi_columns.rows() != W.cols()) throw InvalidArgument("LinearMap: input length mismatch");
        Mat out = W * xi_columns;
        if (bias.size() != 0) out.colwise() += bias;
        return out;
    }
};

// Least-squares fit of W in eta ~ W xi over paired columns, with optional
// ridge penalty lambda |W|^2.  Solved through orthogonal factorization of the
// (augmented) design; equals W = H Xi^T (Xi Xi^T + lambda I)^-1.
// lambda = 0 with a rank-deficient design throws DecompositionFailure.
LinearMap fit_ols(const Mat& xi, const Mat& eta, double lambda);

// Ridge value guaranteeing invertibility when the design is rank-deficient:
// 1e-8 * trace(Xi Xi^T) / n_xi.
double default_ridge(const Mat& xi);

// |eta_true - eta_pred| / |eta_true|.
double mapping_error(const Vec& eta_true, const Vec& eta_pred);

} // namespace kltwin
