#include "kltwin/linear_map.hpp"

#include <Eigen/QR>

namespace kltwin {

LinearMap fit_ols(const Mat& xi, const Mat& eta, double lambda) {
    if (xi.cols() != eta.cols()) throw InvalidArgument("fit_ols: sample counts differ");
    if (xi.cols() < 1) throw InvalidArgument("fit_ols: need at least one sample");
    if (lambda < 0.0) throw InvalidArgument("fit_ols: lambda must be >= 0");

    const Index n_xi = xi.rows();
    const Index n_samples = xi.cols();
    LinearMap map;
    map.bias = Vec();

    if (lambda == 0.0) {
        // min |xi^T W^T - eta^T| per column of W^T; rank check guards the
        // normal-equation interpretation (Xi Xi^T must be invertible).
        Eigen::ColPivHouseholderQR<Mat> qr(xi.transpose());
        if (qr.rank() < n_xi) {
            throw DecompositionFailure(
                "fit_ols: rank-deficient design with lambda = 0; use lambda > 0");
        }
        map.W = qr.solve(eta.transpose()).transpose();
        return map;
    }

    // Ridge via the augmented design [Xi^T; sqrt(lambda) I].
    Mat design(n_samples + n_xi, n_xi);
    design.topRows(n_samples) = xi.transpose();
    design.bottomRows(n_xi) = std::sqrt(lambda) * Mat::Identity(n_xi, n_xi);
    Mat rhs = Mat::Zero(n_samples + n_xi, eta.rows());
    rhs.topRows(n_samples) = eta.transpose();
    Eigen::HouseholderQR<Mat> qr(design);
    map.W = qr.solve(rhs).transpose();
    return map;
}

double default_ridge(const Mat& xi) {
    return 1e-8 * xi.squaredNorm() / static_cast<double>(xi.rows());
}

double mapping_error(const Vec& eta_true, const Vec& eta_pred) {
    if (eta_true.size() != eta_pred.size()) throw InvalidArgument("mapping_error: length mismatch");
    const double norm = eta_true.norm();
    if (!(norm > 0.0)) throw InvalidArgument("mapping_error: zero-norm reference");
    return (eta_true - eta_pred).norm() / norm;
}

} // namespace kltwin
