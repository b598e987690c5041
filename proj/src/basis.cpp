#include "kltwin/basis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace kltwin {

Mat se_gram(const Vec& coords, double var, double len) {
    const Index n = coords.size();
    Mat g(n, n);
    const double inv_len2 = 1.0 / (len * len);
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            const double d = coords[i] - coords[j];
            g(i, j) = var * std::exp(-d * d * inv_len2);
        }
    }
    return g;
}

Vec space_coords(const Grid& grid) {
    Vec x(grid.space_nodes());
    for (Index j = 0; j < x.size(); ++j) x[j] = grid.x(j);
    return x;
}

Vec time_coords(const Grid& grid) {
    Vec t(grid.time_nodes());
    for (Index n = 0; n < t.size(); ++n) t[n] = grid.t(n);
    return t;
}

std::pair<Vec, Mat> eigendecompose_descending(const Mat& sym) {
    Eigen::SelfAdjointEigenSolver<Mat> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw DecompositionFailure("symmetric eigendecomposition failed");
    }
    const Index n = sym.rows();
    Vec values(n);
    Mat vectors(n, n);
    for (Index i = 0; i < n; ++i) {
        values[i] = std::max(0.0, solver.eigenvalues()[n - 1 - i]);
        vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
    }
    return {std::move(values), std::move(vectors)};
}

void fix_signs(Mat& columns) {
    for (Index j = 0; j < columns.cols(); ++j) {
        Index arg_max = 0;
        columns.col(j).cwiseAbs().maxCoeff(&arg_max);
        if (columns(arg_max, j) < 0.0) columns.col(j) = -columns.col(j);
    }
}

Mat KlBasis::orthonormal_modes() const {
    Mat phi = modes;
    for (Index j = 0; j < phi.cols(); ++j) {
        const double lam = eigenvalues[j];
        if (lam > 0.0) phi.col(j) /= std::sqrt(lam);
    }
    return phi;
}

KlBasis KlBasis::scaled_variance(double factor) const {
    if (!(factor > 0.0)) throw InvalidArgument("scaled_variance: factor must be > 0");
    KlBasis out = *this;
    out.eigenvalues *= factor;
    out.modes *= std::sqrt(factor);
    return out;
}

namespace {

KlBasis axis_basis(const Vec& coords, double var, double len, const Grid& grid, FieldKind kind,
                   Index n_terms) {
    auto [values, vectors] = eigendecompose_descending(se_gram(coords, var, len));
    if (n_terms > values.size()) {
        throw InvalidArgument("kernel_basis: n_terms exceeds node count on the axis");
    }
    const double total = values.sum();
    if (!(total > 0.0)) throw DecompositionFailure("kernel_basis: covariance matrix is numerically zero");
    KlBasis basis;
    basis.mean = Field(grid, kind);
    basis.eigenvalues = values.head(n_terms);
    Mat phi = vectors.leftCols(n_terms);
    fix_signs(phi);
    basis.modes = phi * basis.eigenvalues.cwiseSqrt().asDiagonal();
    basis.rtol = (total - basis.eigenvalues.sum()) / total;
    return basis;
}

} // namespace

KlBasis kernel_basis(const SeKernel& kernel, const Grid& grid, BasisAxis axis, Index n_terms) {
    kernel.validate();
    if (n_terms < 1) throw InvalidArgument("kernel_basis: n_terms must be >= 1");
    switch (axis) {
        case BasisAxis::space:
            if (!kernel.l) throw InvalidArgument("kernel_basis: space axis requires l");
            return axis_basis(space_coords(grid), kernel.variance, *kernel.l, grid,
                              FieldKind::space_only, n_terms);
        case BasisAxis::time:
            if (!kernel.tau) throw InvalidArgument("kernel_basis: time axis requires tau");
            return axis_basis(time_coords(grid), kernel.variance, *kernel.tau, grid,
                              FieldKind::time_only, n_terms);
        case BasisAxis::space_time:
            break;
    }
    if (!kernel.l || !kernel.tau) {
        throw InvalidArgument("kernel_basis: space_time axis requires both l and tau");
    }
    if (n_terms > grid.total_nodes()) {
        throw InvalidArgument("kernel_basis: n_terms exceeds node count");
    }
    auto [lx, vx] = eigendecompose_descending(se_gram(space_coords(grid), kernel.variance, *kernel.l));
    auto [lt, vt] = eigendecompose_descending(se_gram(time_coords(grid), 1.0, *kernel.tau));

    // Rank all product eigenvalues lambda_x[i] * lambda_t[j]; stable order on
    // ties by flat index so the selection is deterministic.
    const Index nx = lx.size(), nt = lt.size();
    std::vector<Index> order(static_cast<std::size_t>(nx * nt));
    std::iota(order.begin(), order.end(), Index{0});
    const auto product = [&](Index flat) { return lx[flat % nx] * lt[flat / nx]; };
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return product(a) > product(b); });

    const double total = lx.sum() * lt.sum();
    if (!(total > 0.0)) throw DecompositionFailure("kernel_basis: covariance matrix is numerically zero");

    KlBasis basis;
    basis.mean = Field(grid, FieldKind::space_time);
    basis.eigenvalues = Vec(n_terms);
    Mat phi(grid.total_nodes(), n_terms);
    for (Index k = 0; k < n_terms; ++k) {
        const Index flat = order[static_cast<std::size_t>(k)];
        const Index i = flat % nx, j = flat / nx;
        basis.eigenvalues[k] = product(flat);
        for (Index t = 0; t < nt; ++t) {
            phi.col(k).segment(t * nx, nx) = vx.col(i) * vt(t, j);
        }
    }
    fix_signs(phi);
    basis.modes = phi * basis.eigenvalues.cwiseSqrt().asDiagonal();
    basis.rtol = (total - basis.eigenvalues.sum()) / total;
    return basis;
}

Vec ensemble_mean(const Mat& samples) {
    if (samples.cols() < 1) throw InvalidArgument("ensemble_mean: empty ensemble");
    return samples.rowwise().mean();
}

KlBasis empirical_basis(const Mat& samples, const Field& prototype, Index n_terms) {
    const Index m = samples.cols();
    if (m < 2) throw InvalidArgument("empirical_basis: need at least 2 samples");
    if (n_terms < 1 || n_terms > m - 1 || n_terms > samples.rows()) {
        throw InvalidArgument("empirical_basis: n_terms must be in [1, min(samples-1, nodes)]");
    }
    if (samples.rows() != prototype.values.size()) {
        throw InvalidArgument("empirical_basis: sample length does not match prototype field");
    }
    const Vec mean = samples.rowwise().mean();
    const Mat centered = samples.colwise() - mean;

    // Method of snapshots: the M x M Gram spectrum equals the covariance
    // spectrum for all modes representable by the ensemble.
    auto [values, vectors] = eigendecompose_descending(centered.transpose() * centered /
                                                       static_cast<double>(m - 1));
    const double total = values.sum();
    if (!(total > 0.0)) {
        throw DecompositionFailure("empirical_basis: zero-variance ensemble (all samples identical)");
    }
    for (Index i = 0; i < n_terms; ++i) {
        if (!(values[i] > 0.0)) {
            throw DecompositionFailure("empirical_basis: mode " + std::to_string(i) +
                                       " has zero variance; reduce n_terms");
        }
    }

    KlBasis basis;
    basis.mean = Field(prototype.grid, prototype.kind, mean);
    basis.eigenvalues = values.head(n_terms);
    Mat phi(samples.rows(), n_terms);
    for (Index i = 0; i < n_terms; ++i) {
        phi.col(i) = centered * vectors.col(i) / std::sqrt(values[i] * static_cast<double>(m - 1));
    }
    fix_signs(phi);
    basis.modes = phi * basis.eigenvalues.cwiseSqrt().asDiagonal();
    basis.rtol = (total - basis.eigenvalues.sum()) / total;
    return basis;
}

Vec kld_forward(const KlBasis& basis, const Vec& coeffs) {
    if (coeffs.size() != basis.terms()) {
        throw InvalidArgument("kld_forward: coefficient length does not match basis");
    }
    return basis.mean.values + basis.modes * coeffs;
}

namespace {

Eigen::LDLT<Mat> kld_normal_factor(const KlBasis& basis, double gamma) {
    if (gamma < 0.0) throw InvalidArgument("kld_inverse: gamma must be >= 0");
    Mat normal = basis.modes.transpose() * basis.modes;
    normal.diagonal().array() += gamma;
    Eigen::LDLT<Mat> ldlt(normal);
    if (ldlt.info() != Eigen::Success) {
        throw DecompositionFailure("kld_inverse: singular normal matrix; use gamma > 0");
    }
    return ldlt;
}

} // namespace

Vec kld_inverse(const KlBasis& basis, const Vec& field_values, double gamma) {
    if (field_values.size() != basis.mean.values.size()) {
        throw InvalidArgument("kld_inverse: field length does not match basis");
    }
    return kld_normal_factor(basis, gamma)
        .solve(basis.modes.transpose() * (field_values - basis.mean.values));
}

Mat kld_inverse_columns(const KlBasis& basis, const Mat& field_columns, double gamma) {
    if (field_columns.rows() != basis.mean.values.size()) {
        throw InvalidArgument("kld_inverse_columns: field length does not match basis");
    }
    const Mat rhs = basis.modes.transpose() * (field_columns.colwise() - basis.mean.values);
    return kld_normal_factor(basis, gamma).solve(rhs);
}

double representation_error(const KlBasis& basis, const Vec& field_values, double gamma) {
    const double norm = field_values.norm();
    if (!(norm > 0.0)) throw InvalidArgument("representation_error: zero-norm field");
    const Vec reconstructed = kld_forward(basis, kld_inverse(basis, field_values, gamma));
    return (field_values - reconstructed).norm() / norm;
}

} // namespace kltwin
