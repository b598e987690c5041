#pragma once

#include "kltwin/field.hpp"

namespace kltwin {

// Which vectors a reported relative error compares: full fields, latent
// coefficients, or a field against its own truncated reconstruction.
enum class ErrorMode { total, mapping, representation };

inline const char* to_string(ErrorMode mode) {
    switch (mode) {
        case ErrorMode::total: return "total";
        case ErrorMode::mapping: return "mapping";
        case ErrorMode::representation: return "representation";
    }
    return "?";
}

// |reference - prediction|_2 / |reference|_2.
inline double relative_error(const Vec& reference, const Vec& prediction) {
    if (reference.size() != prediction.size()) {
        throw InvalidArgument("relative_error: length mismatch");
    }
    const double norm = reference.norm();
    if (!(norm > 0.0)) throw InvalidArgument("relative_error: zero-norm reference");
    return (reference - prediction).norm() / norm;
}

// Mean of the per-column relative errors (the test-protocol statistic).
inline double mean_relative_error(const Mat& reference, const Mat& prediction) {
    if (reference.rows() != prediction.rows() || reference.cols() != prediction.cols()) {
        throw InvalidArgument("mean_relative_error: shape mismatch");
    }
    if (reference.cols() < 1) throw InvalidArgument("mean_relative_error: empty sample set");
    double sum = 0.0;
    for (Index c = 0; c < reference.cols(); ++c) {
        sum += relative_error(reference.col(c), prediction.col(c));
    }
    return sum / static_cast<double>(reference.cols());
}

// Standard deviation of the per-column relative errors (reported beside the
// mean; 0 for a single sample).
inline double std_relative_error(const Mat& reference, const Mat& prediction) {
    const Index n = reference.cols();
    if (n < 2) return 0.0;
    const double mean = mean_relative_error(reference, prediction);
    double ss = 0.0;
    for (Index c = 0; c < n; ++c) {
        const double e = relative_error(reference.col(c), prediction.col(c));
        ss += (e - mean) * (e - mean);
    }
    return std::sqrt(ss / static_cast<double>(n - 1));
}

} // namespace kltwin
