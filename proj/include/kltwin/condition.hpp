#pragma once

#include <variant>

#include "kltwin/kernels.hpp"
#include "kltwin/rng.hpp"

namespace kltwin {

enum class ProblemTag { linear, nonlinear };
const char* to_string(ProblemTag tag);

// Closed interval of a uniformly distributed initial/boundary scalar.
struct ScalarRange {
    double lo = 0.0;
    double hi = 0.0;

    double mid() const { return 0.5 * (lo + hi); }
    double draw(RngStream& rng) const { return rng.uniform(lo, hi); }
    void validate() const {
        if (!(lo <= hi)) throw InvalidArgument("ScalarRange: lo must be <= hi");
    }
};

// Operating condition of the linear problem: a random distributed source f and
// point source q with prescribed means and squared-exponential covariances,
// uniform random constant initial/boundary values, and one fixed conductivity
// profile.  `alpha` scales every correlation length and `beta` every variance
// relative to the stored (source) kernels, so a target condition carries its
// covariance change as explicit factors.
struct LinearCondition {
    Field f_mean;  // space_time
    Field q_mean;  // time_only
    SeKernel f_kernel;
    SeKernel q_kernel;
    double alpha = 1.0;  // correlation-length scale vs the stored kernels
    double beta = 1.0;   // variance scale vs the stored kernels
    ScalarRange h0, h_l, h_r;
    double x_star = 0.0;  // point-source location
    Field k;              // space_only, fixed conductivity

    SeKernel scaled_f_kernel() const;
    SeKernel scaled_q_kernel() const;
    void validate(const Grid& grid) const;
};

// Operating condition of the nonlinear problem: lognormal conductivity
// k = exp(y) with y a zero-mean squared-exponential process of variance
// `y_variance` and correlation length `y_corr`, sampled through its leading
// `y_terms` expansion modes, under deterministic constant IBC values.
struct NonlinearCondition {
    double y_variance = 0.1;
    double y_corr = 0.5;
    Index y_terms = 20;
    double h0 = 0.0;
    double h_l = 0.0;
    double h_r = 0.0;

    SeKernel y_kernel() const { return SeKernel{y_variance, y_corr, std::nullopt}; }
    void validate() const;
};

using ConditionSpec = std::variant<LinearCondition, NonlinearCondition>;

inline ProblemTag problem_of(const ConditionSpec& spec) {
    return std::holds_alternative<LinearCondition>(spec) ? ProblemTag::linear
                                                         : ProblemTag::nonlinear;
}

// --- bundled benchmark conditions -------------------------------------------

// One lognormal conductivity profile frozen by seed:
// k = exp(sum of the leading `terms` squared-exponential modes with N(0,1)
// coefficients drawn from RngStream(seed, 0)).
Field draw_log_conductivity(const Grid& grid, double variance, double corr, Index terms,
                            std::uint64_t seed);

// Linear benchmark, source side: oscillatory distributed source
// f(x,t) = 0.5 sin(2 pi x cos(10 pi t)), sinusoidal point source
// q(t) = sin(2 pi t / T) at x* = L/4; separable f covariance with total
// variance 10 (l = L/2, tau = T/2), q variance 1 (tau = T/10); IBC ranges
// h0 ~ U(0.975, 1.025), hl ~ U(1.025, 1.2), hr ~ U(0.8, 0.975).
LinearCondition linear_source_condition(const Grid& grid, Field k);

// Linear benchmark, target side: smooth distributed source
// f(x,t) = 1.2 (e^x + t^3 - t x), cosine point source q(t) = cos(2 pi t / T);
// same covariance family and IBC ranges as the source, with correlation scale
// alpha and variance scale beta.
LinearCondition linear_target_condition(const Grid& grid, Field k, double alpha = 1.0,
                                        double beta = 1.0);

// Nonlinear benchmark conditions (correlation length L/2, 20 modes).
NonlinearCondition nonlinear_condition(double y_variance, double h0, double h_l, double h_r);

// Source: warm initial state matching the left boundary (1.05 / 1.05 / 0.95).
NonlinearCondition nonlinear_source_condition(double y_variance);

// Target served by the error tables: boundary values swapped and the initial
// state tied to the left boundary (0.95 / 0.95 / 1.05).
NonlinearCondition nonlinear_target_condition(double y_variance);

// Boundary-swap-only variant, initial state kept at the source value
// (1.05 / 0.95 / 1.05); exercised by the eigenfunction-transfer study.
NonlinearCondition nonlinear_swapped_bc_condition(double y_variance);

} // namespace kltwin
