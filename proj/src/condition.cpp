#include "kltwin/condition.hpp"

#include <cmath>

#include "kltwin/basis.hpp"

namespace kltwin {

const char* to_string(ProblemTag tag) {
    return tag == ProblemTag::linear ? "linear" : "nonlinear";
}

SeKernel LinearCondition::scaled_f_kernel() const {
    SeKernel k = f_kernel;
    k.variance *= beta;
    if (k.l) *k.l *= alpha;
    if (k.tau) *k.tau *= alpha;
    return k;
}

SeKernel LinearCondition::scaled_q_kernel() const {
    SeKernel k = q_kernel;
    k.variance *= beta;
    if (k.tau) *k.tau *= alpha;
    return k;
}

void LinearCondition::validate(const Grid& grid) const {
    if (f_mean.grid != grid || f_mean.kind != FieldKind::space_time) {
        throw InvalidArgument("LinearCondition: f_mean must be a space_time field on the grid");
    }
    if (q_mean.grid != grid || q_mean.kind != FieldKind::time_only) {
        throw InvalidArgument("LinearCondition: q_mean must be a time_only field on the grid");
    }
    if (k.grid != grid || k.kind != FieldKind::space_only) {
        throw InvalidArgument("LinearCondition: k must be a space_only field on the grid");
    }
    f_kernel.validate();
    q_kernel.validate();
    if (!f_kernel.l || !f_kernel.tau) {
        throw InvalidArgument("LinearCondition: f_kernel needs both l and tau");
    }
    if (!q_kernel.tau) throw InvalidArgument("LinearCondition: q_kernel needs tau");
    if (!(alpha > 0.0) || !(beta > 0.0)) {
        throw InvalidArgument("LinearCondition: alpha and beta must be > 0");
    }
    h0.validate();
    h_l.validate();
    h_r.validate();
    if (!(x_star > 0.0) || !(x_star < grid.L)) {
        throw InvalidArgument("LinearCondition: x_star must lie in (0, L)");
    }
}

void NonlinearCondition::validate() const {
    if (!(y_variance > 0.0) || !(y_corr > 0.0)) {
        throw InvalidArgument("NonlinearCondition: y_variance and y_corr must be > 0");
    }
    if (y_terms < 1) throw InvalidArgument("NonlinearCondition: y_terms must be >= 1");
}

Field draw_log_conductivity(const Grid& grid, double variance, double corr, Index terms,
                            std::uint64_t seed) {
    const KlBasis y = kernel_basis(SeKernel{variance, corr, std::nullopt}, grid,
                                   BasisAxis::space, terms);
    RngStream rng(seed, 0);
    Field k(grid, FieldKind::space_only, kld_forward(y, rng.normal_vector(terms)));
    k.values = k.values.array().exp();
    return k;
}

LinearCondition linear_source_condition(const Grid& grid, Field k) {
    const double two_pi = 6.283185307179586476925286766559;
    LinearCondition c;
    c.f_mean = space_time_field(grid, [&](double x, double t) {
        return 0.5 * std::sin(two_pi * x * std::cos(5.0 * two_pi * t));
    });
    c.q_mean = time_field(grid, [&](double t) { return std::sin(two_pi * t / grid.T); });
    c.f_kernel = SeKernel{10.0, 0.5 * grid.L, 0.5 * grid.T};
    c.q_kernel = SeKernel{1.0, std::nullopt, 0.1 * grid.T};
    c.h0 = ScalarRange{0.975, 1.025};
    c.h_l = ScalarRange{1.025, 1.2};
    c.h_r = ScalarRange{0.8, 0.975};
    c.x_star = 0.25 * grid.L;
    c.k = std::move(k);
    c.validate(grid);
    return c;
}

LinearCondition linear_target_condition(const Grid& grid, Field k, double alpha, double beta) {
    const double two_pi = 6.283185307179586476925286766559;
    LinearCondition c = linear_source_condition(grid, std::move(k));
    c.f_mean = space_time_field(grid, [&](double x, double t) {
        return 1.2 * (std::exp(x) + t * t * t - t * x);
    });
    c.q_mean = time_field(grid, [&](double t) { return std::cos(two_pi * t / grid.T); });
    c.alpha = alpha;
    c.beta = beta;
    c.validate(grid);
    return c;
}

NonlinearCondition nonlinear_condition(double y_variance, double h0, double h_l, double h_r) {
    NonlinearCondition c;
    c.y_variance = y_variance;
    c.y_corr = 0.5;
    c.y_terms = 20;
    c.h0 = h0;
    c.h_l = h_l;
    c.h_r = h_r;
    c.validate();
    return c;
}

NonlinearCondition nonlinear_source_condition(double y_variance) {
    return nonlinear_condition(y_variance, 1.05, 1.05, 0.95);
}

NonlinearCondition nonlinear_target_condition(double y_variance) {
    return nonlinear_condition(y_variance, 0.95, 0.95, 1.05);
}

NonlinearCondition nonlinear_swapped_bc_condition(double y_variance) {
    return nonlinear_condition(y_variance, 1.05, 0.95, 1.05);
}

} // namespace kltwin
