#include "kltwin/dataset.hpp"

#include <string>

#include "kltwin/basis.hpp"
#include "kltwin/sampling.hpp"
#include "kltwin/threads.hpp"

namespace kltwin {

namespace {

// Shared solve wrapper so a failure names the offending sample.
Field solve_sample(const Grid& grid, const Field& k, const SourceSpec& src, const Ibc& ibc,
                   Index sample) {
    try {
        return solve_diffusion(grid, k, src, ibc);
    } catch (const std::exception& e) {
        throw DecompositionFailure("dataset sample " + std::to_string(sample) + ": " + e.what());
    }
}

} // namespace

LinearDataset generate_linear_dataset(const Grid& grid, const LinearCondition& condition,
                                      Index n_samples, Index n_f_terms, Index n_q_terms,
                                      std::uint64_t seed, std::uint64_t stream_base,
                                      int threads) {
    condition.validate(grid);
    if (n_samples < 1) throw InvalidArgument("generate_linear_dataset: n_samples must be >= 1");

    KlBasis f_basis = kernel_basis(condition.scaled_f_kernel(), grid, BasisAxis::space_time,
                                   n_f_terms);
    f_basis.mean = condition.f_mean;
    KlBasis q_basis = kernel_basis(condition.scaled_q_kernel(), grid, BasisAxis::time, n_q_terms);
    q_basis.mean = condition.q_mean;

    LinearDataset out;
    out.grid = grid;
    out.k = condition.k;
    out.f = Mat(grid.total_nodes(), n_samples);
    out.q = Mat(grid.time_nodes(), n_samples);
    out.xi_f = Mat(n_f_terms, n_samples);
    out.xi_q = Mat(n_q_terms, n_samples);
    out.h0 = Vec(n_samples);
    out.h_l = Vec(n_samples);
    out.h_r = Vec(n_samples);
    out.h = Mat(grid.total_nodes(), n_samples);

    parallel_for(n_samples, threads, [&](Index i) {
        RngStream rng(seed, stream_base + static_cast<std::uint64_t>(i));
        const GaussianSample f = sample_gaussian_field(f_basis, rng);
        const GaussianSample q = sample_gaussian_field(q_basis, rng);
        const double h0 = condition.h0.draw(rng);
        const double hl = condition.h_l.draw(rng);
        const double hr = condition.h_r.draw(rng);

        SourceSpec src;
        src.f = f.field;
        src.q = q.field;
        src.x_star = condition.x_star;
        const Field h = solve_sample(grid, condition.k, src,
                                     Ibc::constants(grid, h0, hl, hr), i);

        out.f.col(i) = f.field.values;
        out.q.col(i) = q.field.values;
        out.xi_f.col(i) = f.coeffs;
        out.xi_q.col(i) = q.coeffs;
        out.h0[i] = h0;
        out.h_l[i] = hl;
        out.h_r[i] = hr;
        out.h.col(i) = h.values;
    });
    return out;
}

LinearDataset generate_linear_testset(const Grid& grid, const LinearCondition& condition,
                                      Index n_samples, std::uint64_t seed,
                                      std::uint64_t stream_base, int threads) {
    condition.validate(grid);
    if (n_samples < 1) throw InvalidArgument("generate_linear_testset: n_samples must be >= 1");

    const SpaceTimeGpSampler f_gp = make_space_time_gp(condition.scaled_f_kernel(), grid,
                                                       condition.f_mean);
    const TimeGpSampler q_gp = make_time_gp(condition.scaled_q_kernel(), grid, condition.q_mean);

    LinearDataset out;
    out.grid = grid;
    out.k = condition.k;
    out.f = Mat(grid.total_nodes(), n_samples);
    out.q = Mat(grid.time_nodes(), n_samples);
    out.h0 = Vec(n_samples);
    out.h_l = Vec(n_samples);
    out.h_r = Vec(n_samples);
    out.h = Mat(grid.total_nodes(), n_samples);

    parallel_for(n_samples, threads, [&](Index i) {
        RngStream rng(seed, stream_base + static_cast<std::uint64_t>(i));
        const Field f = f_gp.sample(rng);
        const Field q = q_gp.sample(rng);
        const double h0 = condition.h0.draw(rng);
        const double hl = condition.h_l.draw(rng);
        const double hr = condition.h_r.draw(rng);

        SourceSpec src;
        src.f = f;
        src.q = q;
        src.x_star = condition.x_star;
        const Field h = solve_sample(grid, condition.k, src,
                                     Ibc::constants(grid, h0, hl, hr), i);

        out.f.col(i) = f.values;
        out.q.col(i) = q.values;
        out.h0[i] = h0;
        out.h_l[i] = hl;
        out.h_r[i] = hr;
        out.h.col(i) = h.values;
    });
    return out;
}

NonlinearDataset generate_nonlinear_dataset(const Grid& grid,
                                            const NonlinearCondition& condition,
                                            Index n_samples, std::uint64_t seed,
                                            std::uint64_t stream_base, int threads) {
    condition.validate();
    if (n_samples < 1) throw InvalidArgument("generate_nonlinear_dataset: n_samples must be >= 1");

    const KlBasis y_basis = kernel_basis(condition.y_kernel(), grid, BasisAxis::space,
                                         condition.y_terms);

    NonlinearDataset out;
    out.grid = grid;
    out.k = Mat(grid.space_nodes(), n_samples);
    out.xi_y = Mat(condition.y_terms, n_samples);
    out.h = Mat(grid.total_nodes(), n_samples);
    out.h0 = condition.h0;
    out.h_l = condition.h_l;
    out.h_r = condition.h_r;

    const Ibc ibc = Ibc::constants(grid, condition.h0, condition.h_l, condition.h_r);
    parallel_for(n_samples, threads, [&](Index i) {
        RngStream rng(seed, stream_base + static_cast<std::uint64_t>(i));
        const Vec xi = rng.normal_vector(condition.y_terms);
        Field k(grid, FieldKind::space_only, kld_forward(y_basis, xi));
        k.values = k.values.array().exp();

        const Field h = solve_sample(grid, k, SourceSpec{}, ibc, i);

        out.k.col(i) = k.values;
        out.xi_y.col(i) = xi;
        out.h.col(i) = h.values;
    });
    return out;
}

} // namespace kltwin
