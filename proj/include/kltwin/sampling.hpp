#pragma once

#include "kltwin/basis.hpp"
#include "kltwin/rng.hpp"

namespace kltwin {

// Truncated-expansion sample: coeffs ~ N(0, I), field = mean + Psi * coeffs.
struct GaussianSample {
    Field field;
    Vec coeffs;
};

GaussianSample sample_gaussian_field(const KlBasis& basis, RngStream& rng);

// Full-rank sampler for a separable space-time Gaussian process: draws the
// complete spectrum of both axis factors so samples carry no truncation bias.
// field = mean + vec(Bx * Z * Bt^T) with Z i.i.d. standard normal.
struct SpaceTimeGpSampler {
    Field mean;  // space_time
    Mat bx;      // space_nodes x space_nodes, Vx * sqrt(diag lambda_x)
    Mat bt;      // time_nodes x time_nodes,  Vt * sqrt(diag lambda_t)

    Field sample(RngStream& rng) const;
};

// Full-rank sampler along the time axis only: field = mean + Bt * z.
struct TimeGpSampler {
    Field mean;  // time_only
    Mat bt;

    Field sample(RngStream& rng) const;
};

SpaceTimeGpSampler make_space_time_gp(const SeKernel& kernel, const Grid& grid, Field mean,
                                      double variance_scale = 1.0);
TimeGpSampler make_time_gp(const SeKernel& kernel, const Grid& grid, Field mean,
                           double variance_scale = 1.0);

} // namespace kltwin
