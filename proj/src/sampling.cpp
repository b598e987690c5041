#include "kltwin/sampling.hpp"

namespace kltwin {

GaussianSample sample_gaussian_field(const KlBasis& basis, RngStream& rng) {
    if (basis.terms() < 1) throw InvalidArgument("sample_gaussian_field: empty basis");
    GaussianSample out;
    out.coeffs = rng.normal_vector(basis.terms());
    out.field = Field(basis.grid(), basis.kind(), kld_forward(basis, out.coeffs));
    return out;
}

Field SpaceTimeGpSampler::sample(RngStream& rng) const {
    const Grid& g = mean.grid;
    const Mat z = rng.normal_matrix(g.space_nodes(), g.time_nodes());
    const Mat field2d = bx * z * bt.transpose();  // space x time
    Field out = mean;
    for (Index t = 0; t < g.time_nodes(); ++t) {
        out.values.segment(t * g.space_nodes(), g.space_nodes()) += field2d.col(t);
    }
    return out;
}

Field TimeGpSampler::sample(RngStream& rng) const {
    Field out = mean;
    out.values += bt * rng.normal_vector(bt.cols());
    return out;
}

SpaceTimeGpSampler make_space_time_gp(const SeKernel& kernel, const Grid& grid, Field mean,
                                      double variance_scale) {
    kernel.validate();
    if (!kernel.l || !kernel.tau) {
        throw InvalidArgument("make_space_time_gp: kernel requires both l and tau");
    }
    if (mean.kind != FieldKind::space_time) {
        throw InvalidArgument("make_space_time_gp: mean must be a space_time field");
    }
    auto [lx, vx] = eigendecompose_descending(
        se_gram(space_coords(grid), kernel.variance * variance_scale, *kernel.l));
    auto [lt, vt] = eigendecompose_descending(se_gram(time_coords(grid), 1.0, *kernel.tau));
    SpaceTimeGpSampler sampler;
    sampler.mean = std::move(mean);
    sampler.bx = vx * lx.cwiseSqrt().asDiagonal();
    sampler.bt = vt * lt.cwiseSqrt().asDiagonal();
    return sampler;
}

TimeGpSampler make_time_gp(const SeKernel& kernel, const Grid& grid, Field mean,
                           double variance_scale) {
    kernel.validate();
    if (!kernel.tau) throw InvalidArgument("make_time_gp: kernel requires tau");
    if (mean.kind != FieldKind::time_only) {
        throw InvalidArgument("make_time_gp: mean must be a time_only field");
    }
    auto [lt, vt] = eigendecompose_descending(
        se_gram(time_coords(grid), kernel.variance * variance_scale, *kernel.tau));
    TimeGpSampler sampler;
    sampler.mean = std::move(mean);
    sampler.bt = vt * lt.cwiseSqrt().asDiagonal();
    return sampler;
}

} // namespace kltwin
