#pragma once

#include "kltwin/condition.hpp"
#include "kltwin/fd1d.hpp"

namespace kltwin {

// Monte-Carlo ensemble for the linear problem: control realizations as matrix
// columns together with the matching implicit FD solutions.  Training sets are
// drawn through the truncated control expansions (the drawn coefficients are
// retained); test sets are drawn from the full-rank process and carry empty
// coefficient blocks.
struct LinearDataset {
    Grid grid;
    Field k;    // the condition's fixed conductivity
    Mat f;      // total_nodes x n
    Mat q;      // time_nodes x n
    Mat xi_f;   // f terms x n (empty for full-rank draws)
    Mat xi_q;   // q terms x n (empty for full-rank draws)
    Vec h0, h_l, h_r;  // n
    Mat h;      // total_nodes x n

    Index size() const { return h.cols(); }
};

// Monte-Carlo ensemble for the nonlinear problem: lognormal conductivities
// (drawn log-field coefficients retained) and FD solutions under the
// condition's constant IBC values.
struct NonlinearDataset {
    Grid grid;
    Mat k;      // space_nodes x n
    Mat xi_y;   // y terms x n
    Mat h;      // total_nodes x n
    double h0 = 0.0, h_l = 0.0, h_r = 0.0;

    Index size() const { return h.cols(); }
};

// Sample-indexed random streams: sample i draws from
// RngStream(seed, stream_base + i), so generation order and thread count
// cannot change any sample.  Draw order per linear sample:
// f coefficients (or full-rank block), q, then h0, hl, hr.
LinearDataset generate_linear_dataset(const Grid& grid, const LinearCondition& condition,
                                      Index n_samples, Index n_f_terms, Index n_q_terms,
                                      std::uint64_t seed,
                                      std::uint64_t stream_base = stream_ns::dataset,
                                      int threads = 0);

// Test-protocol variant: f and q drawn from the complete spectrum of their
// covariances (no truncation bias in the reference solutions).
LinearDataset generate_linear_testset(const Grid& grid, const LinearCondition& condition,
                                      Index n_samples, std::uint64_t seed,
                                      std::uint64_t stream_base = stream_ns::test,
                                      int threads = 0);

NonlinearDataset generate_nonlinear_dataset(const Grid& grid,
                                            const NonlinearCondition& condition,
                                            Index n_samples, std::uint64_t seed,
                                            std::uint64_t stream_base = stream_ns::dataset,
                                            int threads = 0);

} // namespace kltwin
