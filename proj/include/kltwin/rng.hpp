#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace kltwin {

// Counter-free splitmix64 step.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic random stream addressed by (master seed, stream id).
//
// Identical (seed, stream) always yields the identical draw sequence, and
// distinct streams are statistically independent, so samples may be generated
// in parallel with one stream per sample without any scheduling dependence.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream) {
        // Mix seed and stream through two scrambling rounds so that
        // low-entropy (seed, stream) pairs land far apart in state space.
        std::uint64_t s = seed;
        std::uint64_t a = splitmix64(s);
        s = a ^ (stream * 0xda942042e4dd58b5ULL + 0x9e3779b97f4a7c15ULL);
        (void)splitmix64(s);
        state_ = s;
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform on [0, 1): 53 random mantissa bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = next_unit();
        double u2 = next_unit();
        // Guard the log: shift u1 = 0 to the smallest representable draw.
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    // Column-major fill, column by column.
    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index c = 0; c < cols; ++c)
            for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal();
        return m;
    }

private:
    std::uint64_t state_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Stream-id namespaces: keeps dataset draws, test draws, optimizer draws, and
// residual-sampling draws on disjoint streams under one master seed.
namespace stream_ns {
inline constexpr std::uint64_t dataset = 0ULL << 32;
inline constexpr std::uint64_t test = 1ULL << 32;
inline constexpr std::uint64_t target_pool = 2ULL << 32;
inline constexpr std::uint64_t mlp_init = 3ULL << 32;
inline constexpr std::uint64_t residual_draws = 4ULL << 32;
} // namespace stream_ns

} // namespace kltwin
