// Implicit diffusion solver: hand-checked stencil, manufactured-solution
// convergence, residual consistency, the discrete maximum principle,
// superposition, and the instrumented solve counter.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kltwin/fd1d.hpp"
#include "kltwin/rng.hpp"

using namespace kltwin;

namespace {

constexpr double kPi = 3.14159265358979323846;

Field constant_space_time(const Grid& g, double value) {
    return Field(g, FieldKind::space_time, Vec::Constant(g.total_nodes(), value));
}

} // namespace

TEST_CASE("interface conductivities are arithmetic node averages") {
    const Grid g = build_grid(3, 2, 1.0, 0.1);
    const Field k = space_field(g, [](double x) { return 1.0 + x; });
    const FdOperator op = assemble_fd_operator(g, k);

    REQUIRE(op.k_interface.size() == 4);
    for (Index j = 0; j <= 3; ++j) {
        const double expected = 0.5 * ((1.0 + g.x(j)) + (1.0 + g.x(j + 1)));
        CHECK(op.k_interface[j] == doctest::Approx(expected).epsilon(1e-15));
    }
}

TEST_CASE("operator application matches the hand-written three-point stencil") {
    const Grid g = build_grid(3, 2, 1.0, 0.1);
    const Field k = space_field(g, [](double x) { return 1.0 + x; });
    const FdOperator op = assemble_fd_operator(g, k);

    Vec v(g.space_nodes());
    v << 0.3, -1.0, 2.0, 0.5, -0.7;
    const Vec av = op.apply(v);
    REQUIRE(av.size() == 3);
    const double inv_dx2 = 1.0 / (g.dx * g.dx);
    for (Index i = 0; i < 3; ++i) {
        // -d/dx(k dv/dx) at interior node i+1 with interface conductivities.
        const double flux_right = op.k_interface[i + 1] * (v[i + 2] - v[i + 1]);
        const double flux_left = op.k_interface[i] * (v[i + 1] - v[i]);
        CHECK(av[i] == doctest::Approx(-(flux_right - flux_left) * inv_dx2).epsilon(1e-13));
    }
}

TEST_CASE("operator is second-order accurate on a smooth profile") {
    // k = 1: -d/dx(dv/dx) of sin(pi x) is pi^2 sin(pi x).
    const Grid g = build_grid(63, 2, 1.0, 0.1);
    const Field k = space_field(g, [](double) { return 1.0; });
    const FdOperator op = assemble_fd_operator(g, k);
    Vec v(g.space_nodes());
    for (Index j = 0; j < g.space_nodes(); ++j) v[j] = std::sin(kPi * g.x(j));
    const Vec av = op.apply(v);
    for (Index i = 0; i < g.n_x; ++i) {
        const double exact = kPi * kPi * std::sin(kPi * g.x(i + 1));
        CHECK(av[i] == doctest::Approx(exact).epsilon(2.0 * g.dx * g.dx * kPi * kPi));
    }
}

TEST_CASE("solution decays at second order in space") {
    // h(x, t) = sin(pi x) exp(-pi^2 t) solves the unit-conductivity equation
    // with no sources.  The time step is held fine enough that the measured
    // final-time error is dominated by the spatial truncation term.
    auto final_error = [](Index n_x) {
        const double horizon = 0.005;
        const Grid g = build_grid(n_x, 40000, 1.0, horizon);
        const Field k = space_field(g, [](double) { return 1.0; });
        Ibc ibc = Ibc::constants(g, 0.0, 0.0, 0.0);
        for (Index j = 0; j < g.space_nodes(); ++j)
            ibc.h0.values[j] = std::sin(kPi * g.x(j));
        const Field h = solve_diffusion(g, k, SourceSpec{}, ibc);
        double err = 0.0;
        const double decay = std::exp(-kPi * kPi * horizon);
        for (Index j = 0; j < g.space_nodes(); ++j) {
            const double exact = std::sin(kPi * g.x(j)) * decay;
            err = std::max(err, std::abs(h.at_xt(j, g.n_t) - exact));
        }
        return err;
    };

    const double e1 = final_error(7);
    const double e2 = final_error(15);
    const double e3 = final_error(31);
    const double order12 = std::log2(e1 / e2);
    const double order23 = std::log2(e2 / e3);
    CHECK(order12 >= 1.9);
    CHECK(order23 >= 1.9);
}

TEST_CASE("interior residual of a solved field recovers its source term") {
    const Grid g = build_grid(12, 20, 1.0, 0.05);
    RngStream rng(31, 0);
    const Field k = space_field(g, [&](double x) { return 1.5 + 0.5 * std::sin(3.0 * x); });

    SourceSpec src;
    src.f = space_time_field(g, [](double x, double t) { return std::cos(4.0 * x) + 20.0 * t; });
    src.q = time_field(g, [](double t) { return std::sin(90.0 * t); });
    src.x_star = 0.25;

    Ibc ibc = Ibc::constants(g, 1.0, 1.1, 0.9);
    for (Index j = 0; j < g.space_nodes(); ++j) ibc.h0.values[j] += 0.01 * rng.normal();
    for (Index n = 0; n < g.time_nodes(); ++n) ibc.h_l.values[n] += 0.01 * rng.normal();

    const Field h = solve_diffusion(g, k, src, ibc);
    const FdOperator op = assemble_fd_operator(g, k);
    const Vec r = interior_residual(op, h.values);
    REQUIRE(r.size() == g.interior_nodes());

    const Index star = point_source_node(g, src.x_star);
    for (Index n = 1; n <= g.n_t; ++n) {
        for (Index i = 1; i <= g.n_x; ++i) {
            double expected = src.f->at_xt(i, n);
            if (i == star) expected += src.q->values[n] / g.dx;
            const double got = r[(n - 1) * g.n_x + (i - 1)];
            CHECK(got == doctest::Approx(expected).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("point source lands on the nearest interior node") {
    const Grid g = build_grid(30, 250, 1.0, 0.03);
    for (double x_star : {0.25, 0.1, 0.5, 0.9}) {
        const Index node = point_source_node(g, x_star);
        Index best = 1;
        for (Index i = 1; i <= g.n_x; ++i)
            if (std::abs(g.x(i) - x_star) < std::abs(g.x(best) - x_star)) best = i;
        CHECK(node == best);
    }
    CHECK(point_source_node(g, 0.25) == 8);
}

TEST_CASE("boundary and initial traces are copied bit-exactly") {
    const Grid g = build_grid(8, 10, 1.0, 0.02);
    const Field k = space_field(g, [](double x) { return 2.0 + x; });
    RngStream rng(7, 1);
    Ibc ibc = Ibc::constants(g, 0.0, 0.0, 0.0);
    for (Index j = 0; j < g.space_nodes(); ++j) ibc.h0.values[j] = rng.normal();
    for (Index n = 0; n < g.time_nodes(); ++n) {
        ibc.h_l.values[n] = rng.normal();
        ibc.h_r.values[n] = rng.normal();
    }

    const Field h = solve_diffusion(g, k, SourceSpec{}, ibc);
    for (Index i = 1; i <= g.n_x; ++i) CHECK(h.at_xt(i, 0) == ibc.h0.values[i]);
    for (Index n = 0; n < g.time_nodes(); ++n) {
        CHECK(h.at_xt(0, n) == ibc.h_l.values[n]);
        CHECK(h.at_xt(g.n_x + 1, n) == ibc.h_r.values[n]);
    }
}

TEST_CASE("maximum principle on 100 random no-source instances") {
    const Grid g = build_grid(14, 30, 1.0, 0.04);
    for (int trial = 0; trial < 100; ++trial) {
        RngStream rng(555, static_cast<std::uint64_t>(trial));
        const double k_scale = 0.2 + 2.0 * rng.next_unit();
        Field k(g, FieldKind::space_only);
        for (Index j = 0; j < g.space_nodes(); ++j)
            k.values[j] = k_scale * (0.1 + rng.next_unit());

        Ibc ibc = Ibc::constants(g, 0.0, 0.0, 0.0);
        for (Index j = 0; j < g.space_nodes(); ++j) ibc.h0.values[j] = rng.uniform(-1.0, 2.0);
        for (Index n = 0; n < g.time_nodes(); ++n) {
            ibc.h_l.values[n] = rng.uniform(-1.0, 2.0);
            ibc.h_r.values[n] = rng.uniform(-1.0, 2.0);
        }

        double lo = ibc.h0.values.segment(1, g.n_x).minCoeff();
        double hi = ibc.h0.values.segment(1, g.n_x).maxCoeff();
        lo = std::min({lo, ibc.h_l.values.minCoeff(), ibc.h_r.values.minCoeff()});
        hi = std::max({hi, ibc.h_l.values.maxCoeff(), ibc.h_r.values.maxCoeff()});

        const Field h = solve_diffusion(g, k, SourceSpec{}, ibc);
        CHECK(h.values.minCoeff() >= lo - 1e-12);
        CHECK(h.values.maxCoeff() <= hi + 1e-12);
    }
}

TEST_CASE("solution operator is affine: superposition of sources and traces") {
    const Grid g = build_grid(10, 15, 1.0, 0.03);
    const Field k = space_field(g, [](double x) { return 1.0 + 0.3 * x * x; });

    auto random_instance = [&](std::uint64_t stream) {
        RngStream rng(88, stream);
        SourceSpec src;
        Field f(g, FieldKind::space_time);
        f.values = rng.normal_vector(g.total_nodes());
        src.f = f;
        Field q(g, FieldKind::time_only);
        q.values = rng.normal_vector(g.time_nodes());
        src.q = q;
        src.x_star = 0.25;
        Ibc ibc = Ibc::constants(g, 0.0, 0.0, 0.0);
        ibc.h0.values = rng.normal_vector(g.space_nodes());
        ibc.h_l.values = rng.normal_vector(g.time_nodes());
        ibc.h_r.values = rng.normal_vector(g.time_nodes());
        return std::make_pair(src, ibc);
    };

    auto [src1, ibc1] = random_instance(0);
    auto [src2, ibc2] = random_instance(1);

    SourceSpec sum_src;
    sum_src.f = Field(g, FieldKind::space_time, src1.f->values + src2.f->values);
    sum_src.q = Field(g, FieldKind::time_only, src1.q->values + src2.q->values);
    sum_src.x_star = 0.25;
    Ibc sum_ibc;
    sum_ibc.h0 = Field(g, FieldKind::space_only, ibc1.h0.values + ibc2.h0.values);
    sum_ibc.h_l = Field(g, FieldKind::time_only, ibc1.h_l.values + ibc2.h_l.values);
    sum_ibc.h_r = Field(g, FieldKind::time_only, ibc1.h_r.values + ibc2.h_r.values);

    const Field h1 = solve_diffusion(g, k, src1, ibc1);
    const Field h2 = solve_diffusion(g, k, src2, ibc2);
    const Field hs = solve_diffusion(g, k, sum_src, sum_ibc);
    const double scale = hs.values.norm();
    CHECK((h1.values + h2.values - hs.values).norm() <= 1e-12 * scale);
}

TEST_CASE("solve counter counts completed solves") {
    const Grid g = build_grid(6, 8, 1.0, 0.02);
    const Field k = space_field(g, [](double) { return 1.0; });
    const Ibc ibc = Ibc::constants(g, 1.0, 1.0, 1.0);
    reset_fd_solve_count();
    CHECK(fd_solve_count() == 0);
    (void)solve_diffusion(g, k, SourceSpec{}, ibc);
    (void)solve_diffusion(g, k, SourceSpec{}, ibc);
    CHECK(fd_solve_count() == 2);
    reset_fd_solve_count();
    CHECK(fd_solve_count() == 0);
}

TEST_CASE("nonpositive conductivity is rejected") {
    const Grid g = build_grid(6, 8, 1.0, 0.02);
    Field k = space_field(g, [](double) { return 1.0; });
    k.values[3] = 0.0;
    CHECK_THROWS_AS(solve_diffusion(g, k, SourceSpec{}, Ibc::constants(g, 1.0, 1.0, 1.0)),
                    InvalidArgument);
}

TEST_CASE("degenerate control distributions collapse every sample to the mean solve") {
    // With f and q fixed at their means and point IBC values, the ensemble is
    // one repeated instance: its solution is the mean-field solve itself.
    const Grid g = build_grid(8, 12, 1.0, 0.03);
    const Field k = space_field(g, [](double x) { return 1.0 + x; });
    SourceSpec src;
    src.f = constant_space_time(g, 0.4);
    src.x_star = 0.25;
    const Ibc ibc = Ibc::constants(g, 1.0, 1.1125, 0.8875);
    const Field a = solve_diffusion(g, k, src, ibc);
    const Field b = solve_diffusion(g, k, src, ibc);
    CHECK((a.values - b.values).norm() == 0.0);
}
