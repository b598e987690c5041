// Latent-to-latent maps: ordinary least squares, residual least squares, the
// network trained by Adam, and last-layer retraining against data rows,
// residual rows, or both.  Solvers are checked against dense normal-equation
// and orthogonal-decomposition oracles assembled independently here.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kltwin/linear_map.hpp"
#include "kltwin/mlp.hpp"
#include "kltwin/rls.hpp"
#include "kltwin/rng.hpp"

using namespace kltwin;

namespace {

Mlp make_net(Index n_in, Index n_out, std::vector<Index> hidden, std::uint64_t seed) {
    MlpShape shape;
    shape.n_in = n_in;
    shape.n_out = n_out;
    shape.hidden = std::move(hidden);
    RngStream rng(seed, stream_ns::mlp_init);
    return Mlp(shape, rng);
}

// Dense assembly of the residual-block system in the documented layout:
// (z^T kron ra) vec(Theta) = c with vec stacking the columns of Theta.
std::pair<Mat, Vec> dense_physics(const std::vector<ResidualBlock>& blocks, Index n_out,
                                  Index width) {
    Index rows = 0;
    for (const auto& block : blocks) rows += block.ra.rows();
    Mat a = Mat::Zero(rows, width * n_out);
    Vec b(rows);
    Index row = 0;
    for (const auto& block : blocks) {
        const Index m = block.ra.rows();
        for (Index j = 0; j < width; ++j) a.block(row, j * n_out, m, n_out) = block.z[j] * block.ra;
        b.segment(row, m) = block.c;
        row += m;
    }
    return {a, b};
}

Vec vectorize(const Mat& theta) {
    Vec v(theta.size());
    for (Index j = 0; j < theta.cols(); ++j) v.segment(j * theta.rows(), theta.rows()) = theta.col(j);
    return v;
}

} // namespace

TEST_CASE("ols fit matches the dense ridge normal equations") {
    RngStream rng(11, 0);
    const Mat xi = rng.normal_matrix(4, 30);
    const Mat eta = rng.normal_matrix(3, 30);
    const double lambda = 0.7;

    const LinearMap map = fit_ols(xi, eta, lambda);
    const Mat normal = xi * xi.transpose() + lambda * Mat::Identity(4, 4);
    const Mat expected = eta * xi.transpose() * normal.inverse();
    CHECK((map.W - expected).norm() <= 1e-10 * expected.norm());
    CHECK(map.bias.size() == 0);

    // Stationarity of the unregularized fit: residual orthogonal to the design.
    const LinearMap plain = fit_ols(xi, eta, 0.0);
    const Mat grad = (eta - plain.W * xi) * xi.transpose();
    CHECK(grad.norm() <= 1e-8 * (eta * xi.transpose()).norm());
}

TEST_CASE("rank-deficient unregularized ols is rejected; the default ridge cures it") {
    RngStream rng(12, 0);
    Mat xi = rng.normal_matrix(4, 20);
    xi.row(3) = xi.row(1);  // collinear inputs
    const Mat eta = rng.normal_matrix(2, 20);

    CHECK_THROWS_AS(fit_ols(xi, eta, 0.0), DecompositionFailure);
    const double ridge = default_ridge(xi);
    CHECK(ridge > 0.0);
    const LinearMap map = fit_ols(xi, eta, ridge);
    CHECK(map.W.allFinite());
}

TEST_CASE("linear map application and mapping error") {
    LinearMap map;
    map.W = Mat::Identity(2, 2) * 2.0;
    Vec xi(2);
    xi << 1.0, -3.0;
    CHECK((map.apply(xi) - 2.0 * xi).norm() == 0.0);
    map.bias = Vec::Ones(2);
    CHECK((map.apply(xi) - (2.0 * xi + Vec::Ones(2))).norm() == 0.0);
    CHECK_THROWS_AS(map.apply(Vec::Zero(3)), InvalidArgument);

    Vec truth(2), pred(2);
    truth << 3.0, 4.0;
    pred << 3.0, 3.0;
    CHECK(mapping_error(truth, pred) == doctest::Approx(1.0 / 5.0).epsilon(1e-12));
}

TEST_CASE("rls solution satisfies the stacked normal equations") {
    const Grid g = build_grid(8, 12, 1.0, 0.03);
    const Field k = space_field(g, [](double x) { return 1.0 + 0.4 * x; });
    const KlBasis state = kernel_basis(SeKernel{1.0, 0.4, 0.01}, g, BasisAxis::space_time, 6);
    const KlBasis f_basis = kernel_basis(SeKernel{10.0, 0.5, 0.015}, g, BasisAxis::space_time, 8);
    const KlBasis q_basis = kernel_basis(SeKernel{1.0, std::nullopt, 0.003}, g, BasisAxis::time, 4);

    const ResidualSystem sys = assemble_rls_linear(g, k, state, f_basis, q_basis, 0.25);
    REQUIRE(sys.a_tilde.rows() == g.interior_nodes() + g.n_x + 2 * g.time_nodes());
    REQUIRE(sys.a_tilde.cols() == 6);
    REQUIRE(sys.b_tilde.cols() == 8 + 4 + 3);

    RngStream rng(13, 0);
    const Vec xi = rng.normal_vector(8 + 4 + 3);
    const Vec eta = solve_rls(sys, xi);
    const Vec rhs = sys.a_tilde.transpose() * (sys.b_tilde * xi);
    const Vec grad = sys.a_tilde.transpose() * (sys.a_tilde * eta) - rhs;
    CHECK(grad.norm() <= 1e-8 * rhs.norm());
}

TEST_CASE("rls transfer matrix reproduces the solver on every input") {
    const Grid g = build_grid(6, 10, 1.0, 0.03);
    const Field k = space_field(g, [](double) { return 1.3; });
    const KlBasis state = kernel_basis(SeKernel{1.0, 0.4, 0.01}, g, BasisAxis::space_time, 5);
    const KlBasis f_basis = kernel_basis(SeKernel{10.0, 0.5, 0.015}, g, BasisAxis::space_time, 6);
    const KlBasis q_basis = kernel_basis(SeKernel{1.0, std::nullopt, 0.003}, g, BasisAxis::time, 3);
    const ResidualSystem sys = assemble_rls_linear(g, k, state, f_basis, q_basis, 0.25);
    const LinearMap w = rls_transfer_matrix(sys);

    RngStream rng(14, 0);
    for (int trial = 0; trial < 5; ++trial) {
        const Vec xi = rng.normal_vector(w.W.cols());
        const Vec direct = solve_rls(sys, xi);
        CHECK((w.apply(xi) - direct).norm() <= 1e-10 * (direct.norm() + 1.0));
    }

    // Latent linearity of the residual solve itself.
    const Vec xi = rng.normal_vector(w.W.cols());
    const Vec eta1 = solve_rls(sys, xi);
    const Vec eta2 = solve_rls(sys, (2.5 * xi).eval());
    CHECK((eta2 - 2.5 * eta1).norm() <= 1e-10 * eta1.norm());
}

TEST_CASE("network gradients match central finite differences") {
    Mlp net = make_net(3, 2, {5, 4}, 77);
    RngStream rng(15, 0);
    const Mat x = rng.normal_matrix(3, 7);
    const Mat y = rng.normal_matrix(2, 7);

    const LossGradients grads = loss_gradients(net, x, y);
    REQUIRE(grads.d_weights.size() == static_cast<std::size_t>(net.n_layers()));

    const double eps = 1e-6;
    double max_rel = 0.0;
    for (Index layer = 0; layer < net.n_layers(); ++layer) {
        Mat& w = net.weight(layer);
        for (Index i = 0; i < w.rows(); ++i)
            for (Index j = 0; j < w.cols(); ++j) {
                const double saved = w(i, j);
                w(i, j) = saved + eps;
                const double up = sum_squared_loss(net, x, y);
                w(i, j) = saved - eps;
                const double down = sum_squared_loss(net, x, y);
                w(i, j) = saved;
                const double fd = (up - down) / (2.0 * eps);
                const double an = grads.d_weights[static_cast<std::size_t>(layer)](i, j);
                max_rel = std::max(max_rel, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
            }
        Vec& b = net.bias(layer);
        for (Index i = 0; i < b.size(); ++i) {
            const double saved = b[i];
            b[i] = saved + eps;
            const double up = sum_squared_loss(net, x, y);
            b[i] = saved - eps;
            const double down = sum_squared_loss(net, x, y);
            b[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double an = grads.d_biases[static_cast<std::size_t>(layer)][i];
            max_rel = std::max(max_rel, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
        }
    }
    CHECK(max_rel <= 1e-6);
}

TEST_CASE("adam training reduces the loss deterministically") {
    AdamOptions options;
    options.max_epochs = 400;
    RngStream data_rng(16, 0);
    const Mat x = data_rng.normal_matrix(2, 40);
    Mat y(1, 40);
    for (Index c = 0; c < 40; ++c) y(0, c) = std::tanh(x(0, c)) - 0.5 * x(1, c);

    Mlp net1 = make_net(2, 1, {8}, 5);
    const double before = sum_squared_loss(net1, x, y);
    const TrainReport report1 = train_adam(net1, x, y, options);
    CHECK(report1.final_loss < 0.1 * before);
    CHECK(report1.final_loss == doctest::Approx(sum_squared_loss(net1, x, y)).epsilon(1e-12));

    Mlp net2 = make_net(2, 1, {8}, 5);
    const TrainReport report2 = train_adam(net2, x, y, options);
    CHECK(report1.final_loss == report2.final_loss);
    for (Index layer = 0; layer < net1.n_layers(); ++layer)
        CHECK((net1.weight(layer) - net2.weight(layer)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("last-layer accessors round-trip") {
    Mlp net = make_net(3, 2, {4}, 21);
    const Mat theta = last_layer_matrix(net);
    REQUIRE(theta.rows() == 2);
    REQUIRE(theta.cols() == 5);
    Mat shifted = theta;
    shifted.array() += 0.25;
    set_last_layer(net, shifted);
    CHECK((last_layer_matrix(net) - shifted).norm() == 0.0);
    CHECK_THROWS_AS(set_last_layer(net, Mat::Zero(2, 4)), InvalidArgument);
}

TEST_CASE("data retraining solves the overdetermined least-squares exactly") {
    Mlp net = make_net(3, 2, {4}, 22);
    RngStream rng(17, 0);
    const Mat x = rng.normal_matrix(3, 12);
    const Mat y = rng.normal_matrix(2, 12);
    const Mat features = net.hidden_features(x);

    const Mat w0 = net.weight(0);  // frozen layer, checked below
    RetrainOptions options;
    const Index rows = retrain_last_layer(net, &features, &y, static_cast<const CompressedPhysics*>(nullptr), options);
    CHECK(rows == 12 * 2);

    Mat z(5, 12);
    z.topRows(4) = features;
    z.bottomRows(1).setOnes();
    const Mat expected = y * z.transpose() * (z * z.transpose()).inverse();
    CHECK((last_layer_matrix(net) - expected).norm() <= 1e-8 * expected.norm());
    CHECK((net.weight(0) - w0).cwiseAbs().maxCoeff() == 0.0);  // earlier layers untouched
}

TEST_CASE("underdetermined data retraining: rejection message and minimum-change update") {
    RngStream rng(18, 0);
    const Mat x = rng.normal_matrix(3, 3);  // 3 samples < width + 1 = 5
    const Mat y = rng.normal_matrix(2, 3);

    Mlp reject_net = make_net(3, 2, {4}, 23);
    const Mat features = reject_net.hidden_features(x);
    RetrainOptions reject_options;
    reject_options.policy = UnderdeterminedPolicy::reject;
    CHECK_THROWS_WITH_AS(
        retrain_last_layer(reject_net, &features, &y,
                           static_cast<const CompressedPhysics*>(nullptr), reject_options),
        doctest::Contains("samples are needed to find a unique solution"), DecompositionFailure);

    Mlp net = make_net(3, 2, {4}, 23);
    const Mat theta_before = last_layer_matrix(net);
    RetrainOptions options;
    options.policy = UnderdeterminedPolicy::min_change;
    retrain_last_layer(net, &features, &y, static_cast<const CompressedPhysics*>(nullptr), options);

    // The refit interpolates the few-shot data exactly...
    CHECK((net.apply_columns(x) - y).cwiseAbs().maxCoeff() <= 1e-8);

    // ...through the minimum-Frobenius-norm correction of the layer.
    Mat z(5, 3);
    z.topRows(4) = features;
    z.bottomRows(1).setOnes();
    const Mat residual = y - theta_before * z;
    const Mat delta_expected = residual * (z.transpose() * z).inverse() * z.transpose();
    CHECK((last_layer_matrix(net) - (theta_before + delta_expected)).norm() <= 1e-8);
}

TEST_CASE("residual-row compression preserves the least-squares solution") {
    // Raw stack (from the dense oracle) vs the library path, which reduces
    // the 18 x 15 system to its 15 x 15 triangular factor before solving.
    RngStream rng(19, 0);
    const Index n_out = 3, width = 5;
    std::vector<ResidualBlock> blocks;
    for (int i = 0; i < 6; ++i) {
        ResidualBlock block;
        block.ra = rng.normal_matrix(3, n_out);
        block.c = rng.normal_vector(3);
        block.z = rng.normal_vector(width);
        blocks.push_back(std::move(block));
    }

    const auto [a, b] = dense_physics(blocks, n_out, width);
    const Vec expected = Eigen::CompleteOrthogonalDecomposition<Mat>(a).solve(b);

    const CompressedPhysics compressed = compress_physics_rows(blocks, n_out, width);
    CHECK(compressed.a.rows() == width * n_out);  // reduced from 18 rows
    const Vec via_factor = Eigen::CompleteOrthogonalDecomposition<Mat>(compressed.a.eval())
                               .solve(compressed.b);
    CHECK((via_factor - expected).norm() <= 1e-8 * expected.norm());

    Mlp net = make_net(2, n_out, {4}, 24);
    RetrainOptions options;
    retrain_last_layer(net, nullptr, nullptr, &blocks, options);
    CHECK((vectorize(last_layer_matrix(net)) - expected).norm() <= 1e-8 * expected.norm());
}

TEST_CASE("underdetermined residual retraining stays anchored and finite") {
    // Fewer residual rows than unknowns: the solve must return the anchored
    // minimum-change solution, not back-substitute a singular factor.
    RngStream rng(20, 0);
    const Index n_out = 3, width = 5;
    Mlp net = make_net(2, n_out, {4}, 25);
    const Mat theta_s = last_layer_matrix(net);
    const Mat theta_star = theta_s + 0.3 * rng.normal_matrix(n_out, width);

    std::vector<ResidualBlock> blocks;
    for (int i = 0; i < 3; ++i) {  // 9 rows < 15 unknowns
        ResidualBlock block;
        block.ra = rng.normal_matrix(3, n_out);
        block.z = rng.normal_vector(width);
        block.c = block.ra * theta_star * block.z;  // consistent by construction
        blocks.push_back(std::move(block));
    }

    RetrainOptions reject_options;
    reject_options.policy = UnderdeterminedPolicy::reject;
    {
        Mlp probe = make_net(2, n_out, {4}, 25);
        CHECK_THROWS_WITH_AS(retrain_last_layer(probe, nullptr, nullptr, &blocks, reject_options),
                             doctest::Contains("rows are needed"), DecompositionFailure);
    }

    RetrainOptions options;
    options.policy = UnderdeterminedPolicy::min_change;
    retrain_last_layer(net, nullptr, nullptr, &blocks, options);
    const Mat theta = last_layer_matrix(net);
    CHECK(theta.allFinite());

    // Every consistent residual row is satisfied...
    for (const auto& block : blocks)
        CHECK((block.ra * theta * block.z - block.c).norm() <= 1e-8 * block.c.norm());

    // ...by a correction no larger than the generating one.
    CHECK((theta - theta_s).norm() <= (theta_star - theta_s).norm() + 1e-10);
}

TEST_CASE("combined retraining weights residual rows by sqrt(lambda_r)") {
    RngStream rng(26, 0);
    const Index n_out = 2, width = 4;  // net below: 3 hidden units + bias
    Mlp net = make_net(2, n_out, {3}, 27);

    std::vector<ResidualBlock> blocks;
    for (int i = 0; i < 8; ++i) {
        ResidualBlock block;
        block.ra = rng.normal_matrix(2, n_out);
        block.c = rng.normal_vector(2);
        block.z = rng.normal_vector(width);
        blocks.push_back(std::move(block));
    }
    const Mat x = rng.normal_matrix(2, 6);
    const Mat y = rng.normal_matrix(n_out, 6);
    const Mat features = net.hidden_features(x);

    RetrainOptions options;
    options.lambda_r = 0.013;
    retrain_last_layer(net, &features, &y, &blocks, options);

    // Dense oracle: scaled raw residual rows stacked over the data rows.
    const auto [a_phys, b_phys] = dense_physics(blocks, n_out, width);
    const double scale = std::sqrt(options.lambda_r);
    Mat a(a_phys.rows() + 6 * n_out, width * n_out);
    Vec b(a.rows());
    a.topRows(a_phys.rows()) = scale * a_phys;
    b.head(a_phys.rows()) = scale * b_phys;
    a.bottomRows(6 * n_out).setZero();
    for (Index s = 0; s < 6; ++s) {
        Vec z(width);
        z.head(width - 1) = features.col(s);
        z[width - 1] = 1.0;
        for (Index j = 0; j < width; ++j)
            a.block(a_phys.rows() + s * n_out, j * n_out, n_out, n_out).diagonal().setConstant(z[j]);
        b.segment(a_phys.rows() + s * n_out, n_out) = y.col(s);
    }
    const Vec expected = Eigen::CompleteOrthogonalDecomposition<Mat>(a).solve(b);
    CHECK((vectorize(last_layer_matrix(net)) - expected).norm() <= 1e-8 * expected.norm());
}

TEST_CASE("residual blocks with mismatched shapes are rejected") {
    RngStream rng(28, 0);
    ResidualBlock block;
    block.ra = rng.normal_matrix(3, 2);
    block.c = rng.normal_vector(3);
    block.z = rng.normal_vector(4);
    CHECK_THROWS_AS(compress_physics_rows({block}, 3, 4), InvalidArgument);  // n_out mismatch
    CHECK_THROWS_AS(compress_physics_rows({block}, 2, 5), InvalidArgument);  // width mismatch
    CHECK_THROWS_AS(compress_physics_rows({}, 2, 4), InvalidArgument);
}

TEST_CASE("anchored reconstruction of a solved field zeroes the nonlinear residual") {
    const Grid g = build_grid(8, 10, 1.0, 0.03);
    KlBasis k_basis = kernel_basis(SeKernel{0.05, 0.5, std::nullopt}, g, BasisAxis::space, 3);
    k_basis.mean.values.setConstant(1.4);  // positive background conductivity

    const KlBasis state = kernel_basis(SeKernel{1.0, 0.4, 0.01}, g, BasisAxis::space_time, 2);

    RngStream rng(29, 0);
    const Vec xi_k = 0.5 * rng.normal_vector(3);
    const Field k(g, FieldKind::space_only, k_basis.mean.values + k_basis.modes * xi_k);
    const Field h = solve_diffusion(g, k, SourceSpec{}, Ibc::constants(g, 1.05, 1.05, 0.95));

    Vec eta(2);
    eta << 0.3, -0.7;
    const Field anchor(g, FieldKind::space_time, h.values - state.modes * eta);

    const NonlinearResidual residual = assemble_nonlinear_residual(g, anchor, k_basis, state, xi_k);
    REQUIRE(residual.a.rows() == g.interior_nodes());
    REQUIRE(residual.a.cols() == 2);
    const Vec closure = residual.a * eta + residual.b;
    CHECK(closure.cwiseAbs().maxCoeff() <= 1e-9 * h.values.cwiseAbs().maxCoeff());

    // At xi_k = 0 the anchor solving the background equation leaves b ~ 0.
    const Field mean_anchor = solve_diffusion(g, Field(g, FieldKind::space_only, k_basis.mean.values),
                                              SourceSpec{}, Ibc::constants(g, 1.05, 1.05, 0.95));
    const NonlinearResidual at_mean =
        assemble_nonlinear_residual(g, mean_anchor, k_basis, state, Vec::Zero(3));
    CHECK(at_mean.b.cwiseAbs().maxCoeff() <= 1e-9 * mean_anchor.values.cwiseAbs().maxCoeff());
}
