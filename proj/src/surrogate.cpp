#include "kltwin/surrogate.hpp"

#include <utility>

#include "kltwin/fd1d.hpp"
#include "kltwin/rls.hpp"

namespace kltwin {

const char* to_string(MapKind kind) {
    switch (kind) {
        case MapKind::ols: return "ols";
        case MapKind::rls: return "rls";
        case MapKind::mlp: return "kl_dnn";
    }
    return "?";
}

MapKind parse_map_kind(const std::string& name) {
    if (name == "ols") return MapKind::ols;
    if (name == "rls") return MapKind::rls;
    if (name == "kl_dnn" || name == "mlp") return MapKind::mlp;
    throw InvalidArgument("unknown map kind '" + name + "' (expected ols, rls, or kl_dnn)");
}

const char* to_string(TransferMethod method) {
    switch (method) {
        case TransferMethod::rls: return "rls";
        case TransferMethod::ols: return "ols";
        case TransferMethod::kl_dnn: return "kl_dnn";
        case TransferMethod::pi_kl_dnn: return "pi_kl_dnn";
        case TransferMethod::combined: return "combined";
    }
    return "?";
}

TransferMethod parse_transfer_method(const std::string& name) {
    if (name == "rls") return TransferMethod::rls;
    if (name == "ols") return TransferMethod::ols;
    if (name == "kl_dnn") return TransferMethod::kl_dnn;
    if (name == "pi_kl_dnn") return TransferMethod::pi_kl_dnn;
    if (name == "combined") return TransferMethod::combined;
    throw InvalidArgument("unknown transfer method '" + name +
                          "' (expected rls, ols, kl_dnn, pi_kl_dnn, or combined)");
}

Index SurrogateModel::n_xi() const {
    if (problem == ProblemTag::linear) return f_basis.terms() + q_basis.terms() + 3;
    return k_basis.terms();
}

Vec SurrogateModel::encode_controls(const ControlInput& controls) const {
    if (problem == ProblemTag::linear) {
        if (!controls.f || !controls.q)
            throw InvalidArgument("encode_controls: the linear problem needs f and q inputs");
        Vec xi(n_xi());
        const Index nf = f_basis.terms();
        const Index nq = q_basis.terms();
        xi.head(nf) = kld_inverse(f_basis, controls.f->values, gamma);
        xi.segment(nf, nq) = kld_inverse(q_basis, controls.q->values, gamma);
        xi[nf + nq] = controls.h0 - h0_mean;
        xi[nf + nq + 1] = controls.h_r - h_r_mean;
        xi[nf + nq + 2] = controls.h_l - h_l_mean;
        return xi;
    }
    if (!controls.k)
        throw InvalidArgument("encode_controls: the nonlinear problem needs a conductivity input");
    return kld_inverse(k_basis, controls.k->values, gamma);
}

Vec SurrogateModel::map_latents(const Vec& xi) const {
    if (map_kind == MapKind::mlp) {
        if (!mlp) throw InvalidArgument("SurrogateModel: network map kind without a network");
        return mlp->apply(xi);
    }
    return linear_map.apply(xi);
}

Field SurrogateModel::predict(const ControlInput& controls) const {
    const Vec eta = map_latents(encode_controls(controls));
    return Field(grid, state.kind(), state.mean.values + state.modes * eta);
}

void SurrogateModel::validate() const {
    if (state.terms() == 0) throw InvalidArgument("SurrogateModel: empty state basis");
    if (state.kind() != FieldKind::space_time)
        throw InvalidArgument("SurrogateModel: the state basis must span space-time fields");
    if (problem != problem_of(condition))
        throw InvalidArgument("SurrogateModel: condition does not match the problem tag");
    if (map_kind == MapKind::mlp) {
        if (!mlp) throw InvalidArgument("SurrogateModel: network map kind without a network");
        if (mlp->n_in() != n_xi() || mlp->n_out() != n_eta())
            throw InvalidArgument("SurrogateModel: network shape does not match the bases");
    } else {
        if (linear_map.W.rows() != n_eta() || linear_map.W.cols() != n_xi())
            throw InvalidArgument("SurrogateModel: map shape does not match the bases");
    }
    if (problem == ProblemTag::linear) {
        if (f_basis.kind() != FieldKind::space_time || q_basis.kind() != FieldKind::time_only)
            throw InvalidArgument("SurrogateModel: control basis kinds are wrong");
    } else {
        if (k_basis.kind() != FieldKind::space_only)
            throw InvalidArgument("SurrogateModel: the conductivity basis must span space profiles");
        k_mf.validate();
    }
}

namespace {

// Control encodings of a linear ensemble, one column per sample, in the
// model's latent order [xi_f; xi_q; h0'; hr'; hl'].
Mat encode_linear_columns(const SurrogateModel& model, const LinearDataset& data, double gamma) {
    const Index nf = model.f_basis.terms();
    const Index nq = model.q_basis.terms();
    Mat xi(model.n_xi(), data.size());
    xi.topRows(nf) = kld_inverse_columns(model.f_basis, data.f, gamma);
    xi.middleRows(nf, nq) = kld_inverse_columns(model.q_basis, data.q, gamma);
    xi.row(nf + nq) = (data.h0.array() - model.h0_mean).matrix().transpose();
    xi.row(nf + nq + 1) = (data.h_r.array() - model.h_r_mean).matrix().transpose();
    xi.row(nf + nq + 2) = (data.h_l.array() - model.h_l_mean).matrix().transpose();
    return xi;
}

Mat map_columns(const SurrogateModel& model, const Mat& xi) {
    if (model.map_kind == MapKind::mlp) {
        if (!model.mlp) throw InvalidArgument("SurrogateModel: network map kind without a network");
        return model.mlp->apply_columns(xi);
    }
    return model.linear_map.apply_columns(xi);
}

Mat reconstruct_columns(const SurrogateModel& model, const Mat& eta) {
    Mat out = model.state.modes * eta;
    out.colwise() += model.state.mean.values;
    return out;
}

Mlp train_network(const Mat& xi, const Mat& eta, const TrainOptions& options) {
    MlpShape shape;
    shape.n_in = xi.rows();
    shape.n_out = eta.rows();
    shape.hidden = {50, 50, 50};
    RngStream rng(options.seed, stream_ns::mlp_init);
    Mlp net(shape, rng);
    train_adam(net, xi, eta, options.adam);
    return net;
}

} // namespace

SurrogateModel train_source(const LinearCondition& condition, const LinearDataset& data,
                            MapKind kind, const TrainOptions& options) {
    condition.validate(data.grid);
    if (data.size() < 2) throw InvalidArgument("train_source: need at least two samples");

    SurrogateModel model;
    model.problem = ProblemTag::linear;
    model.grid = data.grid;
    model.condition = condition;
    model.x_star = condition.x_star;
    model.gamma = options.train_gamma;

    model.state = empirical_basis(data.h, Field(data.grid, FieldKind::space_time),
                                  options.n_state_terms);

    // Control bases: analytic covariance eigenpairs anchored at the ensemble
    // means (the latent map has no bias term, so anchors must match the
    // training-sample means exactly).
    model.f_basis = kernel_basis(condition.scaled_f_kernel(), data.grid, BasisAxis::space_time,
                                 options.n_f_terms);
    model.f_basis.mean = Field(data.grid, FieldKind::space_time, data.f.rowwise().mean());
    model.q_basis = kernel_basis(condition.scaled_q_kernel(), data.grid, BasisAxis::time,
                                 options.n_q_terms);
    model.q_basis.mean = Field(data.grid, FieldKind::time_only, data.q.rowwise().mean());
    model.h0_mean = data.h0.mean();
    model.h_l_mean = data.h_l.mean();
    model.h_r_mean = data.h_r.mean();

    if (kind == MapKind::rls) {
        // Physics-driven map: the anchor absorbs the mean equation, the
        // residual system maps control fluctuations to state fluctuations.
        SourceSpec mean_source;
        mean_source.f = model.f_basis.mean;
        mean_source.q = model.q_basis.mean;
        mean_source.x_star = condition.x_star;
        const Ibc mean_ibc =
            Ibc::constants(data.grid, model.h0_mean, model.h_l_mean, model.h_r_mean);
        model.state.mean = solve_diffusion(data.grid, data.k, mean_source, mean_ibc);
        const ResidualSystem system = assemble_rls_linear(
            data.grid, data.k, model.state, model.f_basis, model.q_basis, condition.x_star);
        model.linear_map = rls_transfer_matrix(system);
        model.map_kind = MapKind::rls;
        return model;
    }

    const Mat xi = encode_linear_columns(model, data, options.train_gamma);
    const Mat eta = kld_inverse_columns(model.state, data.h, 0.0);
    if (kind == MapKind::ols) {
        model.linear_map = fit_ols(xi, eta, options.ols_ridge);
        model.map_kind = MapKind::ols;
    } else {
        model.mlp = train_network(xi, eta, options);
        model.map_kind = MapKind::mlp;
    }
    return model;
}

SurrogateModel train_source(const NonlinearCondition& condition, const NonlinearDataset& data,
                            MapKind kind, const TrainOptions& options) {
    condition.validate();
    if (data.size() < 2) throw InvalidArgument("train_source: need at least two samples");

    SurrogateModel model;
    model.problem = ProblemTag::nonlinear;
    model.grid = data.grid;
    model.condition = condition;
    model.gamma = 0.0;

    model.state = empirical_basis(data.h, Field(data.grid, FieldKind::space_time),
                                  options.n_state_terms);
    model.k_basis = empirical_basis(data.k, Field(data.grid, FieldKind::space_only),
                                    options.n_k_terms);
    // Harmonic ensemble mean: the effective conductivity of a layered random
    // medium, used for every mean-field anchor solve.  The expansion basis
    // keeps the arithmetic mean.
    model.k_mf = Field(data.grid, FieldKind::space_only,
                       (data.k.array().inverse().rowwise().mean()).inverse().matrix());

    if (kind == MapKind::rls) {
        model.state.mean = nonlinear_transfer_anchor(model, condition);
        model.linear_map =
            fit_rls_fluctuation(data.grid, model.state.mean, model.k_basis, model.state);
        model.map_kind = MapKind::rls;
        return model;
    }

    const Mat xi = kld_inverse_columns(model.k_basis, data.k, 0.0);
    const Mat eta = kld_inverse_columns(model.state, data.h, 0.0);
    if (kind == MapKind::ols) {
        model.linear_map = fit_ols(xi, eta, options.ols_ridge);
        model.map_kind = MapKind::ols;
    } else {
        model.mlp = train_network(xi, eta, options);
        model.map_kind = MapKind::mlp;
    }
    return model;
}

SurrogateModel transfer_linear(const SurrogateModel& source, const LinearCondition& target,
                               double gamma_transfer) {
    if (source.problem != ProblemTag::linear)
        throw InvalidArgument("transfer_linear: the model was trained on the nonlinear problem");
    target.validate(source.grid);

    SurrogateModel model = source;
    model.condition = target;

    SourceSpec mean_source;
    mean_source.f = target.f_mean;
    mean_source.q = target.q_mean;
    mean_source.x_star = target.x_star;
    const Ibc mean_ibc =
        Ibc::constants(source.grid, target.h0.mid(), target.h_l.mid(), target.h_r.mid());
    model.state.mean = solve_diffusion(source.grid, target.k, mean_source, mean_ibc);

    model.f_basis.mean = target.f_mean;
    model.q_basis.mean = target.q_mean;
    model.h0_mean = target.h0.mid();
    model.h_l_mean = target.h_l.mid();
    model.h_r_mean = target.h_r.mid();
    model.x_star = target.x_star;
    model.gamma = gamma_transfer;
    return model;
}

Field nonlinear_transfer_anchor(const SurrogateModel& source, const NonlinearCondition& target) {
    if (source.problem != ProblemTag::nonlinear)
        throw InvalidArgument("nonlinear_transfer_anchor: the model is for the linear problem");
    return solve_diffusion(source.grid, source.k_mf, SourceSpec{},
                           Ibc::constants(source.grid, target.h0, target.h_l, target.h_r));
}

CompressedPhysics nonlinear_physics_rows(const SurrogateModel& source, const Field& anchor,
                                         Index n_draws, std::uint64_t seed) {
    if (!source.mlp)
        throw InvalidArgument("nonlinear_physics_rows: physics rows refit a network model");
    if (n_draws < 1) throw InvalidArgument("nonlinear_physics_rows: need at least one draw");

    RngStream rng(seed, stream_ns::residual_draws);
    const Mat xi_draws = rng.normal_matrix(source.k_basis.terms(), n_draws);
    const Mat hidden = source.mlp->hidden_features(xi_draws);
    const Index width = source.mlp->last_layer_width() + 1;
    const Index n_eta = source.state.terms();

    std::vector<ResidualBlock> blocks;
    blocks.reserve(static_cast<std::size_t>(n_draws));
    for (Index i = 0; i < n_draws; ++i) {
        const NonlinearResidual residual = assemble_nonlinear_residual(
            source.grid, anchor, source.k_basis, source.state, xi_draws.col(i));
        // The reconstruction solves the drawn realization when A eta = -b;
        // QR of [A | -b] compresses those rows to R[:, :n] eta = R[:, n].
        Mat augmented(residual.a.rows(), n_eta + 1);
        augmented.leftCols(n_eta) = residual.a;
        augmented.col(n_eta) = -residual.b;
        const Eigen::HouseholderQR<Mat> qr(augmented);
        const Mat r = qr.matrixQR()
                          .topRows(n_eta + 1)
                          .triangularView<Eigen::Upper>();
        ResidualBlock block;
        block.ra = r.leftCols(n_eta);
        block.c = r.col(n_eta);
        block.z = Vec(width);
        block.z.head(width - 1) = hidden.col(i);
        block.z[width - 1] = 1.0;
        blocks.push_back(std::move(block));
    }
    return compress_physics_rows(blocks, n_eta, width);
}

SurrogateModel transfer_nonlinear(const SurrogateModel& source, const NonlinearCondition& target,
                                  TransferMethod method, const NonlinearTransferOptions& options,
                                  const NonlinearDataset* target_data) {
    if (source.problem != ProblemTag::nonlinear)
        throw InvalidArgument("transfer_nonlinear: the model was trained on the linear problem");
    target.validate();

    const Index n = options.n_target_samples;
    const bool wants_data = n > 0;
    if (wants_data && (target_data == nullptr || target_data->size() < n))
        throw InvalidArgument("transfer_nonlinear: n_target_samples exceeds the provided samples");
    if (!wants_data &&
        (method == TransferMethod::ols || method == TransferMethod::kl_dnn ||
         method == TransferMethod::combined))
        throw InvalidArgument(std::string("transfer_nonlinear: the ") + to_string(method) +
                              " refit requires target samples");
    const bool needs_network = method == TransferMethod::kl_dnn ||
                               method == TransferMethod::pi_kl_dnn ||
                               method == TransferMethod::combined;
    if (needs_network && !source.mlp)
        throw InvalidArgument(std::string("transfer_nonlinear: the ") + to_string(method) +
                              " refit needs a network source model");

    SurrogateModel model = source;
    model.condition = target;
    const Field anchor = nonlinear_transfer_anchor(source, target);
    model.state.mean = anchor;

    Mat xi_t, eta_t;
    if (wants_data) {
        xi_t = kld_inverse_columns(model.k_basis, target_data->k.leftCols(n), 0.0);
        eta_t = kld_inverse_columns(model.state, target_data->h.leftCols(n), 0.0);
    }

    switch (method) {
        case TransferMethod::rls: {
            model.linear_map =
                fit_rls_fluctuation(model.grid, anchor, model.k_basis, model.state);
            model.map_kind = MapKind::rls;
            model.mlp.reset();
            break;
        }
        case TransferMethod::ols: {
            const double lambda =
                options.data_ridge_scale * xi_t.squaredNorm() / static_cast<double>(xi_t.rows());
            model.linear_map = fit_ols(xi_t, eta_t, lambda);
            model.map_kind = MapKind::ols;
            model.mlp.reset();
            break;
        }
        case TransferMethod::kl_dnn: {
            const Mat features = model.mlp->hidden_features(xi_t);
            RetrainOptions retrain{options.lambda_r, options.policy};
            retrain_last_layer(*model.mlp, &features, &eta_t,
                               static_cast<const CompressedPhysics*>(nullptr), retrain);
            model.map_kind = MapKind::mlp;
            break;
        }
        case TransferMethod::pi_kl_dnn:
        case TransferMethod::combined: {
            CompressedPhysics local;
            const CompressedPhysics* physics = options.physics;
            if (physics == nullptr) {
                local = nonlinear_physics_rows(source, anchor, options.n_residual_draws,
                                               options.seed);
                physics = &local;
            }
            Mat features;
            if (wants_data) features = model.mlp->hidden_features(xi_t);
            RetrainOptions retrain{options.lambda_r, options.policy};
            retrain_last_layer(*model.mlp, wants_data ? &features : nullptr,
                               wants_data ? &eta_t : nullptr, physics, retrain);
            model.map_kind = MapKind::mlp;
            break;
        }
    }
    return model;
}

Mat predict_columns(const SurrogateModel& model, const LinearDataset& samples) {
    if (model.problem != ProblemTag::linear)
        throw InvalidArgument("predict_columns: model/problem mismatch");
    const Mat xi = encode_linear_columns(model, samples, model.gamma);
    return reconstruct_columns(model, map_columns(model, xi));
}

Mat predict_columns(const SurrogateModel& model, const NonlinearDataset& samples) {
    if (model.problem != ProblemTag::nonlinear)
        throw InvalidArgument("predict_columns: model/problem mismatch");
    const Mat xi = kld_inverse_columns(model.k_basis, samples.k, model.gamma);
    return reconstruct_columns(model, map_columns(model, xi));
}

} // namespace kltwin
