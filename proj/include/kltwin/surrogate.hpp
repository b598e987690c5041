#pragma once

#include <optional>
#include <string>

#include "kltwin/basis.hpp"
#include "kltwin/condition.hpp"
#include "kltwin/dataset.hpp"
#include "kltwin/linear_map.hpp"
#include "kltwin/mlp.hpp"

namespace kltwin {

enum class MapKind { ols, rls, mlp };
const char* to_string(MapKind kind);
MapKind parse_map_kind(const std::string& name);

enum class TransferMethod { rls, ols, kl_dnn, pi_kl_dnn, combined };
const char* to_string(TransferMethod method);
TransferMethod parse_transfer_method(const std::string& name);

// Concrete control inputs for one prediction: f, q and the IBC scalars for the
// linear problem, the conductivity profile for the nonlinear one.
struct ControlInput {
    std::optional<Field> f;
    std::optional<Field> q;
    std::optional<Field> k;
    double h0 = 0.0, h_l = 0.0, h_r = 0.0;
};

// Latent-space digital twin of one diffusion problem under one operating
// condition.  Controls map to expansion coefficients through regularized
// inverse KLDs, a latent map sends control coefficients to state
// coefficients, and the state expansion reconstructs the space-time solution:
//
//   h_hat = state.mean + state.modes * map([xi_f; xi_q; h0'; hr'; hl'])  (linear)
//   h_hat = state.mean + state.modes * map(xi_k)                         (nonlinear)
//
// The state mean doubles as the prediction anchor; transfer operations swap it
// for the target condition's mean-field solve.
struct SurrogateModel {
    ProblemTag problem = ProblemTag::linear;
    Grid grid;
    ConditionSpec condition;

    KlBasis state;

    // Linear-problem controls.
    KlBasis f_basis;
    KlBasis q_basis;
    double h0_mean = 0.0, h_l_mean = 0.0, h_r_mean = 0.0;
    double x_star = 0.0;

    // Nonlinear-problem controls.
    KlBasis k_basis;
    Field k_mf;  // harmonic-mean conductivity driving mean-field anchor solves

    // Control-encoding regularization at serve time (training value plus any
    // transfer addition).
    double gamma = 0.0;

    MapKind map_kind = MapKind::ols;
    LinearMap linear_map;
    std::optional<Mlp> mlp;

    Index n_xi() const;
    Index n_eta() const { return state.terms(); }

    Vec encode_controls(const ControlInput& controls) const;
    Vec map_latents(const Vec& xi) const;
    Field predict(const ControlInput& controls) const;

    void validate() const;
};

struct TrainOptions {
    Index n_state_terms = 40;
    Index n_f_terms = 200;  // linear
    Index n_q_terms = 40;   // linear
    Index n_k_terms = 20;   // nonlinear
    double train_gamma = 0.0;  // control-encoding ridge recorded in the model
    double ols_ridge = 0.0;
    AdamOptions adam;
    std::uint64_t seed = 0;  // network-initialization stream
};

SurrogateModel train_source(const LinearCondition& condition, const LinearDataset& data,
                            MapKind kind, const TrainOptions& options);
SurrogateModel train_source(const NonlinearCondition& condition, const NonlinearDataset& data,
                            MapKind kind, const TrainOptions& options);

// One-shot transfer for the linear problem: a single mean-field FD solve under
// the target means becomes the new anchor; eigenpairs and the latent map are
// copied unchanged; control anchors become the target means; gamma_transfer
// replaces the stored encoding gamma.
SurrogateModel transfer_linear(const SurrogateModel& source, const LinearCondition& target,
                               double gamma_transfer);

// The single mean-field FD solve every nonlinear transfer method shares: the
// source harmonic-mean conductivity under the target IBC values, no sources.
Field nonlinear_transfer_anchor(const SurrogateModel& source, const NonlinearCondition& target);

// Residual constraints on the final network layer: per conductivity-latent
// draw, the interior PDE residual of (anchor + state modes * eta) is reduced by
// QR to square blocks and stacked into one compressed system.  The result does
// not depend on the target data, so one build serves retrains with every data
// size.
CompressedPhysics nonlinear_physics_rows(const SurrogateModel& source, const Field& anchor,
                                         Index n_draws, std::uint64_t seed);

struct NonlinearTransferOptions {
    Index n_target_samples = 0;    // leading columns of the target dataset to use
    Index n_residual_draws = 250;  // conductivity-latent realizations for physics rows
    double lambda_r = 1e-4;        // physics-row weight when data rows are present
    // Ridge for the data-driven map refit (ols method):
    // lambda = data_ridge_scale * trace(Xi Xi^T) / n_xi.
    double data_ridge_scale = 1e-3;
    UnderdeterminedPolicy policy = UnderdeterminedPolicy::reject;
    std::uint64_t seed = 0;  // residual-draw stream
    // Optional precomputed physics rows (reused across data sizes); when null,
    // physics-informed methods build them from n_residual_draws and seed.
    const CompressedPhysics* physics = nullptr;
};

// Transfer for the nonlinear problem.  Every method starts from the anchor
// solve above (the only PDE solve); the map is then refit per method:
//   rls       - fluctuation-equation least squares (no data),
//   ols       - ridge-regularized linear refit on target latent pairs,
//   kl_dnn    - last-layer refit on target latent pairs (network models),
//   pi_kl_dnn - last-layer refit on PDE-residual rows over n_residual_draws
//               conductivity latents, plus data rows when provided,
//   combined  - pi_kl_dnn with mandatory data rows.
SurrogateModel transfer_nonlinear(const SurrogateModel& source, const NonlinearCondition& target,
                                  TransferMethod method, const NonlinearTransferOptions& options,
                                  const NonlinearDataset* target_data = nullptr);

// Batch prediction over the samples of a dataset (columns align).
Mat predict_columns(const SurrogateModel& model, const LinearDataset& samples);
Mat predict_columns(const SurrogateModel& model, const NonlinearDataset& samples);

} // namespace kltwin
