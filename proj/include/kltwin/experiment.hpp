#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "kltwin/report.hpp"
#include "kltwin/surrogate.hpp"

namespace kltwin {

// One linear-problem transfer target: covariance scales relative to the source
// kernels plus the encoding regularizations to evaluate (several gammas share
// one condition and one test set).
struct LinearTargetSpec {
    std::string label;
    double alpha = 1.0;
    double beta = 1.0;
    std::vector<double> gammas{0.0};
};

// One nonlinear-problem transfer method: the data sizes to evaluate (empty =
// a single evaluation without target data) and the physics-row parameters.
struct NonlinearMethodSpec {
    TransferMethod method = TransferMethod::rls;
    std::vector<Index> n_train;
    Index n_residual = 250;
    double lambda_r = 1e-4;
};

struct ExperimentConfig {
    std::string experiment = "experiment";
    ProblemTag problem = ProblemTag::linear;
    Grid grid;
    std::uint64_t master_seed = 0;

    Index n_train = 1000;
    Index n_test = 20;

    Index n_state = 40;
    Index n_f = 200;  // linear control bases
    Index n_q = 40;
    Index n_k = 20;  // nonlinear conductivity basis

    double train_gamma = 0.0;
    double ols_ridge = 0.0;
    MapKind linear_map = MapKind::ols;  // latent map fitted on the linear problem
    AdamOptions adam;

    // Linear problem: one frozen lognormal conductivity plus transfer targets.
    std::uint64_t conductivity_seed = 0;
    double conductivity_variance = 0.6;
    double conductivity_corr = 0.5;
    Index conductivity_terms = 20;
    std::vector<LinearTargetSpec> targets;

    // Nonlinear problem: one sub-experiment per y-variance.
    std::vector<double> sigma2_y;
    std::array<double, 3> source_ibc{1.05, 1.05, 0.95};  // h0, h_l, h_r
    std::array<double, 3> target_ibc{0.95, 0.95, 1.05};
    std::vector<MapKind> source_methods{MapKind::rls, MapKind::ols, MapKind::mlp};
    std::vector<NonlinearMethodSpec> target_methods;
    Index target_pool = 80;
    double data_ridge_scale = 1e-3;
    UnderdeterminedPolicy policy = UnderdeterminedPolicy::reject;

    void validate() const;
};

// Strict JSON schema: unknown keys, missing required keys, or out-of-range
// values raise InvalidArgument (CLI exit code 2).
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& json_text);

// Built-in parameterizations; the bundled configs/ files hold the same values.
ExperimentConfig linear_benchmark_config();
ExperimentConfig nonlinear_benchmark_config();

// Condition builders shared by the runners and the CLI.
TrainOptions train_options_of(const ExperimentConfig& config);
LinearCondition config_linear_source(const ExperimentConfig& config);
LinearCondition config_linear_target(const ExperimentConfig& config,
                                     const LinearTargetSpec& target);
NonlinearCondition config_nonlinear_source(const ExperimentConfig& config, double sigma2);
NonlinearCondition config_nonlinear_target(const ExperimentConfig& config, double sigma2);

// Per-condition stream offsets inside the test/dataset namespaces, so every
// condition and every sigma2 sub-experiment draws disjoint sample streams.
namespace stream_block {
inline constexpr std::uint64_t condition = 1ULL << 16;
inline constexpr std::uint64_t sigma = 1ULL << 20;
} // namespace stream_block

// Source training + every configured transfer, evaluated on fresh test
// ensembles of n_test samples; rows in configuration order.
ErrorReport run_linear_experiment(const ExperimentConfig& config, int threads = 0);
ErrorReport run_nonlinear_experiment(const ExperimentConfig& config, int threads = 0);
ErrorReport run_experiment(const ExperimentConfig& config, int threads = 0);

} // namespace kltwin
