#include "kltwin/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "kltwin/metrics.hpp"

namespace kltwin {

void ExperimentConfig::validate() const {
    if (experiment.empty()) throw InvalidArgument("config: experiment id must not be empty");
    if (n_train < 2) throw InvalidArgument("config: n_train must be at least 2");
    if (n_test < 0) throw InvalidArgument("config: n_test must be nonnegative");
    if (n_state < 1 || n_state > n_train)
        throw InvalidArgument("config: state basis size must be in [1, n_train]");
    if (train_gamma < 0.0 || ols_ridge < 0.0 || data_ridge_scale < 0.0)
        throw InvalidArgument("config: regularizations must be nonnegative");

    if (problem == ProblemTag::linear) {
        if (n_f < 1 || n_f > grid.total_nodes())
            throw InvalidArgument("config: f basis size must be in [1, total grid nodes]");
        if (n_q < 1 || n_q > grid.time_nodes())
            throw InvalidArgument("config: q basis size must be in [1, time nodes]");
        if (conductivity_variance < 0.0 || conductivity_corr <= 0.0 || conductivity_terms < 1)
            throw InvalidArgument("config: conductivity field parameters out of range");
        for (const LinearTargetSpec& target : targets) {
            if (target.label.empty()) throw InvalidArgument("config: target label must not be empty");
            if (target.alpha <= 0.0 || target.beta <= 0.0)
                throw InvalidArgument("config: target '" + target.label +
                                      "': alpha and beta must be positive");
            if (target.gammas.empty())
                throw InvalidArgument("config: target '" + target.label +
                                      "' needs at least one gamma");
            for (double g : target.gammas)
                if (g < 0.0)
                    throw InvalidArgument("config: target '" + target.label +
                                          "': gamma must be nonnegative");
        }
        return;
    }

    if (sigma2_y.empty()) throw InvalidArgument("config: sigma2_y must not be empty");
    for (double s2 : sigma2_y)
        if (!(s2 > 0.0)) throw InvalidArgument("config: sigma2_y entries must be positive");
    if (n_k < 1 || n_k > n_train)
        throw InvalidArgument("config: conductivity basis size must be in [1, n_train]");
    if (source_methods.empty()) throw InvalidArgument("config: source_methods must not be empty");
    Index pool_needed = 0;
    for (const NonlinearMethodSpec& method : target_methods) {
        for (Index n : method.n_train) {
            if (n < 0) throw InvalidArgument("config: n_train entries must be nonnegative");
            pool_needed = std::max(pool_needed, n);
        }
        if (method.method == TransferMethod::pi_kl_dnn ||
            method.method == TransferMethod::combined) {
            if (method.n_residual < 1)
                throw InvalidArgument("config: physics-informed methods need n_residual >= 1");
            if (!(method.lambda_r > 0.0))
                throw InvalidArgument("config: lambda_r must be positive");
        }
    }
    if (target_pool < pool_needed)
        throw InvalidArgument("config: target_pool is smaller than the largest n_train");
}

// --- parsing -----------------------------------------------------------------

namespace {

using nlohmann::json;

void check_keys(const json& object, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (const auto& item : object.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known)
            throw InvalidArgument("config: unknown key '" + item.key() + "' in " + where);
    }
}

const json& require(const json& object, const std::string& where, const char* key) {
    const auto it = object.find(key);
    if (it == object.end())
        throw InvalidArgument("config: missing key '" + std::string(key) + "' in " + where);
    return *it;
}

ExperimentConfig parse_config_json(const json& root) {
    check_keys(root, "the top level",
               {"experiment", "problem", "grid", "seeds", "n_train", "n_test", "basis",
                "train_gamma", "ols_ridge", "map", "adam", "conductivity", "targets", "sigma2_y",
                "source_ibc", "target_ibc", "source_methods", "target_methods", "target_pool",
                "data_ridge_scale", "underdetermined"});

    ExperimentConfig config;
    config.experiment = root.value("experiment", std::string("experiment"));

    const std::string problem = require(root, "the top level", "problem").get<std::string>();
    if (problem == "linear") config.problem = ProblemTag::linear;
    else if (problem == "nonlinear") config.problem = ProblemTag::nonlinear;
    else throw InvalidArgument("config: problem must be 'linear' or 'nonlinear'");

    const json& grid = require(root, "the top level", "grid");
    check_keys(grid, "grid", {"n_x", "n_t", "length", "duration"});
    config.grid = build_grid(require(grid, "grid", "n_x").get<Index>(),
                             require(grid, "grid", "n_t").get<Index>(),
                             require(grid, "grid", "length").get<double>(),
                             require(grid, "grid", "duration").get<double>());

    const json& seeds = require(root, "the top level", "seeds");
    check_keys(seeds, "seeds", {"master", "conductivity"});
    config.master_seed = require(seeds, "seeds", "master").get<std::uint64_t>();
    config.conductivity_seed = seeds.value("conductivity", config.master_seed);

    config.n_train = root.value("n_train", config.n_train);
    config.n_test = root.value("n_test", config.n_test);
    config.train_gamma = root.value("train_gamma", config.train_gamma);
    config.ols_ridge = root.value("ols_ridge", config.ols_ridge);
    config.data_ridge_scale = root.value("data_ridge_scale", config.data_ridge_scale);
    config.target_pool = root.value("target_pool", config.target_pool);

    if (root.contains("basis")) {
        const json& basis = root["basis"];
        check_keys(basis, "basis", {"state", "f", "q", "k"});
        config.n_state = basis.value("state", config.n_state);
        config.n_f = basis.value("f", config.n_f);
        config.n_q = basis.value("q", config.n_q);
        config.n_k = basis.value("k", config.n_k);
    }

    if (root.contains("map")) config.linear_map = parse_map_kind(root["map"].get<std::string>());

    if (root.contains("adam")) {
        const json& adam = root["adam"];
        check_keys(adam, "adam",
                   {"learning_rate", "beta1", "beta2", "epsilon", "max_epochs", "tolerance",
                    "patience"});
        config.adam.learning_rate = adam.value("learning_rate", config.adam.learning_rate);
        config.adam.beta1 = adam.value("beta1", config.adam.beta1);
        config.adam.beta2 = adam.value("beta2", config.adam.beta2);
        config.adam.epsilon = adam.value("epsilon", config.adam.epsilon);
        config.adam.max_epochs = adam.value("max_epochs", config.adam.max_epochs);
        config.adam.tolerance = adam.value("tolerance", config.adam.tolerance);
        config.adam.patience = adam.value("patience", config.adam.patience);
    }

    if (root.contains("conductivity")) {
        const json& cond = root["conductivity"];
        check_keys(cond, "conductivity", {"variance", "correlation", "terms"});
        config.conductivity_variance = cond.value("variance", config.conductivity_variance);
        config.conductivity_corr = cond.value("correlation", config.conductivity_corr);
        config.conductivity_terms = cond.value("terms", config.conductivity_terms);
    }

    if (root.contains("targets")) {
        config.targets.clear();
        for (const json& entry : root["targets"]) {
            check_keys(entry, "targets[]", {"label", "alpha", "beta", "gammas"});
            LinearTargetSpec target;
            target.label = require(entry, "targets[]", "label").get<std::string>();
            target.alpha = entry.value("alpha", 1.0);
            target.beta = entry.value("beta", 1.0);
            if (entry.contains("gammas"))
                target.gammas = entry["gammas"].get<std::vector<double>>();
            config.targets.push_back(std::move(target));
        }
    }

    if (root.contains("sigma2_y"))
        config.sigma2_y = root["sigma2_y"].get<std::vector<double>>();

    const auto read_ibc = [&](const char* key, std::array<double, 3>& out) {
        if (!root.contains(key)) return;
        const auto values = root[key].get<std::vector<double>>();
        if (values.size() != 3)
            throw InvalidArgument(std::string("config: ") + key + " needs [h0, h_l, h_r]");
        std::copy(values.begin(), values.end(), out.begin());
    };
    read_ibc("source_ibc", config.source_ibc);
    read_ibc("target_ibc", config.target_ibc);

    if (root.contains("source_methods")) {
        config.source_methods.clear();
        for (const json& name : root["source_methods"])
            config.source_methods.push_back(parse_map_kind(name.get<std::string>()));
    }

    if (root.contains("target_methods")) {
        config.target_methods.clear();
        for (const json& entry : root["target_methods"]) {
            check_keys(entry, "target_methods[]", {"method", "n_train", "n_residual", "lambda_r"});
            NonlinearMethodSpec method;
            method.method =
                parse_transfer_method(require(entry, "target_methods[]", "method").get<std::string>());
            if (entry.contains("n_train"))
                method.n_train = entry["n_train"].get<std::vector<Index>>();
            method.n_residual = entry.value("n_residual", method.n_residual);
            method.lambda_r = entry.value("lambda_r", method.lambda_r);
            config.target_methods.push_back(std::move(method));
        }
    }

    if (root.contains("underdetermined")) {
        const std::string policy = root["underdetermined"].get<std::string>();
        if (policy == "reject") config.policy = UnderdeterminedPolicy::reject;
        else if (policy == "min_change") config.policy = UnderdeterminedPolicy::min_change;
        else throw InvalidArgument("config: underdetermined must be 'reject' or 'min_change'");
    }

    config.validate();
    return config;
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    try {
        return parse_config_json(root);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("config: cannot open '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

// --- built-in benchmark parameterizations ------------------------------------

ExperimentConfig linear_benchmark_config() {
    ExperimentConfig config;
    config.experiment = "table1";
    config.problem = ProblemTag::linear;
    config.grid = build_grid(30, 250, 1.0, 0.03);
    config.master_seed = 12345;
    config.conductivity_seed = 36;
    config.n_train = 1000;
    config.n_test = 20;
    config.n_state = 40;
    config.n_f = 200;
    config.n_q = 40;
    config.train_gamma = 3e-8;
    config.targets = {
        {"target1", 1.0, 1.0, {0.0}},
        {"target2_alpha0.5", 0.5, 1.0, {1.0, 0.0}},
        {"target2_alpha0.8", 0.8, 1.0, {0.01}},
        {"target2_alpha1.2", 1.2, 1.0, {0.0}},
        {"target2_alpha1.5", 1.5, 1.0, {0.0}},
        {"target3_beta0.5", 1.0, 0.5, {0.0}},
        {"target3_beta0.8", 1.0, 0.8, {0.0}},
        {"target3_beta1.2", 1.0, 1.2, {0.0}},
        {"target3_beta1.5", 1.0, 1.5, {0.0}},
    };
    return config;
}

ExperimentConfig nonlinear_benchmark_config() {
    ExperimentConfig config;
    config.experiment = "table2";
    config.problem = ProblemTag::nonlinear;
    config.grid = build_grid(30, 250, 1.0, 0.03);
    config.master_seed = 4242;
    config.n_train = 1000;
    config.n_test = 20;
    config.n_state = 40;
    config.n_k = 20;
    config.sigma2_y = {0.1, 0.3, 0.6};
    config.source_methods = {MapKind::rls, MapKind::ols, MapKind::mlp};
    config.target_methods = {
        {TransferMethod::rls, {}, 250, 1e-4},
        {TransferMethod::ols, {5, 20, 80}, 250, 1e-4},
        {TransferMethod::kl_dnn, {5, 20, 80}, 250, 1e-4},
        {TransferMethod::pi_kl_dnn, {0, 5, 20, 80}, 250, 1e-4},
    };
    config.target_pool = 80;
    config.data_ridge_scale = 1e-3;
    config.policy = UnderdeterminedPolicy::min_change;
    return config;
}

// --- condition builders --------------------------------------------------------

TrainOptions train_options_of(const ExperimentConfig& config) {
    TrainOptions options;
    options.n_state_terms = config.n_state;
    options.n_f_terms = config.n_f;
    options.n_q_terms = config.n_q;
    options.n_k_terms = config.n_k;
    options.train_gamma = config.train_gamma;
    options.ols_ridge = config.ols_ridge;
    options.adam = config.adam;
    options.seed = config.master_seed;
    return options;
}

LinearCondition config_linear_source(const ExperimentConfig& config) {
    return linear_source_condition(
        config.grid,
        draw_log_conductivity(config.grid, config.conductivity_variance, config.conductivity_corr,
                              config.conductivity_terms, config.conductivity_seed));
}

LinearCondition config_linear_target(const ExperimentConfig& config,
                                     const LinearTargetSpec& target) {
    return linear_target_condition(
        config.grid,
        draw_log_conductivity(config.grid, config.conductivity_variance, config.conductivity_corr,
                              config.conductivity_terms, config.conductivity_seed),
        target.alpha, target.beta);
}

NonlinearCondition config_nonlinear_source(const ExperimentConfig& config, double sigma2) {
    return nonlinear_condition(sigma2, config.source_ibc[0], config.source_ibc[1],
                               config.source_ibc[2]);
}

NonlinearCondition config_nonlinear_target(const ExperimentConfig& config, double sigma2) {
    return nonlinear_condition(sigma2, config.target_ibc[0], config.target_ibc[1],
                               config.target_ibc[2]);
}

// --- runners -------------------------------------------------------------------

namespace {

ReportRow base_row(const ExperimentConfig& config, std::string condition, std::string method) {
    ReportRow row;
    row.experiment = config.experiment;
    row.condition = std::move(condition);
    row.method = std::move(method);
    row.seed = config.master_seed;
    return row;
}

void fill_errors(ReportRow& row, const Mat& reference, const Mat& prediction) {
    row.mean_error = mean_relative_error(reference, prediction);
    row.std_error = std_relative_error(reference, prediction);
    row.n_test = reference.cols();
}

} // namespace

ErrorReport run_linear_experiment(const ExperimentConfig& config, int threads) {
    config.validate();
    if (config.problem != ProblemTag::linear)
        throw InvalidArgument("run_linear_experiment: config is for the nonlinear problem");

    ErrorReport report;
    if (config.n_test == 0) return report;  // vacuous run; the CLI warns

    const LinearCondition source = config_linear_source(config);
    const TrainOptions options = train_options_of(config);
    const LinearDataset train =
        generate_linear_dataset(config.grid, source, config.n_train, config.n_f, config.n_q,
                                config.master_seed, stream_ns::dataset, threads);
    const SurrogateModel model = train_source(source, train, config.linear_map, options);

    {
        const LinearDataset test = generate_linear_testset(config.grid, source, config.n_test,
                                                           config.master_seed, stream_ns::test,
                                                           threads);
        ReportRow row = base_row(config, "source", to_string(model.map_kind));
        row.alpha = 1.0;
        row.beta = 1.0;
        row.gamma = config.train_gamma;
        fill_errors(row, test.h, predict_columns(model, test));
        report.rows.push_back(std::move(row));
    }

    for (std::size_t ti = 0; ti < config.targets.size(); ++ti) {
        const LinearTargetSpec& spec = config.targets[ti];
        const LinearCondition target = config_linear_target(config, spec);
        const LinearDataset test = generate_linear_testset(
            config.grid, target, config.n_test, config.master_seed,
            stream_ns::test + (ti + 1) * stream_block::condition, threads);
        for (double gamma : spec.gammas) {
            const SurrogateModel transferred = transfer_linear(model, target, gamma);
            ReportRow row = base_row(config, spec.label, to_string(transferred.map_kind));
            row.alpha = spec.alpha;
            row.beta = spec.beta;
            row.gamma = gamma;
            fill_errors(row, test.h, predict_columns(transferred, test));
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

ErrorReport run_nonlinear_experiment(const ExperimentConfig& config, int threads) {
    config.validate();
    if (config.problem != ProblemTag::nonlinear)
        throw InvalidArgument("run_nonlinear_experiment: config is for the linear problem");

    ErrorReport report;
    if (config.n_test == 0) return report;  // vacuous run; the CLI warns

    const TrainOptions options = train_options_of(config);

    for (std::size_t si = 0; si < config.sigma2_y.size(); ++si) {
        const double sigma2 = config.sigma2_y[si];
        const std::uint64_t block = si * stream_block::sigma;
        const NonlinearCondition source = config_nonlinear_source(config, sigma2);
        const NonlinearCondition target = config_nonlinear_target(config, sigma2);

        const NonlinearDataset train = generate_nonlinear_dataset(
            config.grid, source, config.n_train, config.master_seed, stream_ns::dataset + block,
            threads);
        const NonlinearDataset test_source = generate_nonlinear_dataset(
            config.grid, source, config.n_test, config.master_seed, stream_ns::test + block,
            threads);
        const NonlinearDataset test_target = generate_nonlinear_dataset(
            config.grid, target, config.n_test, config.master_seed,
            stream_ns::test + block + stream_block::condition, threads);
        const NonlinearDataset pool = generate_nonlinear_dataset(
            config.grid, target, config.target_pool, config.master_seed,
            stream_ns::target_pool + block, threads);

        std::map<MapKind, SurrogateModel> sources;
        for (MapKind kind : config.source_methods) {
            SurrogateModel model = train_source(source, train, kind, options);
            ReportRow row = base_row(config, "source", to_string(kind));
            row.sigma2_y = sigma2;
            fill_errors(row, test_source.h, predict_columns(model, test_source));
            report.rows.push_back(std::move(row));
            sources.emplace(kind, std::move(model));
        }

        for (const NonlinearMethodSpec& spec : config.target_methods) {
            const MapKind base = spec.method == TransferMethod::rls   ? MapKind::rls
                                 : spec.method == TransferMethod::ols ? MapKind::ols
                                                                      : MapKind::mlp;
            const auto it = sources.find(base);
            if (it == sources.end())
                throw InvalidArgument(std::string("config: target method ") +
                                      to_string(spec.method) + " needs source method " +
                                      to_string(base));
            const SurrogateModel& source_model = it->second;

            NonlinearTransferOptions transfer;
            transfer.n_residual_draws = spec.n_residual;
            transfer.lambda_r = spec.lambda_r;
            transfer.data_ridge_scale = config.data_ridge_scale;
            transfer.policy = config.policy;
            transfer.seed = config.master_seed;

            const bool physics_informed = spec.method == TransferMethod::pi_kl_dnn ||
                                          spec.method == TransferMethod::combined;
            CompressedPhysics physics;
            if (physics_informed) {
                // One residual-row build serves every data size of this method.
                const Field anchor = nonlinear_transfer_anchor(source_model, target);
                physics = nonlinear_physics_rows(source_model, anchor, spec.n_residual,
                                                 config.master_seed);
                transfer.physics = &physics;
            }

            const auto evaluate = [&](std::optional<Index> n_train) {
                transfer.n_target_samples = n_train.value_or(0);
                const SurrogateModel transferred =
                    transfer_nonlinear(source_model, target, spec.method, transfer, &pool);
                ReportRow row = base_row(config, "target", to_string(spec.method));
                row.sigma2_y = sigma2;
                row.n_train = n_train;
                fill_errors(row, test_target.h, predict_columns(transferred, test_target));
                report.rows.push_back(std::move(row));
            };

            if (spec.n_train.empty()) evaluate(std::nullopt);
            else
                for (Index n : spec.n_train) evaluate(n);
        }
    }
    return report;
}

ErrorReport run_experiment(const ExperimentConfig& config, int threads) {
    return config.problem == ProblemTag::linear ? run_linear_experiment(config, threads)
                                                : run_nonlinear_experiment(config, threads);
}

} // namespace kltwin
