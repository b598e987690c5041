// kltwin — command-line front end.
//
// Subcommands:
//   generate   draw a Monte Carlo dataset for a configured condition
//   train      fit a source surrogate model (rls | ols | kl_dnn)
//   transfer   adapt a trained model to a target condition
//   evaluate   measure a model against fresh test realizations
//   reproduce  run a full benchmark (table1 | table2) and export the report
//
// Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure,
// 4 artifact format error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <variant>

#include "CLI11.hpp"

#include "kltwin/experiment.hpp"
#include "kltwin/kltw_io.hpp"
#include "kltwin/metrics.hpp"
#include "kltwin/report.hpp"
#include "kltwin/surrogate.hpp"

namespace fs = std::filesystem;
using namespace kltwin;

namespace {

struct CommonOptions {
    std::string config_path;
    std::string experiment;  // built-in config name: table1 | table2
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::string format = "both";
    int threads = 0;
};

void add_common(CLI::App& cmd, CommonOptions& common, bool with_format = false) {
    auto* config = cmd.add_option("--config", common.config_path, "experiment config (JSON)");
    auto* builtin = cmd.add_option("--experiment", common.experiment,
                                   "built-in benchmark config instead of --config");
    builtin->check(CLI::IsMember({"table1", "table2"}));
    builtin->excludes(config);
    cmd.add_option("--seed", common.seed, "override the config master seed");
    cmd.add_option("--out", common.out, "output directory");
    cmd.add_option("--threads", common.threads,
                   "worker threads (0 = KLTWIN_THREADS or hardware)");
    if (with_format)
        cmd.add_option("--format", common.format, "report format")
            ->check(CLI::IsMember({"csv", "json", "both"}));
}

// Resolve the experiment configuration from --config / --experiment and apply
// the --seed override.
ExperimentConfig resolve_config(const CommonOptions& common) {
    ExperimentConfig config;
    if (!common.config_path.empty()) config = load_config(common.config_path);
    else if (common.experiment == "table1") config = linear_benchmark_config();
    else if (common.experiment == "table2") config = nonlinear_benchmark_config();
    else
        throw InvalidArgument("pass --config <path> or --experiment table1|table2");
    if (common.seed) config.master_seed = *common.seed;
    return config;
}

// Find the configured condition by name: "source" or a linear target label.
// Nonlinear conditions additionally need --sigma2.
struct NamedCondition {
    ConditionSpec spec;
    std::optional<LinearTargetSpec> target;  // set for linear target labels
};

NamedCondition find_condition(const ExperimentConfig& config, const std::string& name,
                              std::optional<double> sigma2) {
    if (config.problem == ProblemTag::linear) {
        if (sigma2)
            throw InvalidArgument("--sigma2 applies to the nonlinear problem only");
        if (name == "source") return {config_linear_source(config), std::nullopt};
        for (const LinearTargetSpec& target : config.targets)
            if (target.label == name) return {config_linear_target(config, target), target};
        throw InvalidArgument("unknown condition '" + name +
                              "' (expected 'source' or a configured target label)");
    }
    if (!sigma2) throw InvalidArgument("the nonlinear problem needs --sigma2");
    if (name == "source") return {config_nonlinear_source(config, *sigma2), std::nullopt};
    if (name == "target") return {config_nonlinear_target(config, *sigma2), std::nullopt};
    throw InvalidArgument("unknown condition '" + name + "' (expected 'source' or 'target')");
}

void emit_report(const ErrorReport& report, const fs::path& dir, const std::string& base,
                 const std::string& format) {
    fs::create_directories(dir);
    if (format == "csv" || format == "both") {
        std::ofstream out(dir / (base + ".csv"));
        out << to_csv(report);
    }
    if (format == "json" || format == "both") {
        std::ofstream out(dir / (base + ".json"));
        out << to_json(report) << '\n';
    }
    if (report.rows.empty())
        std::cerr << "warning: no test samples requested; the report has no rows\n";
    for (const ReportRow& row : report.rows) {
        std::cout << row.condition << ' ' << row.method;
        if (row.sigma2_y) std::cout << " sigma2=" << *row.sigma2_y;
        if (row.alpha) std::cout << " alpha=" << *row.alpha;
        if (row.beta) std::cout << " beta=" << *row.beta;
        if (row.gamma) std::cout << " gamma=" << *row.gamma;
        if (row.n_train) std::cout << " n_train=" << *row.n_train;
        std::cout << " error=" << row.mean_error << " +- " << row.std_error << '\n';
    }
}

int run_generate(const CommonOptions& common, const std::string& condition_name,
                 std::optional<double> sigma2, std::optional<Index> count, bool testset) {
    const ExperimentConfig config = resolve_config(common);
    const NamedCondition condition = find_condition(config, condition_name, sigma2);
    const fs::path out = fs::path(common.out);
    fs::create_directories(out);
    const fs::path file = out / "dataset.kltw";

    if (config.problem == ProblemTag::linear) {
        const auto& linear = std::get<LinearCondition>(condition.spec);
        const Index n = count.value_or(testset ? config.n_test : config.n_train);
        if (testset) {
            save_dataset(file, generate_linear_testset(config.grid, linear, n,
                                                       config.master_seed, stream_ns::test,
                                                       common.threads));
        } else {
            save_dataset(file, generate_linear_dataset(config.grid, linear, n, config.n_f,
                                                       config.n_q, config.master_seed,
                                                       stream_ns::dataset, common.threads));
        }
    } else {
        const auto& nonlinear = std::get<NonlinearCondition>(condition.spec);
        const Index n = count.value_or(testset ? config.n_test : config.n_train);
        const std::uint64_t stream = testset ? stream_ns::test : stream_ns::dataset;
        save_dataset(file, generate_nonlinear_dataset(config.grid, nonlinear, n,
                                                      config.master_seed, stream,
                                                      common.threads));
    }
    std::cout << "wrote " << file.string() << '\n';
    return 0;
}

int run_train(const CommonOptions& common, const std::string& map_name,
              std::optional<double> sigma2, const std::string& data_path) {
    const ExperimentConfig config = resolve_config(common);
    const MapKind kind = parse_map_kind(map_name);
    const TrainOptions options = train_options_of(config);
    const NamedCondition condition = find_condition(config, "source", sigma2);

    SurrogateModel model = [&] {
        if (config.problem == ProblemTag::linear) {
            const auto& linear = std::get<LinearCondition>(condition.spec);
            LinearDataset data;
            if (data_path.empty()) {
                data = generate_linear_dataset(config.grid, linear, config.n_train, config.n_f,
                                               config.n_q, config.master_seed,
                                               stream_ns::dataset, common.threads);
            } else {
                auto loaded = load_dataset(data_path);
                if (!std::holds_alternative<LinearDataset>(loaded))
                    throw InvalidArgument("dataset '" + data_path +
                                          "' holds nonlinear samples, config is linear");
                data = std::move(std::get<LinearDataset>(loaded));
            }
            return train_source(linear, data, kind, options);
        }
        const auto& nonlinear = std::get<NonlinearCondition>(condition.spec);
        NonlinearDataset data;
        if (data_path.empty()) {
            data = generate_nonlinear_dataset(config.grid, nonlinear, config.n_train,
                                              config.master_seed, stream_ns::dataset,
                                              common.threads);
        } else {
            auto loaded = load_dataset(data_path);
            if (!std::holds_alternative<NonlinearDataset>(loaded))
                throw InvalidArgument("dataset '" + data_path +
                                      "' holds linear samples, config is nonlinear");
            data = std::move(std::get<NonlinearDataset>(loaded));
        }
        return train_source(nonlinear, data, kind, options);
    }();

    const fs::path out = fs::path(common.out);
    fs::create_directories(out);
    const fs::path file = out / "model.kltw";
    save_model(file, model);
    std::cout << "wrote " << file.string() << '\n';
    return 0;
}

int run_transfer(const CommonOptions& common, const std::string& model_path,
                 const std::string& target_name, double gamma, const std::string& method_name,
                 Index n_train, const std::string& data_path, Index n_residual, double lambda_r,
                 const std::string& policy_name) {
    const ExperimentConfig config = resolve_config(common);
    const SurrogateModel source = load_model(model_path);

    SurrogateModel transferred = [&] {
        if (source.problem == ProblemTag::linear) {
            if (config.problem != ProblemTag::linear)
                throw InvalidArgument("model is linear but the config is nonlinear");
            const NamedCondition target = find_condition(config, target_name, std::nullopt);
            if (!target.target)
                throw InvalidArgument("transfer needs a target label, not 'source'");
            return transfer_linear(source, std::get<LinearCondition>(target.spec), gamma);
        }
        if (config.problem != ProblemTag::nonlinear)
            throw InvalidArgument("model is nonlinear but the config is linear");
        // The target keeps the model's variance; only the IBC values move.
        const auto& trained = std::get<NonlinearCondition>(source.condition);
        const NonlinearCondition target =
            nonlinear_condition(trained.y_variance, config.target_ibc[0], config.target_ibc[1],
                                config.target_ibc[2]);
        const TransferMethod method = parse_transfer_method(method_name);

        NonlinearTransferOptions options;
        options.n_target_samples = n_train;
        options.n_residual_draws = n_residual;
        options.lambda_r = lambda_r;
        options.data_ridge_scale = config.data_ridge_scale;
        options.policy = config.policy;
        options.seed = config.master_seed;
        if (policy_name == "reject") options.policy = UnderdeterminedPolicy::reject;
        else if (policy_name == "min_change") options.policy = UnderdeterminedPolicy::min_change;
        else if (!policy_name.empty())
            throw InvalidArgument("--policy must be 'reject' or 'min_change'");

        const NonlinearDataset* pool = nullptr;
        NonlinearDataset loaded_pool;
        if (!data_path.empty()) {
            auto loaded = load_dataset(data_path);
            if (!std::holds_alternative<NonlinearDataset>(loaded))
                throw InvalidArgument("dataset '" + data_path + "' holds linear samples");
            loaded_pool = std::move(std::get<NonlinearDataset>(loaded));
            pool = &loaded_pool;
        }
        return transfer_nonlinear(source, target, method, options, pool);
    }();

    const fs::path out = fs::path(common.out);
    fs::create_directories(out);
    const fs::path file = out / "transferred.kltw";
    save_model(file, transferred);
    std::cout << "wrote " << file.string() << '\n';
    return 0;
}

int run_evaluate(const CommonOptions& common, const std::string& model_path,
                 std::optional<Index> count) {
    const ExperimentConfig config = resolve_config(common);
    const SurrogateModel model = load_model(model_path);
    const Index n_test = count.value_or(config.n_test);

    ErrorReport report;
    if (n_test > 0) {
        ReportRow row;
        row.experiment = config.experiment;
        row.method = to_string(model.map_kind);
        row.seed = config.master_seed;
        if (model.problem == ProblemTag::linear) {
            const auto& condition = std::get<LinearCondition>(model.condition);
            const LinearDataset test =
                generate_linear_testset(model.grid, condition, n_test, config.master_seed,
                                        stream_ns::test, common.threads);
            const Mat prediction = predict_columns(model, test);
            row.condition = "model";
            row.gamma = model.gamma;
            row.mean_error = mean_relative_error(test.h, prediction);
            row.std_error = std_relative_error(test.h, prediction);
            row.n_test = n_test;
        } else {
            const auto& condition = std::get<NonlinearCondition>(model.condition);
            const NonlinearDataset test = generate_nonlinear_dataset(
                model.grid, condition, n_test, config.master_seed, stream_ns::test,
                common.threads);
            const Mat prediction = predict_columns(model, test);
            row.condition = "model";
            row.sigma2_y = condition.y_variance;
            row.mean_error = mean_relative_error(test.h, prediction);
            row.std_error = std_relative_error(test.h, prediction);
            row.n_test = n_test;
        }
        report.rows.push_back(std::move(row));
    }
    emit_report(report, common.out, "report", common.format);
    return 0;
}

int run_reproduce(const CommonOptions& common, const std::string& which) {
    CommonOptions resolved = common;
    if (resolved.config_path.empty() && resolved.experiment.empty()) {
        if (which.empty())
            throw InvalidArgument("reproduce needs 'table1' or 'table2' (or --config)");
        resolved.experiment = which;
    }
    ExperimentConfig config = resolve_config(resolved);
    if (!which.empty() && resolved.config_path.empty()) config.experiment = which;
    const ErrorReport report = run_experiment(config, resolved.threads);
    emit_report(report, resolved.out, config.experiment, resolved.format);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"KL surrogate digital twins for 1D diffusion with transfer learning"};
    app.require_subcommand(1);

    CommonOptions common;
    std::string condition_name = "source";
    std::string map_name = "ols";
    std::string model_path;
    std::string target_name;
    std::string method_name = "rls";
    std::string data_path;
    std::string policy_name;
    std::string which_table;
    std::optional<double> sigma2;
    std::optional<Index> count;
    double gamma = 0.0;
    Index n_train = 0;
    Index n_residual = 250;
    double lambda_r = 1e-4;
    bool testset = false;

    CLI::App* generate = app.add_subcommand("generate", "draw a Monte Carlo dataset");
    add_common(*generate, common);
    generate->add_option("--condition", condition_name, "'source', 'target', or a target label");
    generate->add_option("--sigma2", sigma2, "log-conductivity variance (nonlinear)");
    generate->add_option("--count", count, "number of samples (default from config)");
    generate->add_flag("--testset", testset, "draw from the test stream");

    CLI::App* train = app.add_subcommand("train", "fit a source surrogate model");
    add_common(*train, common);
    train->add_option("--map", map_name, "latent map: rls | ols | kl_dnn");
    train->add_option("--sigma2", sigma2, "log-conductivity variance (nonlinear)");
    train->add_option("--data", data_path, "training dataset (.kltw); generated when omitted");

    CLI::App* transfer = app.add_subcommand("transfer", "adapt a model to a target condition");
    add_common(*transfer, common);
    transfer->add_option("--model", model_path, "trained source model (.kltw)")->required();
    transfer->add_option("--target", target_name, "target label (linear problem)");
    transfer->add_option("--gamma", gamma, "extra inverse-KLD regularization (linear)");
    transfer->add_option("--method", method_name,
                         "rls | ols | kl_dnn | pi_kl_dnn | combined (nonlinear)");
    transfer->add_option("--n-train", n_train, "target training samples (nonlinear)");
    transfer->add_option("--data", data_path, "target dataset pool (.kltw, nonlinear)");
    transfer->add_option("--n-residual", n_residual, "conductivity draws for physics rows");
    transfer->add_option("--lambda-r", lambda_r, "physics row weight in combined retraining");
    transfer->add_option("--policy", policy_name, "underdetermined retrain: reject | min_change");

    CLI::App* evaluate = app.add_subcommand("evaluate", "score a model on fresh realizations");
    add_common(*evaluate, common, /*with_format=*/true);
    evaluate->add_option("--model", model_path, "model to score (.kltw)")->required();
    evaluate->add_option("--count", count, "test samples (default from config)");

    CLI::App* reproduce = app.add_subcommand("reproduce", "run a benchmark and export reports");
    add_common(*reproduce, common, /*with_format=*/true);
    reproduce->add_option("table", which_table, "table1 | table2")
        ->check(CLI::IsMember({"table1", "table2"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
    }

    try {
        if (generate->parsed())
            return run_generate(common, condition_name, sigma2, count, testset);
        if (train->parsed()) return run_train(common, map_name, sigma2, data_path);
        if (transfer->parsed())
            return run_transfer(common, model_path, target_name, gamma, method_name, n_train,
                                data_path, n_residual, lambda_r, policy_name);
        if (evaluate->parsed()) return run_evaluate(common, model_path, count);
        if (reproduce->parsed()) return run_reproduce(common, which_table);
        throw InvalidArgument("no subcommand given");
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::format);
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::usage);
    } catch (const DecompositionFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::numeric);
    } catch (const TrainingFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::numeric);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::numeric);
    }
}
