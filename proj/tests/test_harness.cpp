// End-to-end plumbing: the binary container and its failure modes, typed
// model/dataset artifacts, report serialization, bundled-config drift, seeded
// reproducibility, and thread-count invariance of whole experiments.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "kltwin/experiment.hpp"
#include "kltwin/kltw_io.hpp"
#include "kltwin/metrics.hpp"

using namespace kltwin;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / "kltwin-harness-test";
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

ExperimentConfig tiny_linear_config() {
    ExperimentConfig config;
    config.experiment = "tiny";
    config.problem = ProblemTag::linear;
    config.grid = build_grid(10, 20, 1.0, 0.03);
    config.master_seed = 77;
    config.conductivity_seed = 5;
    config.conductivity_terms = 8;
    config.n_train = 40;
    config.n_test = 4;
    config.n_state = 8;
    config.n_f = 12;
    config.n_q = 6;
    config.train_gamma = 3e-8;
    config.targets = {{"target1", 1.0, 1.0, {0.0}}};
    return config;
}

} // namespace

TEST_CASE("binary container round-trips scalars, vectors, and matrices bit-exactly") {
    const TempDir tmp;
    KltwFile file;
    file.add_scalar("answer", -0.0);
    file.add_scalar("tiny", 5e-324);  // smallest denormal survives
    Vec v(4);
    v << 1.5, -2.25, 0.0, 1e300;
    file.add_vector("profile", v);
    RngStream rng(1, 0);
    const Mat m = rng.normal_matrix(5, 3);
    file.add_matrix("modes", m);

    const fs::path path = tmp.path / "container.kltw";
    save_kltw(path, file);
    CHECK(fs::exists(path));
    CHECK(fs::exists(tmp.path / "container.kltw.json"));  // manifest alongside

    const KltwFile loaded = load_kltw(path);
    CHECK(loaded.version == kltw_format_version);
    CHECK(loaded.contains("answer"));
    CHECK(std::signbit(loaded.scalar("answer")));
    CHECK(loaded.scalar("tiny") == 5e-324);
    CHECK((loaded.vector("profile") - v).norm() == 0.0);
    CHECK((loaded.matrix("modes") - m).norm() == 0.0);
    CHECK_THROWS_AS(loaded.at("absent"), InvalidArgument);
}

TEST_CASE("corrupted containers fail with the defect's byte offset") {
    const TempDir tmp;
    KltwFile file;
    file.add_vector("field", Vec::Ones(64));
    const fs::path path = tmp.path / "broken.kltw";
    save_kltw(path, file);

    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 40);  // chop into the payload
    try {
        (void)load_kltw(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }

    std::ofstream bad(tmp.path / "magic.kltw", std::ios::binary | std::ios::trunc);
    bad << "NOPE0000" << std::string(32, '\0');
    bad.close();
    CHECK_THROWS_AS(load_kltw(tmp.path / "magic.kltw"), FormatError);
    CHECK_THROWS_AS(load_kltw(tmp.path / "does-not-exist.kltw"), FormatError);
}

TEST_CASE("saved models reproduce their predictions after loading") {
    const TempDir tmp;
    const Grid grid = build_grid(10, 20, 1.0, 0.03);
    const Field k = draw_log_conductivity(grid, 0.6, 0.5, 8, 5);
    const LinearCondition condition = linear_source_condition(grid, k);
    TrainOptions options;
    options.n_state_terms = 8;
    options.n_f_terms = 12;
    options.n_q_terms = 6;
    options.train_gamma = 3e-8;
    const LinearDataset data = generate_linear_dataset(grid, condition, 40, 12, 6, 77);
    const SurrogateModel model = train_source(condition, data, MapKind::ols, options);

    const fs::path path = tmp.path / "model.kltw";
    save_model(path, model);
    const SurrogateModel loaded = load_model(path);

    CHECK(loaded.problem == model.problem);
    CHECK(loaded.gamma == model.gamma);
    const LinearDataset test = generate_linear_testset(grid, condition, 3, 77);
    CHECK((predict_columns(loaded, test) - predict_columns(model, test)).norm() == 0.0);
}

TEST_CASE("saved datasets round-trip for both problems") {
    const TempDir tmp;
    const Grid grid = build_grid(8, 10, 1.0, 0.03);
    const Field k = draw_log_conductivity(grid, 0.6, 0.5, 6, 5);

    const LinearDataset linear =
        generate_linear_dataset(grid, linear_source_condition(grid, k), 5, 6, 4, 13);
    save_dataset(tmp.path / "linear.kltw", linear);
    const auto linear_loaded = load_dataset(tmp.path / "linear.kltw");
    REQUIRE(std::holds_alternative<LinearDataset>(linear_loaded));
    const LinearDataset& lin = std::get<LinearDataset>(linear_loaded);
    CHECK((lin.h - linear.h).norm() == 0.0);
    CHECK((lin.f - linear.f).norm() == 0.0);
    CHECK((lin.q - linear.q).norm() == 0.0);
    CHECK((lin.h0 - linear.h0).norm() == 0.0);
    CHECK((lin.k.values - linear.k.values).norm() == 0.0);

    NonlinearCondition cond = nonlinear_source_condition(0.1);
    cond.y_terms = 6;
    const NonlinearDataset nonlinear = generate_nonlinear_dataset(grid, cond, 5, 13);
    save_dataset(tmp.path / "nonlinear.kltw", nonlinear);
    const auto nonlinear_loaded = load_dataset(tmp.path / "nonlinear.kltw");
    REQUIRE(std::holds_alternative<NonlinearDataset>(nonlinear_loaded));
    const NonlinearDataset& non = std::get<NonlinearDataset>(nonlinear_loaded);
    CHECK((non.h - nonlinear.h).norm() == 0.0);
    CHECK((non.k - nonlinear.k).norm() == 0.0);
    CHECK(non.h0 == nonlinear.h0);
}

TEST_CASE("report serialization: header, optional cells, and JSON nulls") {
    ErrorReport report;
    ReportRow linear_row;
    linear_row.experiment = "tiny";
    linear_row.condition = "source";
    linear_row.method = "ols";
    linear_row.gamma = 3e-8;
    linear_row.alpha = 1.0;
    linear_row.mean_error = 2.5e-4;
    linear_row.std_error = 1e-5;
    linear_row.n_test = 20;
    linear_row.seed = 12345;
    ReportRow nonlinear_row = linear_row;
    nonlinear_row.condition = "target";
    nonlinear_row.method = "pi_kl_dnn";
    nonlinear_row.gamma.reset();
    nonlinear_row.alpha.reset();
    nonlinear_row.sigma2_y = 0.1;
    nonlinear_row.n_train = 0;
    report.rows = {linear_row, nonlinear_row};

    const std::string csv = to_csv(report);
    CHECK(csv.rfind("experiment,condition,method,sigma2_y,alpha,beta,gamma,n_train,", 0) == 0);
    CHECK(csv.find("tiny,source,ols,,1,") != std::string::npos);       // sigma2 empty for linear
    CHECK(csv.find("tiny,target,pi_kl_dnn,0.1,,,,0,") != std::string::npos);  // absent optionals

    const auto parsed = nlohmann::json::parse(to_json(report));
    REQUIRE(parsed.at("rows").size() == 2);
    CHECK(parsed["rows"][0]["sigma2_y"].is_null());
    CHECK(parsed["rows"][0]["gamma"].get<double>() == 3e-8);
    CHECK(parsed["rows"][1]["n_train"].get<Index>() == 0);
    CHECK(parsed["rows"][1]["alpha"].is_null());

    CHECK(report.find("target", "pi_kl_dnn").sigma2_y == 0.1);
    CHECK_THROWS_AS(report.find("target", "nope"), InvalidArgument);

    const TempDir tmp;
    write_report(tmp.path / "report", report);
    CHECK(fs::exists(tmp.path / "report.csv"));
    CHECK(fs::exists(tmp.path / "report.json"));
}

TEST_CASE("bundled configuration files mirror the built-in parameterizations") {
    const fs::path configs = fs::path(KLTWIN_CONFIG_DIR);

    const ExperimentConfig linear = load_config(configs / "table1.json");
    const ExperimentConfig built_linear = linear_benchmark_config();
    CHECK(linear.experiment == built_linear.experiment);
    CHECK(linear.problem == built_linear.problem);
    CHECK(linear.grid == built_linear.grid);
    CHECK(linear.master_seed == built_linear.master_seed);
    CHECK(linear.conductivity_seed == built_linear.conductivity_seed);
    CHECK(linear.n_train == built_linear.n_train);
    CHECK(linear.n_test == built_linear.n_test);
    CHECK(linear.n_state == built_linear.n_state);
    CHECK(linear.n_f == built_linear.n_f);
    CHECK(linear.n_q == built_linear.n_q);
    CHECK(linear.train_gamma == built_linear.train_gamma);
    CHECK(linear.linear_map == built_linear.linear_map);
    CHECK(linear.conductivity_variance == built_linear.conductivity_variance);
    CHECK(linear.conductivity_corr == built_linear.conductivity_corr);
    CHECK(linear.conductivity_terms == built_linear.conductivity_terms);
    REQUIRE(linear.targets.size() == built_linear.targets.size());
    for (std::size_t i = 0; i < linear.targets.size(); ++i) {
        CHECK(linear.targets[i].label == built_linear.targets[i].label);
        CHECK(linear.targets[i].alpha == built_linear.targets[i].alpha);
        CHECK(linear.targets[i].beta == built_linear.targets[i].beta);
        CHECK(linear.targets[i].gammas == built_linear.targets[i].gammas);
    }

    const ExperimentConfig nonlinear = load_config(configs / "table2.json");
    const ExperimentConfig built_nonlinear = nonlinear_benchmark_config();
    CHECK(nonlinear.experiment == built_nonlinear.experiment);
    CHECK(nonlinear.problem == built_nonlinear.problem);
    CHECK(nonlinear.grid == built_nonlinear.grid);
    CHECK(nonlinear.master_seed == built_nonlinear.master_seed);
    CHECK(nonlinear.n_train == built_nonlinear.n_train);
    CHECK(nonlinear.n_test == built_nonlinear.n_test);
    CHECK(nonlinear.n_state == built_nonlinear.n_state);
    CHECK(nonlinear.n_k == built_nonlinear.n_k);
    CHECK(nonlinear.sigma2_y == built_nonlinear.sigma2_y);
    CHECK(nonlinear.source_ibc == built_nonlinear.source_ibc);
    CHECK(nonlinear.target_ibc == built_nonlinear.target_ibc);
    CHECK(nonlinear.source_methods == built_nonlinear.source_methods);
    CHECK(nonlinear.target_pool == built_nonlinear.target_pool);
    CHECK(nonlinear.data_ridge_scale == built_nonlinear.data_ridge_scale);
    CHECK(nonlinear.policy == built_nonlinear.policy);
    REQUIRE(nonlinear.target_methods.size() == built_nonlinear.target_methods.size());
    for (std::size_t i = 0; i < nonlinear.target_methods.size(); ++i) {
        CHECK(nonlinear.target_methods[i].method == built_nonlinear.target_methods[i].method);
        CHECK(nonlinear.target_methods[i].n_train == built_nonlinear.target_methods[i].n_train);
        CHECK(nonlinear.target_methods[i].n_residual ==
              built_nonlinear.target_methods[i].n_residual);
        CHECK(nonlinear.target_methods[i].lambda_r == built_nonlinear.target_methods[i].lambda_r);
    }
}

TEST_CASE("config parsing rejects malformed inputs with exit-code-2 errors") {
    CHECK_THROWS_AS(parse_config("this is not json"), InvalidArgument);
    CHECK_THROWS_AS(parse_config(R"({"problem": "linear"})"), InvalidArgument);  // no grid/seeds
    CHECK_THROWS_WITH_AS(
        parse_config(
            R"({"problem":"linear","grid":{"n_x":10,"n_t":10,"length":1.0,"duration":0.03},
                "seeds":{"master":1},"surprise":true})"),
        doctest::Contains("unknown key 'surprise'"), InvalidArgument);
    CHECK_THROWS_AS(
        parse_config(
            R"({"problem":"sideways","grid":{"n_x":10,"n_t":10,"length":1.0,"duration":0.03},
                "seeds":{"master":1}})"),
        InvalidArgument);
    CHECK_THROWS_AS(load_config("/nonexistent/path.json"), InvalidArgument);

    // Range validation: state basis larger than the training set.
    ExperimentConfig bad = tiny_linear_config();
    bad.n_state = 1000;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = tiny_linear_config();
    bad.n_train = 1;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("same-seed datasets are bit-identical; streams and seeds separate them") {
    const Grid grid = build_grid(8, 10, 1.0, 0.03);
    const Field k = draw_log_conductivity(grid, 0.6, 0.5, 6, 5);
    const LinearCondition condition = linear_source_condition(grid, k);

    const LinearDataset a = generate_linear_dataset(grid, condition, 6, 6, 4, 21);
    const LinearDataset b = generate_linear_dataset(grid, condition, 6, 6, 4, 21);
    CHECK((a.h - b.h).norm() == 0.0);
    CHECK((a.f - b.f).norm() == 0.0);

    const LinearDataset other_seed = generate_linear_dataset(grid, condition, 6, 6, 4, 22);
    CHECK((a.h - other_seed.h).norm() != 0.0);
    const LinearDataset other_stream =
        generate_linear_dataset(grid, condition, 6, 6, 4, 21, stream_ns::test);
    CHECK((a.h - other_stream.h).norm() != 0.0);

    // Worker count cannot move a single sample.
    const LinearDataset threaded = generate_linear_dataset(grid, condition, 6, 6, 4, 21,
                                                           stream_ns::dataset, 4);
    CHECK((a.h - threaded.h).norm() == 0.0);
}

TEST_CASE("whole experiments are deterministic and thread-count invariant") {
    const ExperimentConfig config = tiny_linear_config();
    const ErrorReport serial = run_experiment(config, 1);
    const ErrorReport threaded = run_experiment(config, 3);
    REQUIRE(serial.rows.size() == threaded.rows.size());
    REQUIRE(serial.rows.size() == 2);  // source + one target gamma
    for (std::size_t i = 0; i < serial.rows.size(); ++i) {
        CHECK(serial.rows[i].mean_error == threaded.rows[i].mean_error);
        CHECK(serial.rows[i].std_error == threaded.rows[i].std_error);
        CHECK(serial.rows[i].condition == threaded.rows[i].condition);
    }
    CHECK(serial.rows[0].condition == "source");
    CHECK(serial.rows[0].mean_error < 0.05);  // small-scale sanity bound

    ExperimentConfig empty = config;
    empty.n_test = 0;
    CHECK(run_experiment(empty, 1).rows.empty());
}

TEST_CASE("error metrics: definitions and guard rails") {
    Vec ref(3), pred(3);
    ref << 3.0, 0.0, 4.0;
    pred << 3.0, 0.0, 0.0;
    CHECK(relative_error(ref, pred) == doctest::Approx(4.0 / 5.0).epsilon(1e-15));
    CHECK(relative_error(ref, ref) == 0.0);
    CHECK_THROWS_AS(relative_error(ref, Vec::Zero(2)), InvalidArgument);
    CHECK_THROWS_AS(relative_error(Vec::Zero(3), pred), InvalidArgument);

    Mat refs(2, 2), preds(2, 2);
    refs << 1.0, 0.0, 0.0, 2.0;
    preds << 0.0, 0.0, 0.0, 0.0;  // per-column errors 1 and 1
    CHECK(mean_relative_error(refs, preds) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std_relative_error(refs, preds) == doctest::Approx(0.0).epsilon(1e-12));
    preds(0, 0) = 1.0;  // errors 0 and 1: mean 1/2, std 1/sqrt(2)
    CHECK(mean_relative_error(refs, preds) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(std_relative_error(refs, preds) ==
          doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
}
