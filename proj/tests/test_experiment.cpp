#include <algorithm>
#include <filesystem>

#include "doctest.h"
#include "fegan/experiment.hpp"
#include "json.hpp"
#include "synthetic.hpp"

using namespace fegan;
using namespace fegan::exp;
namespace fs = std::filesystem;

namespace {

// AR(1) levels offset to stay positive so identity-transform loading works.
std::string make_data_csv(const testutil::TempDir& dir, std::uint64_t seed = 5,
                          std::size_t n = 400) {
    Rng rng(seed);
    const auto values = testutil::ar1(rng, n, 0.8, 0.05, 3.0);
    const std::string path = dir.file("data.csv");
    testutil::write_csv(path, values);
    return path;
}

std::string tiny_plan_json(const std::string& data_path, const std::string& out_dir,
                           std::size_t runs, std::size_t steps,
                           const std::string& cells) {
    return std::string("{\n") + "  \"data\": {\"path\": \"" + data_path +
           "\", \"transform\": \"identity\"},\n" + "  \"output_dir\": \"" + out_dir +
           "\",\n  \"base_seed\": 11,\n  \"runs_per_cell\": " + std::to_string(runs) +
           ",\n" +
           "  \"config\": {\"batch\": 8, \"window\": 12, \"context\": 12, "
           "\"noise_dim\": 6, \"feature_embed_dim\": 6, \"gen_layers\": 2, "
           "\"gen_width\": 10, \"critic_layers\": 2, \"critic_width\": 10, "
           "\"n_critic\": 2, \"eval_batch\": 10, \"steps\": " +
           std::to_string(steps) + "},\n  \"cells\": [" + cells + "]\n}\n";
}

} // namespace

TEST_CASE("plan parsing validates structure") {
    CHECK_THROWS_AS(ExperimentPlan::from_json_string("{"), PlanError);
    CHECK_THROWS_AS(ExperimentPlan::from_json_string("{\"cells\": []}"), PlanError);
    CHECK_THROWS_AS(ExperimentPlan::from_json_string(
                        "{\"data\": {\"path\": \"x.csv\"}, \"cells\": "
                        "[{\"feature_method\": \"none\"}], \"config\": {\"bogus\": 1}}"),
                    PlanError);
    const auto plan = ExperimentPlan::from_json_string(
        "{\"data\": {\"path\": \"x.csv\"}, \"runs_per_cell\": 3, \"cells\": "
        "[{\"feature_method\": \"historical\", \"loss_kind\": \"tail_score\"}]}");
    CHECK(plan.runs_per_cell == 3);
    CHECK(plan.cells.size() == 1);
    CHECK(plan.cells[0].method == ts::FeatureMethod::Historical);
    CHECK(plan.cells[0].loss == gan::LossKind::TailScore);
    CHECK(plan.cells[0].id() == "historical_tail_score");
}

TEST_CASE("a minimal plan produces a summary from one untrained evaluation") {
    testutil::TempDir dir("plan_min");
    const std::string data = make_data_csv(dir);
    const auto plan = ExperimentPlan::from_json_string(tiny_plan_json(
        data, dir.file("out"), 1, 0, "{\"feature_method\": \"none\"}"));
    const SummaryTable table = run_plan(plan, 1);
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0].runs == 1);
    CHECK(table.rows[0].failed == 0);
    CHECK(std::isfinite(table.rows[0].var_diff_median));
    CHECK(fs::exists(dir.file("out") + "/none_wasserstein_r000.json"));
    CHECK(fs::exists(dir.file("out") + "/results.csv"));
    CHECK(fs::exists(dir.file("out") + "/summary.csv"));
}

TEST_CASE("re-running a plan rewrites a byte-identical results CSV") {
    testutil::TempDir dir("plan_det");
    const std::string data = make_data_csv(dir);
    const auto plan = ExperimentPlan::from_json_string(
        tiny_plan_json(data, dir.file("out"), 2, 3,
                       "{\"feature_method\": \"none\"}, "
                       "{\"feature_method\": \"historical\"}"));
    run_plan(plan, 2);
    const std::string first = testutil::slurp(dir.file("out") + "/results.csv");
    run_plan(plan, 1); // different worker count must not matter
    const std::string second = testutil::slurp(dir.file("out") + "/results.csv");
    CHECK(first == second);
    CHECK(!first.empty());
}

TEST_CASE("summary statistics recompute from the emitted run JSONs") {
    testutil::TempDir dir("plan_sum");
    const std::string data = make_data_csv(dir);
    const auto plan = ExperimentPlan::from_json_string(
        tiny_plan_json(data, dir.file("out"), 3, 2,
                       "{\"feature_method\": \"none\"}, "
                       "{\"feature_method\": \"gbm\"}"));
    const SummaryTable table = run_plan(plan, 2);
    REQUIRE(table.rows.size() == 2);

    for (const auto& row : table.rows) {
        std::vector<double> vd;
        for (std::size_t r = 0; r < 3; ++r) {
            const std::string path =
                dir.file("out") + "/" + row.cell_id + "_r00" + std::to_string(r) + ".json";
            const auto j = nlohmann::json::parse(testutil::slurp(path));
            REQUIRE(j["status"] == "ok");
            vd.push_back(j["diffs"][0]["var_diff"].get<double>());
        }
        CHECK(row.var_diff_median == doctest::Approx(stats::median(vd)).epsilon(1e-15));
        CHECK(row.var_diff_min == *std::min_element(vd.begin(), vd.end()));
        CHECK(row.var_diff_max == *std::max_element(vd.begin(), vd.end()));
    }
}

TEST_CASE("run JSONs reproduce in isolation from their config echo") {
    testutil::TempDir dir("plan_repro");
    const std::string data = make_data_csv(dir);
    const auto plan = ExperimentPlan::from_json_string(tiny_plan_json(
        data, dir.file("out"), 1, 4, "{\"feature_method\": \"historical\"}"));
    run_plan(plan, 1);

    const std::string path = dir.file("out") + "/historical_wasserstein_r000.json";
    const auto j = nlohmann::json::parse(testutil::slurp(path));
    const gan::FeGanConfig cfg = config_from_json_string(j["config"].dump());
    CHECK(cfg.seed == 11); // base_seed 11 + run index 0

    const data::RawSeries raw = data::load_csv(data, "date", "value");
    const data::CleanSeries series = data::clean(raw, data::Transform::Identity);
    gan::TrainOutput out = gan::train(cfg, series);
    out.result.run_id = "historical_wasserstein_r000";
    const std::string again =
        run_result_to_json(out.result, cfg, "historical", "wasserstein");
    CHECK(run_results_match(testutil::slurp(path), again));
}

TEST_CASE("run_results_match ignores timing only") {
    const std::string a = R"({"run_id":"x","diffs":[1.5],"wall_seconds":1.0})";
    const std::string b = R"({"run_id":"x","diffs":[1.5],"wall_seconds":9.9})";
    const std::string c = R"({"run_id":"x","diffs":[1.6],"wall_seconds":1.0})";
    CHECK(run_results_match(a, b));
    CHECK(!run_results_match(a, c));
}

TEST_CASE("emit_plot_data writes sorted curves that permute the raw diffs") {
    testutil::TempDir dir("plots");
    const std::string data = make_data_csv(dir);
    const auto plan = ExperimentPlan::from_json_string(tiny_plan_json(
        data, dir.file("out"), 3, 2, "{\"feature_method\": \"none\"}"));
    run_plan(plan, 2);
    emit_plot_data(dir.file("out"), dir.file("plots"));

    const std::string curve =
        testutil::slurp(dir.file("plots") + "/curve_none_wasserstein_alpha0.05.csv");
    REQUIRE(!curve.empty());
    std::vector<double> sorted_vals;
    {
        std::istringstream in(curve);
        std::string line;
        std::getline(in, line);
        CHECK(line == "model_index,var_diff,es_diff");
        while (std::getline(in, line)) {
            const auto c1 = line.find(','), c2 = line.rfind(',');
            sorted_vals.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
        }
    }
    REQUIRE(sorted_vals.size() == 3);
    CHECK(std::is_sorted(sorted_vals.begin(), sorted_vals.end()));

    std::vector<double> raw_vals;
    for (int r = 0; r < 3; ++r) {
        const auto j = nlohmann::json::parse(testutil::slurp(
            dir.file("out") + "/none_wasserstein_r00" + std::to_string(r) + ".json"));
        raw_vals.push_back(j["diffs"][0]["var_diff"].get<double>());
    }
    std::sort(raw_vals.begin(), raw_vals.end());
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(sorted_vals[i] == doctest::Approx(raw_vals[i]).epsilon(1e-12));

    CHECK(fs::exists(dir.file("plots") + "/plot_var_diff_alpha0.05.svg"));
    CHECK(fs::exists(dir.file("plots") + "/plot_es_diff_alpha0.05.svg"));

    testutil::TempDir empty("plots_empty");
    CHECK_THROWS_AS(emit_plot_data(empty.file("nothing"), empty.file("o")),
                    NoResultsFound);
}

TEST_CASE("select_arma_cmd writes the grid table and names a winner") {
    testutil::TempDir dir("selcmd");
    Rng rng(21);
    const std::vector<double> phi{0.5, -0.3}, theta{0.4};
    auto series = testutil::arma_sim(rng, 700, phi, theta, 0.02, 3.0);
    testutil::write_csv(dir.file("data.csv"), series);

    DataSpec spec;
    spec.path = dir.file("data.csv");
    spec.transform = data::Transform::Identity;
    const std::string winner =
        select_arma_cmd(spec, 500, 100, dir.file("table.csv"));
    CHECK(!winner.empty());
    const std::string table = testutil::slurp(dir.file("table.csv"));
    // 3 windows x 10 specs plus the header.
    CHECK(std::count(table.begin(), table.end(), '\n') == 31);
}
