#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fegan/common.hpp"
#include "fegan/gan.hpp"

namespace fegan::exp {

class PlanError : public Error {
public:
    explicit PlanError(const std::string& why) : Error("invalid plan: " + why) {}
};

class NoResultsFound : public Error {
public:
    explicit NoResultsFound(const std::string& dir)
        : Error("no run results found in " + dir) {}
};

struct DataSpec {
    std::string path;
    std::string date_column = "date";
    std::string value_column = "value";
    data::Transform transform = data::Transform::LogReturn;
};

struct Cell {
    ts::FeatureMethod method = ts::FeatureMethod::None;
    gan::LossKind loss = gan::LossKind::Wasserstein;
    std::string overrides_json; // cell-level config overrides, may be empty

    std::string id() const {
        return std::string(ts::to_string(method)) + "_" + gan::to_string(loss);
    }
};

// A full comparison matrix: every cell is trained runs_per_cell times with
// seeds base_seed + run index, so a cell pairs with its siblings run by run.
struct ExperimentPlan {
    DataSpec data;
    std::string output_dir = "results";
    std::uint64_t base_seed = 1;
    std::size_t runs_per_cell = 10;
    std::vector<Cell> cells;
    gan::FeGanConfig base_config;

    static ExperimentPlan from_json_file(const std::string& path);
    static ExperimentPlan from_json_string(const std::string& text);
};

struct CellSummary {
    std::string cell_id;
    std::string method;
    std::string loss;
    double alpha = 0.0;
    std::size_t runs = 0;
    std::size_t failed = 0;
    double var_diff_median = 0.0, var_diff_min = 0.0, var_diff_max = 0.0;
    double var_diff_p10 = 0.0, var_diff_p90 = 0.0;
    double es_diff_median = 0.0, es_diff_min = 0.0, es_diff_max = 0.0;
    double es_diff_p10 = 0.0, es_diff_p90 = 0.0;
    double mean_seconds = 0.0;
};

struct SummaryTable {
    std::vector<CellSummary> rows;
    std::size_t total_runs = 0;
    std::size_t failed_runs = 0;
};

// Executes every (cell, run) on a worker pool, writes one RunResult JSON per
// run plus a deterministic results CSV and a summary CSV into output_dir.
// Re-running an identical plan rewrites identical result files (timings are
// confined to the JSON "wall_seconds" field and the summary).
SummaryTable run_plan(const ExperimentPlan& plan, std::size_t workers = 0);

// Serialize one run (config echo, diffs, checkpoints, traces, timing).
std::string run_result_to_json(const gan::RunResult& result,
                               const gan::FeGanConfig& config,
                               const std::string& method, const std::string& loss);

// Rebuild a config from the "config" object of a run JSON, so any single run
// can be reproduced in isolation.
gan::FeGanConfig config_from_json_string(const std::string& text);

// True when every determinism-relevant field matches (everything except
// wall-clock timing).
bool run_results_match(const std::string& json_a, const std::string& json_b);

// Per cell, a CSV of sorted per-run diffs (model index vs difference) plus
// one SVG comparison chart per metric, written into out_dir.
void emit_plot_data(const std::string& results_dir, const std::string& out_dir);

// Rolling AIC/BIC table on a data file; returns the winning spec name.
std::string select_arma_cmd(const DataSpec& data, std::size_t window_len,
                            std::size_t step, const std::string& out_csv);

} // namespace fegan::exp
