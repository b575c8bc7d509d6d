#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "fegan/data.hpp"
#include "fegan/experiment.hpp"
#include "fegan/nn.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 1 invalid plan, 2 data error, 3 run failures.
enum ExitCode { kOk = 0, kInvalidPlan = 1, kDataError = 2, kRunFailures = 3 };

int cmd_run(const std::string& plan_path, const std::string& output_dir,
            long runs, long seed, long steps, long workers) {
    fegan::exp::ExperimentPlan plan;
    try {
        plan = fegan::exp::ExperimentPlan::from_json_file(plan_path);
        if (!output_dir.empty()) plan.output_dir = output_dir;
        if (runs > 0) plan.runs_per_cell = static_cast<std::size_t>(runs);
        if (seed >= 0) plan.base_seed = static_cast<std::uint64_t>(seed);
        if (steps >= 0) plan.base_config.steps = static_cast<std::size_t>(steps);
    } catch (const fegan::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInvalidPlan;
    }
    try {
        const fegan::exp::SummaryTable table = fegan::exp::run_plan(
            plan, workers > 0 ? static_cast<std::size_t>(workers) : 0);
        for (const auto& row : table.rows)
            std::printf("%-28s alpha=%-5g var_diff median %.4f  es_diff median %.4f"
                        "  (%zu runs, %zu failed)\n",
                        row.cell_id.c_str(), row.alpha, row.var_diff_median,
                        row.es_diff_median, row.runs, row.failed);
        std::printf("results written to %s\n", plan.output_dir.c_str());
        if (table.failed_runs > 0) {
            std::fprintf(stderr, "%zu of %zu runs failed\n", table.failed_runs,
                         table.total_runs);
            return kRunFailures;
        }
        return kOk;
    } catch (const fegan::exp::PlanError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInvalidPlan;
    } catch (const fegan::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kDataError;
    }
}

int cmd_select_arma(const fegan::exp::DataSpec& data, long window, long step,
                    const std::string& out_csv) {
    try {
        const std::string winner = fegan::exp::select_arma_cmd(
            data, static_cast<std::size_t>(window), static_cast<std::size_t>(step),
            out_csv);
        std::printf("selected %s by mean AIC; table written to %s\n", winner.c_str(),
                    out_csv.c_str());
        return kOk;
    } catch (const fegan::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kDataError;
    }
}

int cmd_plot(const std::string& results_dir, const std::string& out_dir) {
    try {
        fegan::exp::emit_plot_data(results_dir, out_dir);
        std::printf("plot data written to %s\n", out_dir.c_str());
        return kOk;
    } catch (const fegan::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kDataError;
    }
}

int cmd_grad_check() {
    using namespace fegan;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        Rng rng(seed);
        nn::Mlp net(6, {16, 16}, 4, true, rng);
        nn::Tensor input(7, 6);
        for (double& v : input.values()) v = rng.normal();
        nn::LossProbe loss;
        loss.value = [](const nn::Tensor& t) {
            double s = 0.0;
            for (double v : t.values()) s += v * v;
            return 1e-4 * s;
        };
        loss.grad = [](const nn::Tensor& t) {
            nn::Tensor g = t;
            for (double& v : g.values()) v *= 2e-4;
            return g;
        };
        worst = std::max(worst, nn::grad_check(net, input, loss));
    }
    std::printf("max relative gradient error: %.3e (%s)\n", worst,
                worst < 1e-4 ? "ok" : "FAIL");
    return worst < 1e-4 ? kOk : kRunFailures;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"FE-GAN experiment runner: feature-conditioned WGAN / Tail-GAN "
                 "training with VaR/ES evaluation"};
    app.require_subcommand(1);

    std::string plan_path, output_dir;
    long runs = -1, seed = -1, steps = -1, workers = -1;
    auto* run = app.add_subcommand("run", "execute an experiment plan");
    run->add_option("plan", plan_path, "plan JSON file")->required();
    run->add_option("--output-dir", output_dir, "override the plan output directory");
    run->add_option("--runs", runs, "override runs per cell");
    run->add_option("--seed", seed, "override the base seed");
    run->add_option("--steps", steps, "override training steps");
    run->add_option("--workers", workers,
                    "worker threads (default: FEGAN_WORKERS or hardware)");

    fegan::exp::DataSpec data;
    long window = 500, step = 50;
    std::string table_csv = "selection_table.csv";
    std::string transform = "log_return";
    auto* sel = app.add_subcommand("select-arma",
                                   "rolling AIC/BIC model selection on a data file");
    sel->add_option("data", data.path, "input CSV")->required();
    sel->add_option("--date-column", data.date_column, "date column name");
    sel->add_option("--value-column", data.value_column, "value column name");
    sel->add_option("--transform", transform, "log_return or identity");
    sel->add_option("--window", window, "rolling window length");
    sel->add_option("--step", step, "window step");
    sel->add_option("--out", table_csv, "output table CSV");

    std::string results_dir, plot_dir = "plots";
    auto* plot = app.add_subcommand("plot", "emit sorted difference curves and SVGs");
    plot->add_option("results", results_dir, "directory of run JSONs")->required();
    plot->add_option("--out-dir", plot_dir, "output directory");

    auto* gc = app.add_subcommand("grad-check", "self-test the backward pass");
    auto* ver = app.add_subcommand("version", "print the version");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(plan_path, output_dir, runs, seed, steps, workers);
    if (sel->parsed()) {
        try {
            data.transform = fegan::data::transform_from_string(transform);
        } catch (const fegan::Error& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return kDataError;
        }
        return cmd_select_arma(data, window, step, table_csv);
    }
    if (plot->parsed()) return cmd_plot(results_dir, plot_dir);
    if (gc->parsed()) return cmd_grad_check();
    if (ver->parsed()) {
        std::printf("fegan %s\n", kVersion);
        return kOk;
    }
    return kOk;
}
