#include "fegan/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace fegan::exp {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void apply_config_json(const ordered_json& j, gan::FeGanConfig& cfg) {
    for (const auto& [key, value] : j.items()) {
        if (key == "batch") cfg.batch = value.get<std::size_t>();
        else if (key == "window") cfg.window = value.get<std::size_t>();
        else if (key == "context") cfg.context = value.get<std::size_t>();
        else if (key == "noise_dim") cfg.noise_dim = value.get<std::size_t>();
        else if (key == "feature_embed_dim") cfg.feature_embed_dim = value.get<std::size_t>();
        else if (key == "gen_layers") cfg.gen_layers = value.get<std::size_t>();
        else if (key == "gen_width") cfg.gen_width = value.get<std::size_t>();
        else if (key == "critic_layers") cfg.critic_layers = value.get<std::size_t>();
        else if (key == "critic_width") cfg.critic_width = value.get<std::size_t>();
        else if (key == "critic_bn")
            cfg.critic_bn = gan::critic_bn_from_string(value.get<std::string>());
        else if (key == "feature_method")
            cfg.feature_method = ts::feature_method_from_string(value.get<std::string>());
        else if (key == "loss_kind")
            cfg.loss_kind = gan::loss_kind_from_string(value.get<std::string>());
        else if (key == "alphas") cfg.alphas = value.get<std::vector<double>>();
        else if (key == "n_critic") cfg.n_critic = value.get<std::size_t>();
        else if (key == "lipschitz") {
            const auto s = value.get<std::string>();
            if (s == "clip") cfg.lipschitz = gan::LipschitzMode::Clip;
            else if (s == "penalty") cfg.lipschitz = gan::LipschitzMode::Penalty;
            else throw PlanError("unknown lipschitz mode: " + s);
        } else if (key == "clip_c") cfg.clip_c = value.get<double>();
        else if (key == "penalty_lambda") cfg.penalty_lambda = value.get<double>();
        else if (key == "optimizer") {
            const auto s = value.get<std::string>();
            if (s == "rmsprop") cfg.optimizer = nn::OptKind::RmsProp;
            else if (s == "adam") cfg.optimizer = nn::OptKind::Adam;
            else throw PlanError("unknown optimizer: " + s);
        } else if (key == "lr") cfg.lr = value.get<double>();
        else if (key == "steps") cfg.steps = value.get<std::size_t>();
        else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
        else if (key == "eval_batch") cfg.eval_batch = value.get<std::size_t>();
        else if (key == "eval_every") cfg.eval_every = value.get<std::size_t>();
        else if (key == "arma_p" || key == "arma_q") {
            const std::size_t p = key == "arma_p" ? value.get<std::size_t>() : cfg.arma_spec.p;
            const std::size_t q = key == "arma_q" ? value.get<std::size_t>() : cfg.arma_spec.q;
            cfg.arma_spec = ts::ArmaSpec(p, q);
        } else if (key == "period") cfg.period = value.get<std::size_t>();
        else throw PlanError("unknown config key: " + key);
    }
}

ordered_json config_to_json(const gan::FeGanConfig& cfg) {
    ordered_json j;
    j["batch"] = cfg.batch;
    j["window"] = cfg.window;
    j["context"] = cfg.context;
    j["noise_dim"] = cfg.noise_dim;
    j["feature_embed_dim"] = cfg.feature_embed_dim;
    j["gen_layers"] = cfg.gen_layers;
    j["gen_width"] = cfg.gen_width;
    j["critic_layers"] = cfg.critic_layers;
    j["critic_width"] = cfg.critic_width;
    j["critic_bn"] = gan::to_string(cfg.critic_bn);
    j["feature_method"] = ts::to_string(cfg.feature_method);
    j["loss_kind"] = gan::to_string(cfg.loss_kind);
    j["alphas"] = cfg.alphas;
    j["n_critic"] = cfg.n_critic;
    j["lipschitz"] = cfg.lipschitz == gan::LipschitzMode::Clip ? "clip" : "penalty";
    j["clip_c"] = cfg.clip_c;
    j["penalty_lambda"] = cfg.penalty_lambda;
    j["optimizer"] = cfg.optimizer == nn::OptKind::RmsProp ? "rmsprop" : "adam";
    j["lr"] = cfg.lr;
    j["steps"] = cfg.steps;
    j["seed"] = cfg.seed;
    j["eval_batch"] = cfg.eval_batch;
    j["eval_every"] = cfg.eval_every;
    j["arma_p"] = cfg.arma_spec.p;
    j["arma_q"] = cfg.arma_spec.q;
    j["period"] = cfg.period;
    return j;
}

ordered_json diffs_to_json(const std::vector<risk::DiffReport>& diffs) {
    ordered_json arr = ordered_json::array();
    for (const auto& d : diffs) {
        ordered_json o;
        o["alpha"] = d.alpha.alpha;
        o["var_diff"] = d.var_diff;
        o["es_diff"] = d.es_diff;
        arr.push_back(o);
    }
    return arr;
}

} // namespace

gan::FeGanConfig config_from_json_string(const std::string& text) {
    gan::FeGanConfig cfg;
    apply_config_json(ordered_json::parse(text), cfg);
    return cfg;
}

ExperimentPlan ExperimentPlan::from_json_string(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw PlanError(e.what());
    }
    ExperimentPlan plan;
    try {
        if (j.contains("data")) {
            const auto& d = j["data"];
            if (d.contains("path")) plan.data.path = d["path"].get<std::string>();
            if (d.contains("date_column"))
                plan.data.date_column = d["date_column"].get<std::string>();
            if (d.contains("value_column"))
                plan.data.value_column = d["value_column"].get<std::string>();
            if (d.contains("transform"))
                plan.data.transform =
                    data::transform_from_string(d["transform"].get<std::string>());
        }
        if (j.contains("output_dir")) plan.output_dir = j["output_dir"].get<std::string>();
        if (j.contains("base_seed")) plan.base_seed = j["base_seed"].get<std::uint64_t>();
        if (j.contains("runs_per_cell"))
            plan.runs_per_cell = j["runs_per_cell"].get<std::size_t>();
        if (j.contains("config")) apply_config_json(j["config"], plan.base_config);
        if (!j.contains("cells") || !j["cells"].is_array() || j["cells"].empty())
            throw PlanError("a plan needs at least one cell");
        for (const auto& c : j["cells"]) {
            Cell cell;
            if (!c.contains("feature_method"))
                throw PlanError("cell missing feature_method");
            cell.method = ts::feature_method_from_string(
                c["feature_method"].get<std::string>());
            if (c.contains("loss_kind"))
                cell.loss = gan::loss_kind_from_string(c["loss_kind"].get<std::string>());
            if (c.contains("config")) cell.overrides_json = c["config"].dump();
            plan.cells.push_back(std::move(cell));
        }
        if (plan.runs_per_cell < 1) throw PlanError("runs_per_cell must be >= 1");
        if (plan.data.path.empty()) throw PlanError("data.path is required");
    } catch (const PlanError&) {
        throw;
    } catch (const std::exception& e) {
        throw PlanError(e.what());
    }
    return plan;
}

ExperimentPlan ExperimentPlan::from_json_file(const std::string& path) {
    return from_json_string(read_file(path));
}

std::string run_result_to_json(const gan::RunResult& result,
                               const gan::FeGanConfig& config,
                               const std::string& method, const std::string& loss) {
    ordered_json j;
    j["run_id"] = result.run_id;
    j["method"] = method;
    j["loss_kind"] = loss;
    j["config"] = config_to_json(config);
    char hash_buf[32];
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                  static_cast<unsigned long long>(result.config_hash));
    j["config_hash"] = hash_buf;
    j["status"] = result.status == gan::RunStatus::Ok ? "ok" : "aborted";
    if (result.status == gan::RunStatus::Aborted) {
        j["aborted_step"] = result.aborted_step;
        j["error"] = result.error;
    }
    j["steps_executed"] = result.steps_executed;
    j["diffs"] = diffs_to_json(result.diffs);
    ordered_json cps = ordered_json::array();
    for (const auto& cp : result.checkpoints) {
        ordered_json o;
        o["step"] = cp.step;
        o["diffs"] = diffs_to_json(cp.diffs);
        cps.push_back(o);
    }
    j["checkpoints"] = cps;
    j["loss_trace"]["critic"] = result.critic_loss_trace;
    j["loss_trace"]["generator"] = result.gen_loss_trace;
    j["wall_seconds"] = result.wall_seconds;
    return j.dump(2) + "\n";
}

bool run_results_match(const std::string& json_a, const std::string& json_b) {
    ordered_json a = ordered_json::parse(json_a);
    ordered_json b = ordered_json::parse(json_b);
    a.erase("wall_seconds");
    b.erase("wall_seconds");
    return a == b;
}

namespace {

struct RunSlot {
    std::string run_id;
    std::string method;
    std::string loss;
    gan::FeGanConfig config;
    gan::RunResult result;
    bool done = false;
};

std::size_t worker_count(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("FEGAN_WORKERS")) {
        const long n = std::atol(env);
        if (n > 0) return static_cast<std::size_t>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

void summarize_metric(const std::vector<double>& xs, double& med, double& mn,
                      double& mx, double& p10, double& p90) {
    med = stats::median(xs);
    mn = *std::min_element(xs.begin(), xs.end());
    mx = *std::max_element(xs.begin(), xs.end());
    p10 = stats::quantile(xs, 0.10);
    p90 = stats::quantile(xs, 0.90);
}

} // namespace

SummaryTable run_plan(const ExperimentPlan& plan, std::size_t workers) {
    if (plan.cells.empty()) throw PlanError("a plan needs at least one cell");
    if (plan.runs_per_cell < 1) throw PlanError("runs_per_cell must be >= 1");

    const data::RawSeries raw =
        data::load_csv(plan.data.path, plan.data.date_column, plan.data.value_column);
    const data::CleanSeries series = data::clean(raw, plan.data.transform);

    fs::create_directories(plan.output_dir);

    std::vector<RunSlot> slots(plan.cells.size() * plan.runs_per_cell);
    for (std::size_t c = 0; c < plan.cells.size(); ++c) {
        const Cell& cell = plan.cells[c];
        for (std::size_t r = 0; r < plan.runs_per_cell; ++r) {
            RunSlot& slot = slots[c * plan.runs_per_cell + r];
            slot.method = ts::to_string(cell.method);
            slot.loss = gan::to_string(cell.loss);
            char id[128];
            std::snprintf(id, sizeof(id), "%s_r%03zu", cell.id().c_str(), r);
            slot.run_id = id;
            slot.config = plan.base_config;
            if (!cell.overrides_json.empty())
                apply_config_json(ordered_json::parse(cell.overrides_json), slot.config);
            slot.config.feature_method = cell.method;
            slot.config.loss_kind = cell.loss;
            slot.config.seed = plan.base_seed + r;
        }
    }

    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= slots.size()) return;
            RunSlot& slot = slots[i];
            try {
                gan::TrainOutput out = gan::train(slot.config, series);
                slot.result = std::move(out.result);
            } catch (const Error& e) {
                slot.result.status = gan::RunStatus::Aborted;
                slot.result.error = e.what();
                slot.result.config_hash = slot.config.hash();
            }
            slot.result.run_id = slot.run_id;
            std::ofstream out(fs::path(plan.output_dir) / (slot.run_id + ".json"));
            out << run_result_to_json(slot.result, slot.config, slot.method, slot.loss);
            slot.done = true;
        }
    };
    const std::size_t n_workers = std::min(worker_count(workers), slots.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w + 1 < n_workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    // Deterministic aggregate CSV: plan order, run order, alpha order.
    {
        std::ofstream csv(fs::path(plan.output_dir) / "results.csv");
        csv << "run_id,method,loss_kind,alpha,var_diff,es_diff\n";
        for (const RunSlot& slot : slots) {
            if (slot.result.status != gan::RunStatus::Ok) continue;
            for (const auto& d : slot.result.diffs)
                csv << slot.run_id << ',' << slot.method << ',' << slot.loss << ','
                    << fmt_short(d.alpha.alpha) << ',' << fmt_double(d.var_diff) << ','
                    << fmt_double(d.es_diff) << '\n';
        }
    }

    SummaryTable table;
    table.total_runs = slots.size();
    for (std::size_t c = 0; c < plan.cells.size(); ++c) {
        const std::size_t base = c * plan.runs_per_cell;
        std::size_t failed = 0;
        double seconds = 0.0;
        for (std::size_t r = 0; r < plan.runs_per_cell; ++r) {
            if (slots[base + r].result.status != gan::RunStatus::Ok) ++failed;
            seconds += slots[base + r].result.wall_seconds;
        }
        table.failed_runs += failed;
        const std::size_t ok = plan.runs_per_cell - failed;
        const auto& alphas = slots[base].config.alphas;
        for (std::size_t a = 0; a < alphas.size(); ++a) {
            CellSummary row;
            row.cell_id = plan.cells[c].id();
            row.method = slots[base].method;
            row.loss = slots[base].loss;
            row.alpha = alphas[a];
            row.runs = plan.runs_per_cell;
            row.failed = failed;
            row.mean_seconds = seconds / static_cast<double>(plan.runs_per_cell);
            if (ok > 0) {
                std::vector<double> vd, ed;
                for (std::size_t r = 0; r < plan.runs_per_cell; ++r) {
                    const RunSlot& slot = slots[base + r];
                    if (slot.result.status != gan::RunStatus::Ok) continue;
                    vd.push_back(slot.result.diffs[a].var_diff);
                    ed.push_back(slot.result.diffs[a].es_diff);
                }
                summarize_metric(vd, row.var_diff_median, row.var_diff_min,
                                 row.var_diff_max, row.var_diff_p10, row.var_diff_p90);
                summarize_metric(ed, row.es_diff_median, row.es_diff_min,
                                 row.es_diff_max, row.es_diff_p10, row.es_diff_p90);
            }
            table.rows.push_back(row);
        }
    }

    {
        std::ofstream csv(fs::path(plan.output_dir) / "summary.csv");
        csv << "cell,method,loss_kind,alpha,runs,failed,"
               "var_diff_median,var_diff_min,var_diff_max,var_diff_p10,var_diff_p90,"
               "es_diff_median,es_diff_min,es_diff_max,es_diff_p10,es_diff_p90,"
               "mean_seconds\n";
        for (const CellSummary& r : table.rows) {
            csv << r.cell_id << ',' << r.method << ',' << r.loss << ','
                << fmt_short(r.alpha) << ',' << r.runs << ',' << r.failed << ','
                << fmt_double(r.var_diff_median) << ',' << fmt_double(r.var_diff_min)
                << ',' << fmt_double(r.var_diff_max) << ',' << fmt_double(r.var_diff_p10)
                << ',' << fmt_double(r.var_diff_p90) << ','
                << fmt_double(r.es_diff_median) << ',' << fmt_double(r.es_diff_min)
                << ',' << fmt_double(r.es_diff_max) << ',' << fmt_double(r.es_diff_p10)
                << ',' << fmt_double(r.es_diff_p90) << ','
                << fmt_double(r.mean_seconds) << '\n';
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Plot data + minimal SVG renderer

namespace {

struct CurveSet {
    // cell id -> sorted diffs, one entry per run
    std::map<std::string, std::vector<double>> var_diff;
    std::map<std::string, std::vector<double>> es_diff;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

void write_svg(const std::string& path, const std::string& title,
               const std::map<std::string, std::vector<double>>& curves) {
    const double width = 680, height = 440;
    const double ml = 60, mr = 160, mt = 40, mb = 45;
    const double pw = width - ml - mr, ph = height - mt - mb;

    std::size_t max_n = 1;
    double max_y = 0.0;
    for (const auto& [_, ys] : curves) {
        max_n = std::max(max_n, ys.size());
        for (double y : ys) max_y = std::max(max_y, y);
    }
    if (max_y <= 0.0) max_y = 1.0;
    max_y *= 1.05;

    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << ml << "\" y=\"22\" font-size=\"14\">" << title << "</text>\n";

    for (int k = 0; k <= 4; ++k) {
        const double v = max_y * k / 4.0;
        const double y = mt + ph - ph * k / 4.0;
        out << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << ml + pw
            << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\">" << fmt_short(v) << "</text>\n";
    }
    out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
        << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\">model index (sorted)</text>\n";

    std::size_t ci = 0;
    for (const auto& [cell, ys] : curves) {
        const char* color = kPalette[ci % 8];
        out << "<polyline fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < ys.size(); ++i) {
            const double x =
                ml + (ys.size() > 1
                          ? pw * static_cast<double>(i) / static_cast<double>(ys.size() - 1)
                          : pw / 2.0);
            const double y = mt + ph - ph * ys[i] / max_y;
            out << x << ',' << y << ' ';
        }
        out << "\"/>\n";
        for (std::size_t i = 0; i < ys.size(); ++i) {
            const double x =
                ml + (ys.size() > 1
                          ? pw * static_cast<double>(i) / static_cast<double>(ys.size() - 1)
                          : pw / 2.0);
            const double y = mt + ph - ph * ys[i] / max_y;
            out << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"2.5\" fill=\""
                << color << "\"/>\n";
        }
        const double ly = mt + 16.0 * static_cast<double>(ci);
        out << "<rect x=\"" << ml + pw + 12 << "\" y=\"" << ly - 9
            << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << ml + pw + 27 << "\" y=\"" << ly << "\">" << cell
            << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
}

} // namespace

void emit_plot_data(const std::string& results_dir, const std::string& out_dir) {
    std::map<std::string, CurveSet> by_alpha; // alpha label -> curves
    bool found = false;

    std::vector<fs::path> files;
    if (fs::exists(results_dir))
        for (const auto& entry : fs::directory_iterator(results_dir))
            if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    for (const auto& path : files) {
        ordered_json j;
        try {
            j = ordered_json::parse(read_file(path.string()));
        } catch (const std::exception&) {
            continue;
        }
        if (!j.contains("run_id") || !j.contains("diffs")) continue;
        if (j.value("status", "ok") != "ok") continue;
        found = true;
        const std::string cell = j.value("method", "?") + "_" + j.value("loss_kind", "?");
        for (const auto& d : j["diffs"]) {
            const std::string alpha = fmt_short(d["alpha"].get<double>());
            by_alpha[alpha].var_diff[cell].push_back(d["var_diff"].get<double>());
            by_alpha[alpha].es_diff[cell].push_back(d["es_diff"].get<double>());
        }
    }
    if (!found) throw NoResultsFound(results_dir);

    fs::create_directories(out_dir);
    for (auto& [alpha, curves] : by_alpha) {
        for (auto& [cell, ys] : curves.var_diff) std::sort(ys.begin(), ys.end());
        for (auto& [cell, ys] : curves.es_diff) std::sort(ys.begin(), ys.end());

        for (const auto& [cell, ys] : curves.var_diff) {
            std::ofstream csv(fs::path(out_dir) /
                              ("curve_" + cell + "_alpha" + alpha + ".csv"));
            csv << "model_index,var_diff,es_diff\n";
            const auto& es = curves.es_diff[cell];
            for (std::size_t i = 0; i < ys.size(); ++i)
                csv << i << ',' << fmt_double(ys[i]) << ',' << fmt_double(es[i]) << '\n';
        }
        write_svg((fs::path(out_dir) / ("plot_var_diff_alpha" + alpha + ".svg")).string(),
                  "VaR difference at alpha=" + alpha, curves.var_diff);
        write_svg((fs::path(out_dir) / ("plot_es_diff_alpha" + alpha + ".svg")).string(),
                  "ES difference at alpha=" + alpha, curves.es_diff);
    }
}

std::string select_arma_cmd(const DataSpec& data_spec, std::size_t window_len,
                            std::size_t step, const std::string& out_csv) {
    const data::RawSeries raw =
        data::load_csv(data_spec.path, data_spec.date_column, data_spec.value_column);
    const data::CleanSeries series = data::clean(raw, data_spec.transform);
    const ts::SelectionTable table =
        ts::select_arma(series, ts::default_grid(), window_len, step);
    table.write_csv(out_csv);
    return table.winner.name();
}

} // namespace fegan::exp
