#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/core.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "deepsr/bench.hpp"
#include "deepsr/config.hpp"

namespace fs = std::filesystem;
using namespace deepsr;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config, "Settings file (key = value lines); a manifest works too")
        ->check(CLI::ExistingFile);
    app->add_option("--set", c.overrides, "Override a setting, e.g. --set dsr.batch_size=500 (repeatable)");
    app->add_option("--seed", c.seed, "run.seed");
    app->add_option("--threads", c.threads, "run.threads; results do not depend on it");
    app->add_option("--out", c.out, "Output directory (default runs/<timestamp>-<name>)");
}

Settings resolve(const Common& c)
{
    Settings s;
    if (!c.config.empty()) read_settings_file(c.config, s);
    for (const auto& o : c.overrides) apply_override(s, o);
    if (c.seed) s.seed = *c.seed;
    if (c.threads) s.threads = *c.threads;
    return s;
}

fs::path output_dir(const std::string& requested, const std::string& name)
{
    fs::path dir = requested;
    if (dir.empty()) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        dir = fs::path("runs") / fmt::format("{:%Y%m%d-%H%M%S}-{}", fmt::localtime(now), name);
    }
    fs::create_directories(dir);
    return dir;
}

std::ofstream open_out(const fs::path& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    out.precision(17);
    return out;
}

void write_manifest(const fs::path& path, const Settings& s, const std::vector<std::string>& notes)
{
    auto out = open_out(path);
    out << "# deepsr manifest: rerun with --config " << path.filename().string() << '\n';
    for (const auto& n : notes) out << "# " << n << '\n';
    write_settings(out, s);
}

std::string describe(const Library& lib)
{
    std::string out;
    for (std::size_t i = 0; i < lib.size(); ++i) out += (i ? " " : "") + lib[i].symbol;
    return out;
}

bool use_constants(const Settings& s, bool benchmark_default)
{
    if (s.constants == "yes") return true;
    if (s.constants == "no") return false;
    return benchmark_default;
}

int cmd_fit(const Settings& s, const Common& c)
{
    if (s.benchmark.empty() == s.data.empty())
        throw std::invalid_argument("fit needs exactly one of --benchmark or --data");

    if (!s.benchmark.empty()) {
        const auto& spec = find_benchmark(s.benchmark);
        const auto dir = output_dir(c.out, spec.name);
        write_manifest(dir / "manifest.cfg", s,
                       {fmt::format("library: {}", describe(spec.library())),
                        fmt::format("dataset: {} U({}, {}, {}) x{}, noise {}", spec.name, spec.low, spec.high,
                                    spec.points, s.data_multiplier, s.noise)});
        RunSpec run{s.method, spec.name, s.seed, s.noise, s.data_multiplier, s.ablation};
        std::vector<HistoryRecord> history;
        const auto rec = run_single(run, s.train_config(), s.gp_config(), &history);
        if (!rec.error.empty()) throw std::runtime_error(rec.error);
        {
            auto out = open_out(dir / "history.csv");
            write_history_csv(out, spec.library(), history);
        }
        {
            auto out = open_out(dir / "records.csv");
            write_records_csv(out, {rec});
        }
        fmt::print("expression:   {}\n", rec.infix);
        fmt::print("traversal:    {}\n", rec.expression);
        fmt::print("train reward: {:.6f}\n", rec.train_reward);
        fmt::print("test NRMSE:   {:.6g}\n", rec.test_nrmse);
        fmt::print("recovered:    {}\n", rec.recovered ? "yes" : "no");
        fmt::print("output:       {}\n", dir.string());
        return 0;
    }

    const auto data = load_csv_dataset(s.data);
    std::optional<Dataset> test;
    if (!s.test_data.empty()) {
        test = load_csv_dataset(s.test_data);
        if (test->variable_names != data.variable_names)
            throw std::invalid_argument(fmt::format("'{}' and '{}' have different columns", s.data, s.test_data));
    }
    const auto lib = Library::build(s.operators, data.variable_names, use_constants(s, false));
    const auto dir = output_dir(c.out, fs::path(s.data).stem().string());
    write_manifest(dir / "manifest.cfg", s,
                   {fmt::format("library: {}", describe(lib)),
                    fmt::format("dataset: {} ({} rows)", s.data, data.size())});
    TrainConfig dcfg = s.train_config();
    apply_ablation(dcfg, s.ablation);
    const auto fit = fit_method(s.method, dcfg, s.gp_config(), lib, data);
    {
        auto out = open_out(dir / "history.csv");
        write_history_csv(out, lib, fit.history);
    }
    fmt::print("expression:   {}\n", render_infix(lib, fit.best));
    fmt::print("traversal:    {}\n", serialize(lib, fit.best));
    fmt::print("train reward: {:.6f}\n", fit.train_reward);
    if (test) fmt::print("test NRMSE:   {:.6g}\n", nrmse(test->y, evaluate(lib, fit.best, test->X)));
    fmt::print("output:       {}\n", dir.string());
    return 0;
}

int cmd_bench(const Settings& s, const Common& c)
{
    const auto campaign = s.campaign_config();
    const auto dir = output_dir(c.out, "bench-" + s.suite);
    write_manifest(dir / "manifest.cfg", s, {});
    const auto result = run_campaign(campaign);
    {
        auto out = open_out(dir / "records.csv");
        write_records_csv(out, result.records);
    }
    {
        auto out = open_out(dir / "aggregate.csv");
        write_aggregate_csv(out, result.aggregates);
    }
    {
        auto out = open_out(dir / "timings.csv");
        write_timings_csv(out, result.records);
    }
    fs::create_directories(dir / "curves");
    for (const auto& curve : result.curves) {
        auto out = open_out(dir / "curves" / curve_file_name(curve));
        write_curve_csv(out, curve);
    }

    fmt::print("{:<6} {:<12} {:>8} {:>4} {:>10} {:>9} {:>22}\n", "method", "benchmark", "noise", "x", "ablation",
               "recovery", "test NRMSE");
    for (const auto& a : result.aggregates)
        fmt::print("{:<6} {:<12} {:>8.4g} {:>4} {:>10} {:>8.0f}% {:>10.4g} +- {:<8.3g}\n", a.method, a.benchmark,
                   a.noise, a.data_multiplier, a.ablation, a.recovery_pct, a.nrmse_mean, a.nrmse_std);
    int failures = 0;
    for (const auto& r : result.records) {
        if (r.error.empty()) continue;
        ++failures;
        fmt::print(stderr, "cell failed: {} {} seed {} noise {}: {}\n", r.method, r.benchmark, r.seed, r.noise,
                   r.error);
    }
    fmt::print("output: {}\n", dir.string());
    return failures == 0 ? 0 : 1;
}

int cmd_eval(const std::string& text, const std::string& data_path, const std::string& benchmark, std::uint64_t seed,
             const std::string& split, bool optimize)
{
    if (data_path.empty() == benchmark.empty()) throw std::invalid_argument("eval needs exactly one of --data or --benchmark");
    Dataset data;
    if (!benchmark.empty()) {
        const auto& spec = find_benchmark(benchmark);
        const auto task = prepare_benchmark(spec, seed, 0.0, 1);
        data = split == "test" ? task.test : task.train;
    } else {
        data = load_csv_dataset(data_path);
    }
    // literals in infix input need the constant token
    const auto lib = Library::build(Library::default_operators(), data.variable_names, true);
    auto expr = parse_expression(lib, text);
    if (optimize) expr = optimize_constants(lib, expr, data.X, data.y).expr;
    const auto pred = evaluate(lib, expr, data.X);
    const double e = nrmse(data.y, pred);
    fmt::print("expression: {}\n", render_infix(lib, expr));
    fmt::print("NRMSE:      {:.6g}\n", e);
    fmt::print("reward:     {:.6f}\n", squash(e));
    fmt::print("complexity: {}\n", complexity(expr));
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"deepsr: symbolic regression with a recurrent policy trained by risk-seeking policy gradients"};
    app.require_subcommand(1);

    Common fit_opts;
    std::string fit_bench, fit_data, fit_test, fit_method_name, fit_ablation;
    std::optional<double> fit_noise;
    std::optional<int> fit_mult;
    auto* fit = app.add_subcommand("fit", "Fit one dataset or benchmark");
    fit->add_option("--benchmark", fit_bench, "Benchmark name, e.g. Nguyen-1");
    fit->add_option("--data", fit_data, "Training CSV (header names the variables, last column is the target)");
    fit->add_option("--test-data", fit_test, "Optional test CSV with the same columns");
    fit->add_option("--method", fit_method_name, "dsr or gp");
    fit->add_option("--noise", fit_noise, "Noise level gamma (benchmarks only)");
    fit->add_option("--data-mult", fit_mult, "Training set size multiplier (benchmarks only)");
    fit->add_option("--ablation", fit_ablation, "DSR ablation name");
    add_common(fit, fit_opts);

    Common bench_opts;
    std::string suite, method_sel, grid, ablation;
    std::optional<int> runs, mult;
    auto* bench = app.add_subcommand("bench", "Run a multi-seed benchmark campaign");
    bench->add_option("--suite", suite, "nguyen, constant, all, or a comma list of names");
    bench->add_option("--runs", runs, "Seeds per cell");
    bench->add_option("--method", method_sel, "dsr, gp or both");
    bench->add_option("--noise-grid", grid, "'default' or a comma list of noise levels");
    bench->add_option("--data-mult", mult, "Training set size multiplier");
    bench->add_option("--ablation", ablation, "DSR ablation name");
    add_common(bench, bench_opts);

    std::string expr_text, eval_data, eval_bench, eval_split = "train";
    std::uint64_t eval_seed = 0;
    bool eval_opt = false;
    auto* eval = app.add_subcommand("eval", "Score an expression on a dataset");
    eval->add_option("--expr", expr_text, "Pre-order traversal (add x x) or infix (x + x)")->required();
    eval->add_option("--data", eval_data, "CSV dataset");
    eval->add_option("--benchmark", eval_bench, "Benchmark name (noiseless data)");
    eval->add_option("--seed", eval_seed, "Benchmark data seed");
    eval->add_option("--split", eval_split, "train or test")->check(CLI::IsMember({"train", "test"}));
    eval->add_flag("--optimize", eval_opt, "Refit constant placeholders from the all-ones start first");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fit) {
            auto s = resolve(fit_opts);
            if (!fit_bench.empty()) s.set("task.benchmark", fit_bench);
            if (!fit_data.empty()) s.set("task.data", fit_data);
            if (!fit_test.empty()) s.set("task.test_data", fit_test);
            if (!fit_method_name.empty()) s.set("task.method", fit_method_name);
            if (fit_noise) s.noise = *fit_noise;
            if (fit_mult) s.data_multiplier = *fit_mult;
            if (!fit_ablation.empty()) s.set("task.ablation", fit_ablation);
            return cmd_fit(s, fit_opts);
        }
        if (*bench) {
            auto s = resolve(bench_opts);
            if (!suite.empty()) s.set("bench.suite", suite);
            if (runs) s.runs = *runs;
            if (!method_sel.empty()) s.set("bench.methods", method_sel);
            if (!grid.empty()) s.set("bench.noise_grid", grid);
            if (mult) s.data_multiplier = *mult;
            if (!ablation.empty()) s.set("task.ablation", ablation);
            return cmd_bench(s, bench_opts);
        }
        return cmd_eval(expr_text, eval_data, eval_bench, eval_seed, eval_split, eval_opt);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
}
