#include "deepsr/bench.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

#include "deepsr/parallel.hpp"
#include "deepsr/random.hpp"

namespace deepsr {

namespace {

std::string trim(std::string_view s)
{
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

double parse_double(const std::string& s)
{
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(fmt::format("bad number '{}'", s));
    return v;
}

}  // namespace

Library BenchmarkSpec::library() const
{
    return Library::build(Library::default_operators(), variables, has_constants);
}

std::vector<BenchmarkSpec> parse_benchmarks(std::istream& in)
{
    std::vector<BenchmarkSpec> specs;
    std::string line;
    bool versioned = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.rfind("version", 0) == 0) {
            if (trim(t.substr(7)) != "1")
                throw std::runtime_error(fmt::format("unsupported benchmark file version on line {}", lineno));
            versioned = true;
            continue;
        }
        if (!versioned) throw std::runtime_error("benchmark file lacks a version line");
        const auto f = split(t, '|');
        if (f.size() != 7) throw std::runtime_error(fmt::format("line {}: expected 7 fields", lineno));
        BenchmarkSpec s;
        s.name = f[0];
        s.variables = split(f[1], ',');
        s.expression = f[2];
        s.ground_truth = parse_infix(s.expression);
        s.low = parse_double(f[3]);
        s.high = parse_double(f[4]);
        s.points = std::stoi(f[5]);
        s.has_constants = lower(f[6]) == "yes";
        specs.push_back(std::move(s));
    }
    return specs;
}

const std::vector<BenchmarkSpec>& benchmark_catalogue()
{
    static const std::vector<BenchmarkSpec> specs = [] {
        std::istringstream in{std::string(builtin_benchmark_text())};
        return parse_benchmarks(in);
    }();
    return specs;
}

const BenchmarkSpec& find_benchmark(std::string_view name)
{
    const auto key = lower(name);
    for (const auto& s : benchmark_catalogue())
        if (lower(s.name) == key) return s;
    throw std::invalid_argument(fmt::format("unknown benchmark '{}'", name));
}

std::vector<std::string> benchmark_suite(std::string_view selection)
{
    const auto key = lower(selection);
    std::vector<std::string> names;
    for (const auto& s : benchmark_catalogue()) {
        const auto n = lower(s.name);
        if (key == "all" || (key == "nguyen" && n.rfind("nguyen-", 0) == 0)
            || (key == "constant" && n.rfind("constant-", 0) == 0))
            names.push_back(s.name);
    }
    if (!names.empty()) return names;
    for (const auto& part : split(selection, ','))
        names.push_back(find_benchmark(part).name);
    return names;
}

Dataset generate_dataset(const BenchmarkSpec& spec, std::uint64_t seed, Split split, int size_multiplier)
{
    if (size_multiplier < 1) throw std::invalid_argument("size multiplier must be at least 1");
    Rng rng(derive_seed(seed, hash_name(spec.name), split == Split::Train ? 1 : 2));
    std::uniform_real_distribution<double> dist(spec.low, spec.high);
    const auto n = static_cast<std::size_t>(spec.points * size_multiplier);
    Dataset d;
    d.variable_names = spec.variables;
    d.X = Matrix(n, spec.variables.size());
    d.y.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < spec.variables.size(); ++c) d.X(r, c) = dist(rng);
        d.y[r] = spec.truth(d.X.row(r));
    }
    return d;
}

Dataset add_noise(const Dataset& data, double gamma, std::uint64_t seed)
{
    if (gamma < 0.0) throw std::invalid_argument("noise level must be nonnegative");
    if (gamma == 0.0) return data;
    double sq = 0.0;
    for (double v : data.y) sq += v * v;
    const double rms = std::sqrt(sq / static_cast<double>(data.y.size()));
    Rng rng(derive_seed(seed, 0x4015e));
    std::normal_distribution<double> noise(0.0, gamma * rms);
    Dataset out = data;
    for (double& v : out.y) v += noise(rng);
    return out;
}

bool recovery_check(const Library& lib, const Expression& candidate, const BenchmarkSpec& spec)
{
    Rng rng(derive_seed(0x9a0be, hash_name(spec.name)));
    std::uniform_real_distribution<double> dist(spec.low, spec.high);
    Matrix probe(kProbePoints, spec.variables.size());
    for (double& v : probe.data) v = dist(rng);
    std::vector<double> truth(kProbePoints);
    double scale = 0.0;
    for (std::size_t r = 0; r < probe.rows; ++r) {
        truth[r] = spec.truth(probe.row(r));
        scale = std::max(scale, std::abs(truth[r]));
    }
    std::vector<double> pred;
    try {
        pred = evaluate(lib, candidate, probe);
    } catch (const std::invalid_argument&) {
        return false;
    }
    const double tol = (spec.has_constants ? kConstantRecoveryTolerance : kRecoveryTolerance) * (1.0 + scale);
    for (std::size_t r = 0; r < probe.rows; ++r) {
        const double diff = std::abs(pred[r] - truth[r]);
        if (!(diff <= tol)) return false;
    }
    return true;
}

const std::vector<std::string>& ablation_names()
{
    static const std::vector<std::string> names = {
        "none",           "parent-sibling",    "risk",             "entropy",
        "baseline",       "all-improvements",  "constrain-trig",   "constrain-inverse",
        "constrain-minmax", "all-constraints", "all"};
    return names;
}

void apply_ablation(TrainConfig& c, std::string_view ablation)
{
    const auto a = lower(ablation);
    auto improvements = [&] {
        c.input_mode = InputMode::PreviousToken;
        c.risk_eps = 1.0;
        c.entropy_coef = 0.0;
        c.baseline_beta = 0.0;
    };
    auto constraints = [&] {
        c.constraints.nested_trig = false;
        c.constraints.inverse_unary = false;
        c.constraints.length = false;
    };
    if (a == "none") return;
    if (a == "parent-sibling") c.input_mode = InputMode::PreviousToken;
    else if (a == "risk") c.risk_eps = 1.0;
    else if (a == "entropy") c.entropy_coef = 0.0;
    else if (a == "baseline") c.baseline_beta = 0.0;
    else if (a == "all-improvements") improvements();
    else if (a == "constrain-trig") c.constraints.nested_trig = false;
    else if (a == "constrain-inverse") c.constraints.inverse_unary = false;
    else if (a == "constrain-minmax") c.constraints.length = false;
    else if (a == "all-constraints") constraints();
    else if (a == "all") {
        improvements();
        constraints();
    } else {
        throw std::invalid_argument(fmt::format("unknown ablation '{}'", ablation));
    }
}

std::vector<double> default_noise_grid()
{
    return {0.0, 1e-3, std::pow(10.0, -2.5), 1e-2, std::pow(10.0, -1.5), 1e-1};
}

std::string_view method_name(Method m) { return m == Method::DSR ? "dsr" : "gp"; }

Method parse_method(std::string_view s)
{
    const auto k = lower(s);
    if (k == "dsr") return Method::DSR;
    if (k == "gp") return Method::GP;
    throw std::invalid_argument(fmt::format("unknown method '{}'", s));
}

BenchmarkTask prepare_benchmark(const BenchmarkSpec& spec, std::uint64_t seed, double noise, int data_multiplier)
{
    BenchmarkTask task{spec.library(), generate_dataset(spec, seed, Split::Train, data_multiplier),
                       generate_dataset(spec, seed, Split::Test)};
    task.train = add_noise(task.train, noise, derive_seed(seed, hash_name(spec.name), 3));
    return task;
}

FitOutcome fit_method(Method method, const TrainConfig& dsr, const GPConfig& gp, const Library& lib,
                      const Dataset& data)
{
    FitOutcome out;
    if (method == Method::DSR) {
        auto result = train(dsr, lib, data);
        if (!result.best) throw std::runtime_error("no expression sampled (zero iterations)");
        out.best = *result.best;
        out.train_reward = result.best_reward;
        out.history = std::move(result.history);
    } else {
        auto result = gp_train(gp, lib, data);
        out.best = result.best.expr;
        out.train_reward = squash(result.best.fitness);
        out.history = std::move(result.history);
    }
    return out;
}

RunRecord run_single(const RunSpec& run, const TrainConfig& dsr, const GPConfig& gp,
                     std::vector<HistoryRecord>* history_out)
{
    RunRecord rec;
    rec.method = std::string(method_name(run.method));
    rec.benchmark = run.benchmark;
    rec.noise = run.noise;
    rec.data_multiplier = run.data_multiplier;
    rec.ablation = run.ablation;
    rec.seed = run.seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const auto& spec = find_benchmark(run.benchmark);
        const auto task = prepare_benchmark(spec, run.seed, run.noise, run.data_multiplier);
        const auto& lib = task.lib;
        const auto& test_data = task.test;

        TrainConfig dcfg = dsr;
        dcfg.seed = run.seed;
        apply_ablation(dcfg, run.ablation);
        GPConfig gcfg = gp;
        gcfg.seed = run.seed;
        auto fit = fit_method(run.method, dcfg, gcfg, lib, task.train);
        const auto& best = fit.best;
        const auto& history = fit.history;
        rec.train_reward = fit.train_reward;
        rec.expression = serialize(lib, best);
        rec.infix = render_infix(lib, best);
        rec.test_nrmse = nrmse(test_data.y, evaluate(lib, best, test_data.X));
        rec.recovered = recovery_check(lib, best, spec);
        rec.steps = static_cast<int>(history.size());

        const Expression* prev = nullptr;
        bool prev_recovered = false;
        for (const auto& h : history) {
            if (!prev || !(h.best == *prev)) {
                prev_recovered = recovery_check(lib, h.best, spec);
                prev = &h.best;
            }
            rec.best_reward_curve.push_back(h.best_reward);
            rec.recovered_curve.push_back(prev_recovered ? 1 : 0);
        }
        if (history_out) *history_out = std::move(fit.history);
    } catch (const std::exception& e) {
        rec.error = e.what();
        rec.recovered = false;
        rec.test_nrmse = std::numeric_limits<double>::quiet_NaN();
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

std::vector<RunSpec> campaign_cells(const CampaignConfig& config)
{
    std::vector<RunSpec> cells;
    for (auto m : config.methods)
        for (const auto& b : config.benchmarks)
            for (double noise : config.noise_levels)
                for (int r = 0; r < config.runs; ++r)
                    cells.push_back({m, b, config.base_seed + static_cast<std::uint64_t>(r), noise,
                                     config.data_multiplier, config.ablation});
    return cells;
}

CampaignResult run_campaign(const CampaignConfig& config)
{
    const auto cells = campaign_cells(config);
    CampaignResult out;
    out.records.resize(cells.size());
    parallel_for(cells.size(), config.threads,
                 [&](std::size_t i) { out.records[i] = run_single(cells[i], config.dsr, config.gp); });
    out.aggregates = aggregate(out.records);
    out.curves = training_curves(out.records);
    return out;
}

namespace {

using CellKey = std::tuple<std::string, std::string, double, int, std::string>;

CellKey key_of(const RunRecord& r) { return {r.method, r.benchmark, r.noise, r.data_multiplier, r.ablation}; }

// Groups in order of first appearance.
std::vector<std::pair<CellKey, std::vector<const RunRecord*>>> group(const std::vector<RunRecord>& records)
{
    std::vector<std::pair<CellKey, std::vector<const RunRecord*>>> groups;
    std::map<CellKey, std::size_t> index;
    for (const auto& r : records) {
        const auto k = key_of(r);
        auto [it, fresh] = index.emplace(k, groups.size());
        if (fresh) groups.push_back({k, {}});
        groups[it->second].second.push_back(&r);
    }
    return groups;
}

}  // namespace

std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records)
{
    std::vector<AggregateRow> rows;
    for (const auto& [key, members] : group(records)) {
        AggregateRow row;
        std::tie(row.method, row.benchmark, row.noise, row.data_multiplier, row.ablation) = key;
        row.runs = static_cast<int>(members.size());
        std::vector<double> errs;
        for (const auto* r : members) {
            if (!r->error.empty()) {
                ++row.failed;
                continue;
            }
            row.recovered += r->recovered ? 1 : 0;
            errs.push_back(r->test_nrmse);
        }
        row.recovery_pct = row.runs ? 100.0 * row.recovered / row.runs : 0.0;
        if (!errs.empty()) {
            row.nrmse_mean = std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
            double acc = 0.0;
            for (double e : errs) acc += (e - row.nrmse_mean) * (e - row.nrmse_mean);
            row.nrmse_std = errs.size() > 1 ? std::sqrt(acc / static_cast<double>(errs.size() - 1)) : 0.0;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<CurveSet> training_curves(const std::vector<RunRecord>& records)
{
    std::vector<CurveSet> curves;
    for (const auto& [key, members] : group(records)) {
        CurveSet c;
        std::tie(c.method, c.benchmark, c.noise, c.data_multiplier, c.ablation) = key;
        std::size_t len = 0;
        for (const auto* r : members) len = std::max(len, r->best_reward_curve.size());
        for (std::size_t s = 0; s < len; ++s) {
            CurvePoint p;
            p.step = static_cast<int>(s);
            int n = 0;
            for (const auto* r : members) {
                if (r->best_reward_curve.empty()) continue;
                const std::size_t idx = std::min(s, r->best_reward_curve.size() - 1);
                p.best_reward_mean += r->best_reward_curve[idx];
                p.recovery_fraction += r->recovered_curve[idx];
                ++n;
            }
            if (n) {
                p.best_reward_mean /= n;
                p.recovery_fraction /= n;
            }
            c.points.push_back(p);
        }
        curves.push_back(std::move(c));
    }
    return curves;
}

namespace {

std::string csv_field(std::string_view s)
{
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> parse_csv_line(const std::string& line)
{
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string join_doubles(const std::vector<double>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt::format("{}", v[i]);
    return out;
}

constexpr const char* kRecordHeader =
    "method,benchmark,noise,data_multiplier,ablation,seed,recovered,train_reward,test_nrmse,"
    "steps,expression,infix,error,best_reward_curve,recovered_curve";

}  // namespace

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records)
{
    out << kRecordHeader << '\n';
    for (const auto& r : records) {
        std::string rc;
        for (auto v : r.recovered_curve) rc += v ? '1' : '0';
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.method),
                           csv_field(r.benchmark), r.noise, r.data_multiplier, csv_field(r.ablation), r.seed,
                           r.recovered ? 1 : 0, r.train_reward, r.test_nrmse, r.steps, csv_field(r.expression),
                           csv_field(r.infix), csv_field(r.error), join_doubles(r.best_reward_curve), rc);
    }
}

std::vector<RunRecord> read_records_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || trim(line) != kRecordHeader)
        throw std::runtime_error("records file has an unexpected header");
    std::vector<RunRecord> out;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto f = parse_csv_line(line);
        if (f.size() != 15) throw std::runtime_error("records row has the wrong field count");
        RunRecord r;
        r.method = f[0];
        r.benchmark = f[1];
        r.noise = std::strtod(f[2].c_str(), nullptr);
        r.data_multiplier = std::stoi(f[3]);
        r.ablation = f[4];
        r.seed = std::stoull(f[5]);
        r.recovered = f[6] == "1";
        r.train_reward = std::strtod(f[7].c_str(), nullptr);
        r.test_nrmse = std::strtod(f[8].c_str(), nullptr);
        r.steps = std::stoi(f[9]);
        r.expression = f[10];
        r.infix = f[11];
        r.error = f[12];
        std::istringstream curve(f[13]);
        std::string w;
        while (curve >> w) r.best_reward_curve.push_back(std::strtod(w.c_str(), nullptr));
        for (char c : f[14]) r.recovered_curve.push_back(c == '1' ? 1 : 0);
        out.push_back(std::move(r));
    }
    return out;
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows)
{
    out << "method,benchmark,noise,data_multiplier,ablation,runs,recovered,failed,recovery_pct,nrmse_mean,nrmse_std\n";
    for (const auto& r : rows)
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.method), csv_field(r.benchmark),
                           r.noise, r.data_multiplier, csv_field(r.ablation), r.runs, r.recovered, r.failed,
                           r.recovery_pct, r.nrmse_mean, r.nrmse_std);
}

void write_curve_csv(std::ostream& out, const CurveSet& curve)
{
    out << "step,best_reward,recovery_fraction\n";
    for (const auto& p : curve.points)
        out << fmt::format("{},{},{}\n", p.step, p.best_reward_mean, p.recovery_fraction);
}

std::string curve_file_name(const CurveSet& c)
{
    return lower(fmt::format("{}_{}_noise{}_x{}_{}.csv", c.method, c.benchmark, c.noise, c.data_multiplier,
                             c.ablation));
}

void write_timings_csv(std::ostream& out, const std::vector<RunRecord>& records)
{
    out << "method,benchmark,noise,data_multiplier,ablation,seed,wall_seconds\n";
    for (const auto& r : records)
        out << fmt::format("{},{},{},{},{},{},{:.3f}\n", r.method, r.benchmark, r.noise, r.data_multiplier,
                           r.ablation, r.seed, r.wall_seconds);
}

void write_history_csv(std::ostream& out, const Library& lib, const std::vector<HistoryRecord>& history)
{
    out << "step,best_reward,mean_reward,threshold,baseline,best_expression\n";
    for (const auto& h : history)
        out << fmt::format("{},{},{},{},{},{}\n", h.step, h.best_reward, h.mean_reward, h.threshold, h.baseline,
                           csv_field(render_infix(lib, h.best)));
}

Dataset load_csv_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open dataset '{}'", path.string()));
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(fmt::format("dataset '{}' is empty", path.string()));
    const auto header = parse_csv_line(line);
    if (header.size() < 2)
        throw std::runtime_error(fmt::format("dataset '{}' needs at least one input and one target column",
                                             path.string()));
    Dataset d;
    for (std::size_t i = 0; i + 1 < header.size(); ++i) d.variable_names.push_back(trim(header[i]));
    std::vector<double> xs;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = parse_csv_line(line);
        if (f.size() != header.size())
            throw std::runtime_error(
                fmt::format("{}:{}: expected {} fields, got {}", path.string(), lineno, header.size(), f.size()));
        for (std::size_t i = 0; i < f.size(); ++i) {
            double v = 0.0;
            try {
                v = parse_double(trim(f[i]));
            } catch (const std::exception&) {
                throw std::runtime_error(fmt::format("{}:{}: bad number '{}'", path.string(), lineno, f[i]));
            }
            if (i + 1 < f.size()) xs.push_back(v);
            else d.y.push_back(v);
        }
    }
    d.X.rows = d.y.size();
    d.X.cols = d.variable_names.size();
    d.X.data = std::move(xs);
    d.validate();
    return d;
}

void save_csv_dataset(std::ostream& out, const Dataset& data)
{
    for (const auto& n : data.variable_names) out << n << ',';
    out << "y\n";
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (std::size_t c = 0; c < data.X.cols; ++c) out << fmt::format("{},", data.X(r, c));
        out << fmt::format("{}\n", data.y[r]);
    }
}

}  // namespace deepsr
