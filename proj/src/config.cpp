#include "deepsr/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

namespace deepsr {

namespace {

std::string trim(std::string_view s)
{
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

double to_double(std::string_view key, std::string_view v)
{
    const std::string s(v);
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size())
        throw std::invalid_argument(fmt::format("{}: expected a number, got '{}'", key, v));
    return d;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view v)
{
    Int out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw std::invalid_argument(fmt::format("{}: expected an integer, got '{}'", key, v));
    return out;
}

bool to_bool(std::string_view key, std::string_view v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument(fmt::format("{}: expected true/false, got '{}'", key, v));
}

std::optional<double> to_optional(std::string_view key, std::string_view v)
{
    if (v == "none" || v.empty()) return std::nullopt;
    return to_double(key, v);
}

std::string show(double v) { return fmt::format("{}", v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const std::optional<double>& v) { return v ? show(*v) : "none"; }

std::string join(const std::vector<std::string>& parts)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
    return out;
}

std::vector<std::string> split_list(std::string_view v)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto pos = v.find(',', start);
        auto part = trim(v.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (!part.empty()) out.push_back(std::move(part));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

struct Field {
    std::function<std::string(const Settings&)> get;
    std::function<void(Settings&, std::string_view key, std::string_view)> set;
};

#define DOUBLE_FIELD(member)                                                                        \
    Field                                                                                           \
    {                                                                                               \
        [](const Settings& s) { return show(s.member); },                                           \
            [](Settings& s, std::string_view k, std::string_view v) { s.member = to_double(k, v); } \
    }
#define INT_FIELD(member)                                                                            \
    Field                                                                                            \
    {                                                                                                \
        [](const Settings& s) { return fmt::format("{}", s.member); },                               \
            [](Settings& s, std::string_view k, std::string_view v) {                                \
                s.member = to_int<std::remove_reference_t<decltype(s.member)>>(k, v);               \
            }                                                                                        \
    }
#define BOOL_FIELD(member)                                                                        \
    Field                                                                                         \
    {                                                                                             \
        [](const Settings& s) { return show(s.member); },                                         \
            [](Settings& s, std::string_view k, std::string_view v) { s.member = to_bool(k, v); } \
    }
#define STRING_FIELD(member)                                                                         \
    Field                                                                                            \
    {                                                                                                \
        [](const Settings& s) { return s.member; },                                                  \
            [](Settings& s, std::string_view, std::string_view v) { s.member = std::string(v); }   \
    }

const std::vector<std::pair<std::string, Field>>& fields()
{
    static const std::vector<std::pair<std::string, Field>> table = {
        {"task.method", {[](const Settings& s) { return std::string(method_name(s.method)); },
                         [](Settings& s, std::string_view, std::string_view v) { s.method = parse_method(v); }}},
        {"task.benchmark", STRING_FIELD(benchmark)},
        {"task.data", STRING_FIELD(data)},
        {"task.test_data", STRING_FIELD(test_data)},
        {"task.constants",
         {[](const Settings& s) { return s.constants; },
          [](Settings& s, std::string_view k, std::string_view v) {
              if (v != "auto" && v != "yes" && v != "no")
                  throw std::invalid_argument(fmt::format("{}: expected auto, yes or no", k));
              s.constants = std::string(v);
          }}},
        {"task.operators",
         {[](const Settings& s) { return join(s.operators); },
          [](Settings& s, std::string_view, std::string_view v) {
              auto ops = split_list(v);
              for (const auto& o : ops) make_operator(o);
              s.operators = std::move(ops);
          }}},
        {"task.noise", DOUBLE_FIELD(noise)},
        {"task.data_multiplier", INT_FIELD(data_multiplier)},
        {"task.ablation",
         {[](const Settings& s) { return s.ablation; },
          [](Settings& s, std::string_view, std::string_view v) {
              TrainConfig probe;
              apply_ablation(probe, v);
              s.ablation = std::string(v);
          }}},
        {"run.seed", INT_FIELD(seed)},
        {"run.threads", INT_FIELD(threads)},
        {"bench.suite",
         {[](const Settings& s) { return s.suite; },
          [](Settings& s, std::string_view, std::string_view v) {
              benchmark_suite(v);
              s.suite = std::string(v);
          }}},
        {"bench.runs", INT_FIELD(runs)},
        {"bench.methods",
         {[](const Settings& s) { return s.bench_methods; },
          [](Settings& s, std::string_view k, std::string_view v) {
              if (v != "dsr" && v != "gp" && v != "both")
                  throw std::invalid_argument(fmt::format("{}: expected dsr, gp or both", k));
              s.bench_methods = std::string(v);
          }}},
        {"bench.noise_grid",
         {[](const Settings& s) {
              std::vector<std::string> parts;
              for (double g : s.noise_grid) parts.push_back(fmt::format("{}", g));
              return join(parts);
          },
          [](Settings& s, std::string_view k, std::string_view v) {
              if (v == "default") {
                  s.noise_grid = default_noise_grid();
                  return;
              }
              std::vector<double> grid;
              for (const auto& part : split_list(v)) grid.push_back(to_double(k, part));
              if (grid.empty()) throw std::invalid_argument(fmt::format("{}: empty noise grid", k));
              for (double g : grid)
                  if (!(g >= 0.0)) throw std::invalid_argument(fmt::format("{}: noise must be nonnegative", k));
              s.noise_grid = std::move(grid);
          }}},

        {"dsr.learning_rate", DOUBLE_FIELD(dsr.learning_rate)},
        {"dsr.baseline_beta", DOUBLE_FIELD(dsr.baseline_beta)},
        {"dsr.complexity_coef", DOUBLE_FIELD(dsr.complexity_coef)},
        {"dsr.entropy_coef", DOUBLE_FIELD(dsr.entropy_coef)},
        {"dsr.risk_eps", DOUBLE_FIELD(dsr.risk_eps)},
        {"dsr.batch_size", INT_FIELD(dsr.batch_size)},
        {"dsr.iterations", INT_FIELD(dsr.iterations)},
        {"dsr.hidden", INT_FIELD(dsr.hidden)},
        {"dsr.input_mode",
         {[](const Settings& s) {
              return std::string(s.dsr.input_mode == InputMode::ParentSibling ? "parent-sibling" : "previous-token");
          },
          [](Settings& s, std::string_view k, std::string_view v) {
              if (v == "parent-sibling") s.dsr.input_mode = InputMode::ParentSibling;
              else if (v == "previous-token") s.dsr.input_mode = InputMode::PreviousToken;
              else throw std::invalid_argument(fmt::format("{}: expected parent-sibling or previous-token", k));
          }}},
        {"dsr.optimizer",
         {[](const Settings& s) { return std::string(s.dsr.optimizer == Optimizer::Adam ? "adam" : "sgd"); },
          [](Settings& s, std::string_view k, std::string_view v) {
              if (v == "adam") s.dsr.optimizer = Optimizer::Adam;
              else if (v == "sgd") s.dsr.optimizer = Optimizer::GradientAscent;
              else throw std::invalid_argument(fmt::format("{}: expected sgd or adam", k));
          }}},
        {"dsr.stop_reward",
         {[](const Settings& s) { return show(s.dsr.stop_reward); },
          [](Settings& s, std::string_view k, std::string_view v) { s.dsr.stop_reward = to_optional(k, v); }}},
        {"dsr.min_length", INT_FIELD(dsr.constraints.min_length)},
        {"dsr.max_length", INT_FIELD(dsr.constraints.max_length)},
        {"dsr.max_constants", INT_FIELD(dsr.constraints.max_constants)},
        {"dsr.constrain_length", BOOL_FIELD(dsr.constraints.length)},
        {"dsr.constrain_const_children", BOOL_FIELD(dsr.constraints.const_children)},
        {"dsr.constrain_inverse", BOOL_FIELD(dsr.constraints.inverse_unary)},
        {"dsr.constrain_trig", BOOL_FIELD(dsr.constraints.nested_trig)},
        {"dsr.constrain_constants", BOOL_FIELD(dsr.constraints.limit_constants)},

        {"gp.population_size", INT_FIELD(gp.population_size)},
        {"gp.generations", INT_FIELD(gp.generations)},
        {"gp.tournament_size", INT_FIELD(gp.tournament_size)},
        {"gp.crossover_prob", DOUBLE_FIELD(gp.crossover_prob)},
        {"gp.mutation_prob", DOUBLE_FIELD(gp.mutation_prob)},
        {"gp.min_depth", INT_FIELD(gp.min_depth)},
        {"gp.max_depth", INT_FIELD(gp.max_depth)},
        {"gp.max_constants", INT_FIELD(gp.max_constants)},
        {"gp.stop_nrmse",
         {[](const Settings& s) { return show(s.gp.stop_nrmse); },
          [](Settings& s, std::string_view k, std::string_view v) { s.gp.stop_nrmse = to_optional(k, v); }}},

        {"bfgs.max_iterations", INT_FIELD(dsr.bfgs.max_iterations)},
        {"bfgs.gradient_tolerance", DOUBLE_FIELD(dsr.bfgs.gradient_tolerance)},
        {"bfgs.relative_step", DOUBLE_FIELD(dsr.bfgs.relative_step)},
        {"bfgs.armijo", DOUBLE_FIELD(dsr.bfgs.armijo)},
        {"bfgs.max_backtracks", INT_FIELD(dsr.bfgs.max_backtracks)},
    };
    return table;
}

#undef DOUBLE_FIELD
#undef INT_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD

}  // namespace

void Settings::set(std::string_view key, std::string_view value)
{
    const auto k = trim(key);
    const auto v = trim(value);
    for (const auto& [name, field] : fields()) {
        if (name == k) {
            field.set(*this, k, v);
            return;
        }
    }
    throw std::invalid_argument(fmt::format("unknown config key '{}'", k));
}

TrainConfig Settings::train_config() const
{
    TrainConfig c = dsr;
    c.seed = seed;
    c.threads = threads;
    return c;
}

GPConfig Settings::gp_config() const
{
    GPConfig c = gp;
    c.seed = seed;
    c.threads = threads;
    c.bfgs = dsr.bfgs;
    return c;
}

CampaignConfig Settings::campaign_config() const
{
    CampaignConfig c;
    if (bench_methods == "both") c.methods = {Method::DSR, Method::GP};
    else c.methods = {parse_method(bench_methods)};
    c.benchmarks = benchmark_suite(suite);
    if (runs < 1) throw std::invalid_argument("bench.runs must be at least 1");
    c.runs = runs;
    c.noise_levels = noise_grid;
    c.data_multiplier = data_multiplier;
    c.ablation = ablation;
    c.base_seed = seed;
    c.dsr = dsr;
    c.gp = gp;
    c.gp.bfgs = dsr.bfgs;
    c.threads = threads;
    return c;
}

std::vector<std::pair<std::string, std::string>> Settings::entries() const
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, field] : fields()) out.emplace_back(name, field.get(*this));
    return out;
}

void read_settings(std::istream& in, Settings& settings, std::string_view source)
{
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(fmt::format("{}:{}: expected 'key = value'", source, lineno));
        try {
            settings.set(t.substr(0, eq), t.substr(eq + 1));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(fmt::format("{}:{}: {}", source, lineno, e.what()));
        }
    }
}

void read_settings_file(const std::filesystem::path& path, Settings& settings)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open config '{}'", path.string()));
    read_settings(in, settings, path.string());
}

void write_settings(std::ostream& out, const Settings& settings)
{
    for (const auto& [k, v] : settings.entries()) out << k << " = " << v << '\n';
}

void apply_override(Settings& settings, std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
        throw std::invalid_argument(fmt::format("override '{}' is not key=value", assignment));
    settings.set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

}  // namespace deepsr
