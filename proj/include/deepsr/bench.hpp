#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepsr/expression.hpp"
#include "deepsr/gp.hpp"
#include "deepsr/infix.hpp"
#include "deepsr/trainer.hpp"

namespace deepsr {

struct BenchmarkSpec {
    std::string name;
    std::vector<std::string> variables;
    std::string expression;  // infix ground truth
    InfixNode ground_truth;
    double low = 0.0;
    double high = 1.0;
    int points = 20;
    bool has_constants = false;

    double truth(std::span<const double> point) const
    {
        return evaluate_infix(ground_truth, variables, point);
    }
    /// Default operator set plus this benchmark's variables (and the constant
    /// placeholder when the benchmark has constants).
    Library library() const;
};

/// Parses the versioned definition format shipped in data/benchmarks.txt.
std::vector<BenchmarkSpec> parse_benchmarks(std::istream& in);
/// The built-in copy of data/benchmarks.txt.
const std::vector<BenchmarkSpec>& benchmark_catalogue();
std::string_view builtin_benchmark_text();
/// Case-insensitive lookup ("nguyen-1" finds Nguyen-1). Throws std::invalid_argument.
const BenchmarkSpec& find_benchmark(std::string_view name);
/// "nguyen", "constant", "all", or a comma-separated list of names.
std::vector<std::string> benchmark_suite(std::string_view selection);

enum class Split : std::uint8_t { Train, Test };

/// Deterministic in (spec, seed, split); train and test draw from different streams.
Dataset generate_dataset(const BenchmarkSpec& spec, std::uint64_t seed, Split split, int size_multiplier = 1);

/// y += N(0, (gamma * RMS(y))^2) per point. gamma = 0 returns the input.
Dataset add_noise(const Dataset& data, double gamma, std::uint64_t seed);

inline constexpr int kProbePoints = 1000;
inline constexpr double kRecoveryTolerance = 1e-10;
inline constexpr double kConstantRecoveryTolerance = 1e-4;

/// Numeric equivalence against the ground truth on a fixed probe set drawn
/// from the benchmark's domain: max |f - g| <= tol * (1 + max |g|).
bool recovery_check(const Library& lib, const Expression& candidate, const BenchmarkSpec& spec);

/// Applies a named ablation to a DSR configuration:
/// none, parent-sibling, risk, entropy, baseline, all-improvements,
/// constrain-trig, constrain-inverse, constrain-minmax, all-constraints, all.
void apply_ablation(TrainConfig& config, std::string_view ablation);
const std::vector<std::string>& ablation_names();

/// Noise grid used by the harness when none is given.
std::vector<double> default_noise_grid();

enum class Method : std::uint8_t { DSR, GP };
std::string_view method_name(Method m);
Method parse_method(std::string_view s);

struct RunRecord {
    std::string method;
    std::string benchmark;
    double noise = 0.0;
    int data_multiplier = 1;
    std::string ablation = "none";
    std::uint64_t seed = 0;
    bool recovered = false;
    double train_reward = 0.0;
    double test_nrmse = 0.0;
    std::string expression;  // serialized pre-order form
    std::string infix;
    int steps = 0;
    std::string error;  // empty on success
    std::vector<double> best_reward_curve;
    std::vector<std::uint8_t> recovered_curve;
    double wall_seconds = 0.0;  // not part of the deterministic record files
};

struct RunSpec {
    Method method = Method::DSR;
    std::string benchmark;
    std::uint64_t seed = 0;
    double noise = 0.0;
    int data_multiplier = 1;
    std::string ablation = "none";
};

struct BenchmarkTask {
    Library lib;
    Dataset train;  // noise applied
    Dataset test;   // always noiseless
};

/// Training data seeded by `seed` (size multiplied), noise on training targets only.
BenchmarkTask prepare_benchmark(const BenchmarkSpec& spec, std::uint64_t seed, double noise, int data_multiplier);

struct FitOutcome {
    Expression best;
    double train_reward = 0.0;
    std::vector<HistoryRecord> history;
};

/// Runs DSR or GP with the given config as is (seed and ablation already applied).
FitOutcome fit_method(Method method, const TrainConfig& dsr, const GPConfig& gp, const Library& lib,
                      const Dataset& data);

/// One training run end to end: data generation, noise, training, test NRMSE,
/// recovery. Failures are captured in RunRecord::error.
RunRecord run_single(const RunSpec& run, const TrainConfig& dsr, const GPConfig& gp,
                     std::vector<HistoryRecord>* history = nullptr);

struct CampaignConfig {
    std::vector<Method> methods{Method::DSR};
    std::vector<std::string> benchmarks;
    int runs = 5;
    std::vector<double> noise_levels{0.0};
    int data_multiplier = 1;
    std::string ablation = "none";
    std::uint64_t base_seed = 0;
    TrainConfig dsr;
    GPConfig gp;
    unsigned threads = 1;  // cells in flight
};

struct AggregateRow {
    std::string method;
    std::string benchmark;
    double noise = 0.0;
    int data_multiplier = 1;
    std::string ablation;
    int runs = 0;
    int recovered = 0;
    int failed = 0;
    double recovery_pct = 0.0;
    double nrmse_mean = 0.0;
    double nrmse_std = 0.0;  // sample standard deviation
};

struct CurvePoint {
    int step = 0;
    double best_reward_mean = 0.0;
    double recovery_fraction = 0.0;
};

struct CurveSet {
    std::string method, benchmark, ablation;
    double noise = 0.0;
    int data_multiplier = 1;
    std::vector<CurvePoint> points;
};

struct CampaignResult {
    std::vector<RunRecord> records;
    std::vector<AggregateRow> aggregates;
    std::vector<CurveSet> curves;
};

std::vector<RunSpec> campaign_cells(const CampaignConfig& config);
CampaignResult run_campaign(const CampaignConfig& config);
std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records);
std::vector<CurveSet> training_curves(const std::vector<RunRecord>& records);

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_records_csv(std::istream& in);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows);
void write_curve_csv(std::ostream& out, const CurveSet& curve);
void write_timings_csv(std::ostream& out, const std::vector<RunRecord>& records);
void write_history_csv(std::ostream& out, const Library& lib, const std::vector<HistoryRecord>& history);
std::string curve_file_name(const CurveSet& curve);

/// Header row names the variables and the target (last column).
Dataset load_csv_dataset(const std::filesystem::path& path);
void save_csv_dataset(std::ostream& out, const Dataset& data);

}  // namespace deepsr
