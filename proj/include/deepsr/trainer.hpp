#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepsr/const_opt.hpp"
#include "deepsr/expression.hpp"
#include "deepsr/policy.hpp"
#include "deepsr/sampler.hpp"

namespace deepsr {

enum class Optimizer : std::uint8_t { GradientAscent, Adam };

struct TrainConfig {
    double learning_rate = 0.0003;
    double baseline_beta = 0.5;
    double complexity_coef = 0.0;
    double entropy_coef = 0.08;
    double risk_eps = 0.1;
    int batch_size = 1000;
    int iterations = 1000;
    std::uint64_t seed = 0;
    std::size_t hidden = Policy::kDefaultHidden;
    ConstraintSet constraints;
    InputMode input_mode = InputMode::ParentSibling;
    Optimizer optimizer = Optimizer::GradientAscent;
    /// Stop once the best unpenalized training reward reaches this value.
    std::optional<double> stop_reward;
    unsigned threads = 1;
    BfgsOptions bfgs;

    void validate() const;
};

/// Per-step progress; the same layout is produced by the GP baseline
/// (threshold and baseline are NaN there).
struct HistoryRecord {
    int step = 0;
    double best_reward = 0.0;
    double mean_reward = 0.0;
    double threshold = std::numeric_limits<double>::quiet_NaN();
    double baseline = std::numeric_limits<double>::quiet_NaN();
    Expression best;
};

struct TrainResult {
    std::optional<Expression> best;
    double best_reward = -std::numeric_limits<double>::infinity();
    std::vector<HistoryRecord> history;
    Policy policy;
};

/// RMSE divided by the population standard deviation of y. Throws
/// std::invalid_argument for mismatched lengths, n < 2, or constant y.
double nrmse(std::span<const double> y, std::span<const double> y_hat);

/// 1 / (1 + nrmse) - complexity_coef * |tau|.
double reward(const Library& lib, const Expression& expr, const Matrix& X, std::span<const double> y,
              double complexity_coef = 0.0);
double squash(double nrmse_value) noexcept;

struct RiskSelection {
    double threshold = 0.0;
    std::vector<std::size_t> selected;
};

/// Threshold is the (1 - eps) quantile taken as the sorted value at index
/// ceil((1 - eps) * (n - 1)); every reward >= threshold is kept.
RiskSelection risk_filter(std::span<const double> rewards, double eps);

double update_baseline(double baseline, std::span<const double> selected_rewards, double beta);

TrainResult train(const TrainConfig& config, const Library& lib, const Dataset& data);

}  // namespace deepsr
