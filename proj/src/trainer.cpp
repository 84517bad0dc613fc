#include "deepsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "deepsr/parallel.hpp"
#include "deepsr/random.hpp"

namespace deepsr {

void TrainConfig::validate() const
{
    if (!(risk_eps > 0.0 && risk_eps <= 1.0))
        throw std::invalid_argument(fmt::format("risk_eps must be in (0, 1], got {}", risk_eps));
    if (!(baseline_beta >= 0.0 && baseline_beta <= 1.0))
        throw std::invalid_argument(fmt::format("baseline_beta must be in [0, 1], got {}", baseline_beta));
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (iterations < 0) throw std::invalid_argument("iterations must be nonnegative");
    constraints.validate();
}

namespace {

double population_std(std::span<const double> y)
{
    const double n = static_cast<double>(y.size());
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double acc = 0.0;
    for (double v : y) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / n);
}

}  // namespace

double nrmse(std::span<const double> y, std::span<const double> y_hat)
{
    if (y.size() != y_hat.size())
        throw std::invalid_argument(fmt::format("nrmse: {} targets vs {} predictions", y.size(), y_hat.size()));
    if (y.size() < 2) throw std::invalid_argument("nrmse needs at least two points");
    const double sigma = population_std(y);
    if (!(sigma > 0.0)) throw std::invalid_argument("nrmse undefined for constant targets (sigma_y = 0)");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    return std::sqrt(acc / static_cast<double>(y.size())) / sigma;
}

double squash(double nrmse_value) noexcept { return 1.0 / (1.0 + nrmse_value); }

double reward(const Library& lib, const Expression& expr, const Matrix& X, std::span<const double> y,
              double complexity_coef)
{
    const auto pred = evaluate(lib, expr, X);
    return squash(nrmse(y, pred)) - complexity_coef * static_cast<double>(complexity(expr));
}

RiskSelection risk_filter(std::span<const double> rewards, double eps)
{
    if (rewards.empty()) throw std::invalid_argument("risk_filter on an empty batch");
    if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("risk_filter eps must be in (0, 1]");
    std::vector<double> sorted(rewards.begin(), rewards.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = (1.0 - eps) * static_cast<double>(sorted.size() - 1);
    auto rank = static_cast<std::size_t>(std::ceil(pos - 1e-9));
    rank = std::min(rank, sorted.size() - 1);
    RiskSelection out;
    out.threshold = sorted[rank];
    for (std::size_t i = 0; i < rewards.size(); ++i)
        if (rewards[i] >= out.threshold) out.selected.push_back(i);
    return out;
}

double update_baseline(double baseline, std::span<const double> selected_rewards, double beta)
{
    if (selected_rewards.empty()) throw std::invalid_argument("baseline update needs at least one reward");
    const double mean = std::accumulate(selected_rewards.begin(), selected_rewards.end(), 0.0)
                        / static_cast<double>(selected_rewards.size());
    return beta * mean + (1.0 - beta) * baseline;
}

TrainResult train(const TrainConfig& config, const Library& lib, const Dataset& data)
{
    config.validate();
    data.validate();
    const double sigma = population_std(data.y);
    if (!(sigma > 0.0)) throw std::invalid_argument("training targets are constant (sigma_y = 0)");

    TrainResult result;
    result.policy = Policy::initialized(lib.size(), derive_seed(config.seed, 0x5eed), config.hidden);
    auto& policy = result.policy;
    std::optional<AdamAscent> adam;
    if (config.optimizer == Optimizer::Adam) adam.emplace(policy.parameter_count());

    const auto N = static_cast<std::size_t>(config.batch_size);
    std::vector<Sample> samples(N);
    std::vector<double> raw(N), penalized(N);
    double baseline = 0.0;

    for (int it = 0; it < config.iterations; ++it) {
        parallel_for(N, config.threads, [&](std::size_t i) {
            Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(it) + 1, i));
            samples[i] = sample_expression(policy, lib, config.constraints, rng, config.input_mode);
            try {
                auto fit = optimize_constants(lib, samples[i].expr, data.X, data.y, config.bfgs);
                samples[i].expr = std::move(fit.expr);
                const double err = std::sqrt(fit.mse) / sigma;
                raw[i] = std::isfinite(err) ? squash(err) : 0.0;
            } catch (const std::exception&) {
                raw[i] = 0.0;
            }
            penalized[i] = raw[i] - config.complexity_coef * static_cast<double>(complexity(samples[i].expr));
        });

        const auto selection = risk_filter(penalized, config.risk_eps);
        std::vector<SampleRecord> subset;
        std::vector<double> advantages, selected_rewards;
        subset.reserve(selection.selected.size());
        for (auto i : selection.selected) {
            subset.push_back(samples[i].record);
            advantages.push_back(penalized[i] - baseline);
            selected_rewards.push_back(penalized[i]);
        }
        const auto grad = policy_gradients(policy, subset, advantages, config.entropy_coef);
        if (adam) adam->apply(policy, grad, config.learning_rate);
        else apply_update(policy, grad, config.learning_rate);
        baseline = update_baseline(baseline, selected_rewards, config.baseline_beta);

        const auto best_it = std::max_element(raw.begin(), raw.end());
        if (*best_it > result.best_reward) {
            result.best_reward = *best_it;
            result.best = samples[static_cast<std::size_t>(best_it - raw.begin())].expr;
        }

        HistoryRecord rec;
        rec.step = it;
        rec.best_reward = result.best_reward;
        rec.mean_reward = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(N);
        rec.threshold = selection.threshold;
        rec.baseline = baseline;
        rec.best = *result.best;
        result.history.push_back(std::move(rec));

        if (config.stop_reward && result.best_reward >= *config.stop_reward) break;
    }
    return result;
}

}  // namespace deepsr
