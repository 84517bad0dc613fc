#include "deepsr/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "deepsr/parallel.hpp"

namespace deepsr {

void GPConfig::validate() const
{
    if (population_size < 1) throw std::invalid_argument("population_size must be at least 1");
    if (generations < 0) throw std::invalid_argument("generations must be nonnegative");
    if (tournament_size < 1) throw std::invalid_argument("tournament_size must be at least 1");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(crossover_prob) || !prob(mutation_prob)) throw std::invalid_argument("probabilities must be in [0, 1]");
    if (min_depth < 0 || min_depth > max_depth) throw std::invalid_argument("need 0 <= min_depth <= max_depth");
    if (max_constants < 0) throw std::invalid_argument("max_constants must be nonnegative");
}

namespace {

struct Pools {
    std::vector<int> operators;
    std::vector<int> terminals;
};

Pools pools(const Library& lib)
{
    Pools p;
    for (std::size_t i = 0; i < lib.size(); ++i)
        (lib.arity(static_cast<int>(i)) > 0 ? p.operators : p.terminals).push_back(static_cast<int>(i));
    return p;
}

void grow_full(const Library& lib, const Pools& p, int level, int depth, Rng& rng, std::vector<int>& out)
{
    if (level == depth) {
        out.push_back(p.terminals[uniform_index(rng, p.terminals.size())]);
        return;
    }
    const int op = p.operators[uniform_index(rng, p.operators.size())];
    out.push_back(op);
    for (int c = 0; c < lib.arity(op); ++c) grow_full(lib, p, level + 1, depth, rng, out);
}

int random_depth(const GPConfig& cfg, Rng& rng)
{
    return std::uniform_int_distribution<int>(cfg.min_depth, cfg.max_depth)(rng);
}

Expression capped_full(const Library& lib, int depth, std::size_t budget, Rng& rng)
{
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto e = init_full(lib, depth, rng);
        if (e.constants.size() <= budget) return e;
    }
    Expression fallback;
    fallback.tokens.push_back(*lib.first_variable());
    return fallback;
}

std::size_t constants_before(const Library& lib, const Expression& e, std::size_t pos)
{
    return count_constants(lib, std::span<const int>(e.tokens.data(), pos));
}

}  // namespace

Expression init_full(const Library& lib, int depth, Rng& rng)
{
    if (depth < 0) throw std::invalid_argument("depth must be nonnegative");
    const auto p = pools(lib);
    if (depth > 0 && p.operators.empty())
        throw std::invalid_argument("full initialization above depth 0 needs operators in the library");
    Expression e;
    grow_full(lib, p, 0, depth, rng, e.tokens);
    e.constants.assign(count_constants(lib, e.tokens), 1.0);
    return e;
}

std::size_t tournament_select(std::span<const double> fitness, int k, Rng& rng)
{
    if (fitness.empty()) throw std::invalid_argument("tournament over an empty population");
    std::size_t best = uniform_index(rng, fitness.size());
    for (int i = 1; i < k; ++i) {
        const std::size_t c = uniform_index(rng, fitness.size());
        if (fitness[c] < fitness[best] || (fitness[c] == fitness[best] && c < best)) best = c;
    }
    return best;
}

Expression replace_subtree(const Library& lib, const Expression& a, std::size_t at, const Expression& subtree)
{
    const std::size_t end = subtree_end(lib, a.tokens, at);
    const std::size_t c0 = constants_before(lib, a, at);
    const std::size_t c1 = constants_before(lib, a, end);
    Expression out;
    out.tokens.assign(a.tokens.begin(), a.tokens.begin() + static_cast<std::ptrdiff_t>(at));
    out.tokens.insert(out.tokens.end(), subtree.tokens.begin(), subtree.tokens.end());
    out.tokens.insert(out.tokens.end(), a.tokens.begin() + static_cast<std::ptrdiff_t>(end), a.tokens.end());
    out.constants.assign(a.constants.begin(), a.constants.begin() + static_cast<std::ptrdiff_t>(c0));
    out.constants.insert(out.constants.end(), subtree.constants.begin(), subtree.constants.end());
    out.constants.insert(out.constants.end(), a.constants.begin() + static_cast<std::ptrdiff_t>(c1),
                         a.constants.end());
    return out;
}

namespace {

Expression extract_subtree(const Library& lib, const Expression& a, std::size_t at)
{
    const std::size_t end = subtree_end(lib, a.tokens, at);
    Expression out;
    out.tokens.assign(a.tokens.begin() + static_cast<std::ptrdiff_t>(at),
                      a.tokens.begin() + static_cast<std::ptrdiff_t>(end));
    const std::size_t c0 = constants_before(lib, a, at);
    const std::size_t c1 = constants_before(lib, a, end);
    out.constants.assign(a.constants.begin() + static_cast<std::ptrdiff_t>(c0),
                         a.constants.begin() + static_cast<std::ptrdiff_t>(c1));
    return out;
}

}  // namespace

std::pair<Expression, Expression> swap_subtrees(const Library& lib, const Expression& a, std::size_t at_a,
                                                const Expression& b, std::size_t at_b)
{
    const auto sa = extract_subtree(lib, a, at_a);
    const auto sb = extract_subtree(lib, b, at_b);
    return {replace_subtree(lib, a, at_a, sb), replace_subtree(lib, b, at_b, sa)};
}

std::pair<Expression, Expression> subtree_crossover(const Library& lib, const Expression& a,
                                                    const Expression& b, Rng& rng)
{
    const std::size_t i = uniform_index(rng, a.tokens.size());
    const std::size_t j = uniform_index(rng, b.tokens.size());
    return swap_subtrees(lib, a, i, b, j);
}

Expression subtree_mutation(const Library& lib, const Expression& a, const GPConfig& config, Rng& rng)
{
    const std::size_t at = uniform_index(rng, a.tokens.size());
    const std::size_t end = subtree_end(lib, a.tokens, at);
    const std::size_t outside = a.constants.size()
                                - (constants_before(lib, a, end) - constants_before(lib, a, at));
    const std::size_t cap = static_cast<std::size_t>(config.max_constants);
    const std::size_t budget = outside >= cap ? 0 : cap - outside;
    const auto sub = capped_full(lib, random_depth(config, rng), budget, rng);
    return replace_subtree(lib, a, at, sub);
}

double gp_fitness(const Library& lib, Expression& expr, const Dataset& data, const BfgsOptions& bfgs)
{
    try {
        auto fit = optimize_constants(lib, expr, data.X, data.y, bfgs);
        expr = std::move(fit.expr);
        const auto pred = evaluate(lib, expr, data.X);
        const double v = nrmse(data.y, pred);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
        return std::numeric_limits<double>::infinity();
    }
}

GPResult gp_train(const GPConfig& config, const Library& lib, const Dataset& data)
{
    config.validate();
    data.validate();
    if (!lib.first_variable()) throw std::invalid_argument("GP needs at least one input variable");
    {
        std::vector<double> flat(data.y.size(), data.y.front());
        if (data.y == flat) throw std::invalid_argument("training targets are constant (sigma_y = 0)");
    }
    Rng rng(derive_seed(config.seed, 0x6e9));
    const auto N = static_cast<std::size_t>(config.population_size);
    const auto cap = static_cast<std::size_t>(config.max_constants);

    std::vector<Individual> pop(N);
    for (auto& ind : pop) ind.expr = capped_full(lib, random_depth(config, rng), cap, rng);

    auto evaluate_all = [&](std::vector<Individual>& individuals, const std::vector<char>& dirty) {
        parallel_for(individuals.size(), config.threads, [&](std::size_t i) {
            if (dirty[i]) individuals[i].fitness = gp_fitness(lib, individuals[i].expr, data, config.bfgs);
        });
    };
    evaluate_all(pop, std::vector<char>(N, 1));

    GPResult result;
    auto record = [&](int gen) {
        for (const auto& ind : pop)
            if (ind.fitness < result.best.fitness || result.best.expr.tokens.empty()) result.best = ind;
        HistoryRecord h;
        h.step = gen;
        h.best_reward = squash(result.best.fitness);
        double acc = 0.0;
        for (const auto& ind : pop) acc += squash(ind.fitness);
        h.mean_reward = acc / static_cast<double>(N);
        h.best = result.best.expr;
        result.history.push_back(std::move(h));
    };
    record(0);

    std::vector<double> fitness(N);
    for (int gen = 1; gen <= config.generations; ++gen) {
        if (config.stop_nrmse && result.best.fitness <= *config.stop_nrmse) break;
        for (std::size_t i = 0; i < N; ++i) fitness[i] = pop[i].fitness;
        std::vector<Individual> offspring(N);
        for (std::size_t i = 0; i < N; ++i) offspring[i] = pop[tournament_select(fitness, config.tournament_size, rng)];
        std::vector<char> dirty(N, 0);
        for (std::size_t i = 1; i < N; i += 2) {
            if (uniform01(rng) < config.crossover_prob) {
                auto [a, b] = subtree_crossover(lib, offspring[i - 1].expr, offspring[i].expr, rng);
                if (a.constants.size() <= cap) offspring[i - 1].expr = std::move(a);
                if (b.constants.size() <= cap) offspring[i].expr = std::move(b);
                dirty[i - 1] = dirty[i] = 1;
            }
        }
        for (std::size_t i = 0; i < N; ++i) {
            if (uniform01(rng) < config.mutation_prob) {
                offspring[i].expr = subtree_mutation(lib, offspring[i].expr, config, rng);
                dirty[i] = 1;
            }
        }
        evaluate_all(offspring, dirty);
        pop = std::move(offspring);
        record(gen);
    }
    return result;
}

}  // namespace deepsr
