#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "deepsr/const_opt.hpp"
#include "deepsr/expression.hpp"
#include "deepsr/random.hpp"
#include "deepsr/trainer.hpp"

namespace deepsr {

struct GPConfig {
    int population_size = 1000;
    int generations = 1000;
    int tournament_size = 3;
    double crossover_prob = 0.5;
    double mutation_prob = 0.1;
    int min_depth = 0;
    int max_depth = 2;
    int max_constants = 3;
    std::uint64_t seed = 0;
    /// Stop once the best-ever NRMSE drops to this value or below.
    std::optional<double> stop_nrmse;
    unsigned threads = 1;
    BfgsOptions bfgs;

    void validate() const;
};

struct Individual {
    Expression expr;
    double fitness = std::numeric_limits<double>::infinity();  // NRMSE, lower is better
};

/// Koza "full" tree: operators on every level above `depth`, terminals on it.
/// Constants (if the library has them) start at 1.0.
Expression init_full(const Library& lib, int depth, Rng& rng);

/// k draws with replacement; returns the index of the lowest fitness, ties
/// going to the lowest population index.
std::size_t tournament_select(std::span<const double> fitness, int k, Rng& rng);

/// Swaps one uniformly chosen subtree of `a` with one of `b`.
std::pair<Expression, Expression> subtree_crossover(const Library& lib, const Expression& a,
                                                    const Expression& b, Rng& rng);
/// Swaps the subtrees rooted at the given positions.
std::pair<Expression, Expression> swap_subtrees(const Library& lib, const Expression& a, std::size_t at_a,
                                                const Expression& b, std::size_t at_b);

/// Replaces a uniformly chosen subtree with a fresh full tree of depth drawn
/// from [min_depth, max_depth]; replacements that would exceed max_constants
/// are redrawn.
Expression subtree_mutation(const Library& lib, const Expression& a, const GPConfig& config, Rng& rng);
Expression replace_subtree(const Library& lib, const Expression& a, std::size_t at, const Expression& subtree);

struct GPResult {
    Individual best;
    std::vector<HistoryRecord> history;
};

/// Fitness = NRMSE after constant optimization; +inf if evaluation fails.
double gp_fitness(const Library& lib, Expression& expr, const Dataset& data, const BfgsOptions& bfgs);

GPResult gp_train(const GPConfig& config, const Library& lib, const Dataset& data);

}  // namespace deepsr
