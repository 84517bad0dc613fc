#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "deepsr/expression.hpp"

namespace deepsr {

struct BfgsOptions {
    int max_iterations = 100;
    double gradient_tolerance = 1e-5;
    double relative_step = 1e-6;  // finite-difference step is relative_step * (1 + |c|)
    double armijo = 1e-4;
    int max_backtracks = 40;
};

struct FitResult {
    Expression expr;  // constants replaced by the optimum
    double mse = 0.0;
    int iterations = 0;
    bool converged = false;
};

double mse(const Library& lib, const Expression& expr, const Matrix& X, std::span<const double> y);

struct MinimizeResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// BFGS on a black-box objective with central-difference gradients and an
/// Armijo backtracking line search. Never returns a point worse than `start`;
/// non-finite objective values are treated as +inf.
MinimizeResult bfgs_minimize(const std::function<double(std::span<const double>)>& objective,
                             std::vector<double> start, const BfgsOptions& options = {});

/// Fits the placeholder constants by minimizing MSE from an all-ones start.
/// Expressions without placeholders come back unchanged.
FitResult optimize_constants(const Library& lib, const Expression& expr, const Matrix& X,
                             std::span<const double> y, const BfgsOptions& options = {});

/// Same, but starting from the expression's current constants.
FitResult refine_constants(const Library& lib, const Expression& expr, const Matrix& X,
                           std::span<const double> y, const BfgsOptions& options = {});

}  // namespace deepsr
