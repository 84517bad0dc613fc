#include "deepsr/const_opt.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace deepsr {

double mse(const Library& lib, const Expression& expr, const Matrix& X, std::span<const double> y)
{
    if (X.rows != y.size()) throw std::invalid_argument("X and y lengths differ");
    const auto pred = evaluate(lib, expr, X);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - pred[i];
        acc += r * r;
    }
    return acc / static_cast<double>(y.size());
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

MinimizeResult bfgs_minimize(const std::function<double(std::span<const double>)>& objective,
                             std::vector<double> start, const BfgsOptions& options)
{
    const std::size_t k = start.size();
    auto f_safe = [&](std::span<const double> x) {
        const double v = objective(x);
        return std::isfinite(v) ? v : kInf;
    };
    auto gradient = [&](std::vector<double> x, std::vector<double>& g) {
        g.assign(k, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            const double x0 = x[j];
            const double h = options.relative_step * (1.0 + std::abs(x0));
            x[j] = x0 + h;
            const double fp = f_safe(x);
            x[j] = x0 - h;
            const double fm = f_safe(x);
            x[j] = x0;
            g[j] = (fp - fm) / (2.0 * h);
        }
        for (double v : g)
            if (!std::isfinite(v)) return false;
        return true;
    };

    MinimizeResult result;
    result.x = start;
    result.value = f_safe(start);
    if (k == 0 || !std::isfinite(result.value)) {
        result.converged = k == 0;
        return result;
    }

    std::vector<double> x = start, g, x_new(k), g_new, d(k), s(k), yv(k);
    double f = result.value;
    if (!gradient(x, g)) return result;
    std::vector<double> Hinv(k * k, 0.0);
    bool identity = true;
    auto reset = [&] {
        identity = true;
        std::fill(Hinv.begin(), Hinv.end(), 0.0);
        for (std::size_t i = 0; i < k; ++i) Hinv[i * k + i] = 1.0;
    };
    reset();
    bool scaled = false;

    for (int it = 0; it < options.max_iterations; ++it) {
        result.iterations = it;
        if (std::sqrt(dot(g, g)) < options.gradient_tolerance) {
            result.converged = true;
            break;
        }
        for (std::size_t i = 0; i < k; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc -= Hinv[i * k + j] * g[j];
            d[i] = acc;
        }
        double gd = dot(g, d);
        if (!(gd < 0.0)) {
            reset();
            for (std::size_t i = 0; i < k; ++i) d[i] = -g[i];
            gd = -dot(g, g);
        }

        double step = 1.0, f_new = kInf;
        bool accepted = false;
        for (int bt = 0; bt < options.max_backtracks; ++bt) {
            for (std::size_t i = 0; i < k; ++i) x_new[i] = x[i] + step * d[i];
            f_new = f_safe(x_new);
            if (f_new <= f + options.armijo * step * gd) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (identity) break;
            // stale curvature: retry from the gradient direction
            reset();
            scaled = false;
            --it;
            continue;
        }

        const bool improved = f_new < f;
        if (!gradient(x_new, g_new)) {
            x = x_new;
            f = f_new;
            break;
        }
        for (std::size_t i = 0; i < k; ++i) {
            s[i] = x_new[i] - x[i];
            yv[i] = g_new[i] - g[i];
        }
        const double sy = dot(s, yv);
        if (sy > 1e-14 * std::sqrt(dot(s, s) * dot(yv, yv))) {
            if (!scaled) {
                const double gamma = sy / dot(yv, yv);
                for (double& h : Hinv) h *= gamma;
                scaled = true;
                identity = false;
            }
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            const double rho = 1.0 / sy;
            identity = false;
            std::vector<double> Hy(k, 0.0);
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j) Hy[i] += Hinv[i * k + j] * yv[j];
            const double yHy = dot(yv, Hy);
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j)
                    Hinv[i * k + j] += -rho * (Hy[i] * s[j] + s[i] * Hy[j]) + (rho * rho * yHy + rho) * s[i] * s[j];
        }
        x = x_new;
        f = f_new;
        g = g_new;
        result.iterations = it + 1;
        if (!improved) break;
    }
    if (f <= result.value) {
        result.x = x;
        result.value = f;
    }
    if (!result.converged) result.converged = std::sqrt(dot(g, g)) < options.gradient_tolerance;
    return result;
}

FitResult refine_constants(const Library& lib, const Expression& expr, const Matrix& X,
                           std::span<const double> y, const BfgsOptions& options)
{
    FitResult out;
    out.expr = expr;
    if (expr.constants.empty()) {
        out.mse = mse(lib, expr, X, y);
        out.converged = true;
        return out;
    }
    Expression work = expr;
    auto objective = [&](std::span<const double> c) {
        work.constants.assign(c.begin(), c.end());
        return mse(lib, work, X, y);
    };
    auto r = bfgs_minimize(objective, expr.constants, options);
    out.expr.constants = r.x;
    out.mse = r.value;
    out.iterations = r.iterations;
    out.converged = r.converged;
    return out;
}

FitResult optimize_constants(const Library& lib, const Expression& expr, const Matrix& X,
                             std::span<const double> y, const BfgsOptions& options)
{
    Expression start = expr;
    start.constants.assign(count_constants(lib, expr.tokens), 1.0);
    return refine_constants(lib, start, X, y, options);
}

}  // namespace deepsr
