#include <doctest.h>

#include <cmath>
#include <numeric>

#include "deepsr/trainer.hpp"

using namespace deepsr;

namespace {

Dataset line_data(std::uint64_t seed, std::size_t n = 20)
{
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Dataset d;
    d.X = Matrix(n, 1);
    d.variable_names = {"x"};
    for (std::size_t i = 0; i < n; ++i) {
        d.X(i, 0) = u(rng);
        d.y.push_back(2.0 * d.X(i, 0));
    }
    return d;
}

}  // namespace

TEST_CASE("nrmse examples")
{
    const std::vector<double> y{0.0, 2.0};
    CHECK(nrmse(y, y) == 0.0);
    CHECK(nrmse(y, std::vector<double>{1.0, 1.0}) == 1.0);
    const std::vector<double> z{1.0, 4.0, -2.0, 0.5};
    const double mean = (1.0 + 4.0 - 2.0 + 0.5) / 4.0;
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean) / 4.0;
    std::vector<double> shifted;
    for (double v : z) shifted.push_back(v + std::sqrt(var));
    CHECK(nrmse(z, shifted) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(nrmse(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(nrmse(std::vector<double>{1.0}, std::vector<double>{1.0}), std::invalid_argument);
    CHECK_THROWS_AS(nrmse(y, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("reward examples")
{
    const auto lib = Library::build(Library::default_operators(), {"x"}, false);
    Matrix X(2, 1);
    X(0, 0) = 0.0;
    X(1, 0) = 2.0;
    const std::vector<double> y{0.0, 2.0};
    CHECK(reward(lib, parse_serialized(lib, "x"), X, y) == 1.0);
    // x / x is 1 everywhere (protected at 0): nrmse 1
    const auto one = parse_serialized(lib, "div x x");
    CHECK(reward(lib, one, X, y) == 0.5);
    const auto seven = parse_serialized(lib, "add sub div x x x x");
    Matrix Xs(2, 1);
    Xs(0, 0) = 1.0;
    Xs(1, 0) = 1.0;
    // evaluates to 1 on both points against y = {0, 2}
    CHECK(reward(lib, seven, Xs, y, 0.01) == doctest::Approx(0.43).epsilon(1e-14));
    CHECK(squash(1.0) == 0.5);
}

TEST_CASE("risk filter cases")
{
    std::vector<double> r;
    for (int i = 1; i <= 10; ++i) r.push_back(i / 10.0);
    auto s = risk_filter(r, 0.1);
    CHECK(s.selected == std::vector<std::size_t>{9});
    CHECK(s.threshold == 1.0);
    CHECK(risk_filter(r, 1.0).selected.size() == 10);
    const std::vector<double> same(7, 0.3);
    CHECK(risk_filter(same, 0.05).selected.size() == 7);
    CHECK_THROWS_AS(risk_filter(std::vector<double>{}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(risk_filter(r, 0.0), std::invalid_argument);
    // 1000 distinct rewards, eps 0.05: index ceil(0.95 * 999) = 950 and the top 50 survive
    std::vector<double> big(1000);
    std::iota(big.begin(), big.end(), 0.0);
    CHECK(risk_filter(big, 0.05).selected.size() == 50);
}

TEST_CASE("baseline examples")
{
    const std::vector<double> m{0.6, 1.0};
    CHECK(update_baseline(0.0, m, 0.5) == doctest::Approx(0.4));
    CHECK(update_baseline(0.37, m, 0.0) == 0.37);
    CHECK(update_baseline(0.37, m, 1.0) == 0.8);
    CHECK_THROWS_AS(update_baseline(0.0, std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST_CASE("config validation")
{
    TrainConfig c;
    CHECK(c.learning_rate == 0.0003);
    CHECK(c.baseline_beta == 0.5);
    CHECK(c.complexity_coef == 0.0);
    CHECK(c.entropy_coef == 0.08);
    CHECK(c.risk_eps == 0.1);
    CHECK(c.batch_size == 1000);
    CHECK(c.iterations == 1000);
    CHECK(c.optimizer == Optimizer::GradientAscent);
    CHECK_NOTHROW(c.validate());
    c.risk_eps = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.risk_eps = 0.1;
    c.baseline_beta = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.baseline_beta = 0.5;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("tiny space finds add x x")
{
    const auto lib = Library::build({"add"}, {"x"}, false);
    TrainConfig c;
    c.batch_size = 100;
    c.iterations = 10;
    c.seed = 3;
    const auto r = train(c, lib, line_data(1));
    REQUIRE(r.best.has_value());
    CHECK(r.best_reward == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.history.size() == 10);
    CHECK(complexity(*r.best) >= 3);
}

TEST_CASE("history invariants and determinism")
{
    const auto lib = Library::build(Library::default_operators(), {"x"}, false);
    auto d = line_data(2);
    for (std::size_t i = 0; i < d.y.size(); ++i) d.y[i] = std::sin(d.X(i, 0)) + d.X(i, 0) * d.X(i, 0);
    TrainConfig c;
    c.batch_size = 50;
    c.iterations = 8;
    c.seed = 9;
    const auto a = train(c, lib, d);
    REQUIRE(a.history.size() == 8);
    for (std::size_t i = 1; i < a.history.size(); ++i) CHECK(a.history[i].best_reward >= a.history[i - 1].best_reward);
    for (const auto& h : a.history) {
        CHECK(h.threshold >= 0.0);
        CHECK(h.threshold <= h.best_reward);
        CHECK(std::isfinite(h.baseline));
    }
    const auto b = train(c, lib, d);
    CHECK(a.policy == b.policy);
    CHECK(*a.best == *b.best);
    c.threads = 3;
    const auto t = train(c, lib, d);
    CHECK(a.policy == t.policy);
}

TEST_CASE("zero iterations and stopping")
{
    const auto lib = Library::build({"add"}, {"x"}, false);
    TrainConfig c;
    c.iterations = 0;
    const auto r = train(c, lib, line_data(1));
    CHECK_FALSE(r.best.has_value());
    CHECK(r.history.empty());
    CHECK(std::isinf(r.best_reward));

    c.iterations = 50;
    c.batch_size = 100;
    c.stop_reward = 1.0 - 1e-12;
    const auto s = train(c, lib, line_data(1));
    CHECK(s.history.size() < 50);
    CHECK(s.best_reward >= 1.0 - 1e-12);
}

TEST_CASE("vanilla REINFORCE configuration runs")
{
    const auto lib = Library::build(Library::default_operators(), {"x"}, false);
    TrainConfig c;
    c.batch_size = 40;
    c.iterations = 4;
    c.risk_eps = 1.0;
    c.baseline_beta = 0.0;
    c.entropy_coef = 0.0;
    c.input_mode = InputMode::PreviousToken;
    c.constraints = ConstraintSet::none();
    const auto r = train(c, lib, line_data(5));
    CHECK(r.history.size() == 4);
    for (const auto& h : r.history) CHECK(h.baseline == 0.0);
    REQUIRE(r.best.has_value());
    CHECK(complexity(*r.best) <= 2 * static_cast<std::size_t>(c.constraints.max_length) + 1);
}

TEST_CASE("constant targets are rejected")
{
    const auto lib = Library::build({"add"}, {"x"}, false);
    auto d = line_data(1);
    std::fill(d.y.begin(), d.y.end(), 4.0);
    CHECK_THROWS_AS(train(TrainConfig{}, lib, d), std::invalid_argument);
}
