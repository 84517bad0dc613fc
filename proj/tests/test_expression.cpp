#include <doctest.h>

#include <cmath>
#include <limits>

#include "deepsr/expression.hpp"
#include "deepsr/random.hpp"
#include "oracles.hpp"

using namespace deepsr;

namespace {

Library fig1_library() { return Library::build(Library::default_operators(), {"x", "y"}, true); }

std::vector<int> tokens(const Library& lib, std::initializer_list<const char*> symbols)
{
    std::vector<int> out;
    for (const char* s : symbols) out.push_back(*lib.index_of(s));
    return out;
}

Matrix column(std::initializer_list<double> values)
{
    Matrix X(values.size(), 1);
    std::size_t r = 0;
    for (double v : values) X(r++, 0) = v;
    return X;
}

}  // namespace

TEST_CASE("arity by token kind")
{
    CHECK(arity(make_operator("mul")) == 2);
    CHECK(arity(make_operator("sin")) == 1);
    CHECK(arity(make_variable("x1", 0)) == 0);
    CHECK(arity(make_constant()) == 0);
    CHECK_THROWS_AS(make_operator("sqrt"), std::invalid_argument);
}

TEST_CASE("library validation")
{
    CHECK_THROWS_AS(Library({make_operator("add"), make_operator("add"), make_variable("x", 0)}),
                    std::invalid_argument);
    CHECK_THROWS_AS(Library({make_operator("add"), make_operator("sin")}), std::invalid_argument);
    const auto lib = fig1_library();
    CHECK(lib.size() == 11);
    for (std::size_t i = 0; i < lib.size(); ++i) CHECK(*lib.index_of(lib[i].symbol) == static_cast<int>(i));
    CHECK(lib.constant_index().has_value());
    CHECK(*lib.first_variable() == *lib.index_of("x"));
}

TEST_CASE("completeness counter")
{
    const auto lib = fig1_library();
    const auto fig1 = tokens(lib, {"div", "sin", "mul", "const", "x", "log", "y"});
    const int trace[] = {2, 2, 3, 2, 1, 1, 0};
    for (std::size_t k = 1; k <= fig1.size(); ++k)
        CHECK(completeness_counter(lib, std::span<const int>(fig1.data(), k)) == trace[k - 1]);
    CHECK(completeness_counter(lib, std::span<const int>{}) == 1);
    CHECK(completeness_counter(lib, tokens(lib, {"div", "sin"})) == 2);
    CHECK_THROWS_AS(completeness_counter(lib, tokens(lib, {"x", "x"})), std::invalid_argument);
    CHECK(is_complete(lib, fig1));
}

TEST_CASE("protected evaluation examples")
{
    const auto lib = fig1_library();
    auto eval1 = [&](std::initializer_list<const char*> t, double x) {
        return evaluate(lib, Expression{tokens(lib, t), {}}, column({x}))[0];
    };
    CHECK(eval1({"log", "x"}, -2.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(eval1({"div", "x", "x"}, 0.0) == 1.0);
    CHECK(eval1({"log", "x"}, 0.0) == 1.0);
    CHECK(eval1({"exp", "x"}, 701.0) == 1.0);
    CHECK(eval1({"exp", "x"}, 700.0) == std::exp(700.0));
    CHECK(eval1({"div", "x", "x"}, 1e-13) == 1.0);
    // x^3 + x^2 + x at x = 1
    CHECK(eval1({"add", "add", "mul", "mul", "x", "x", "x", "mul", "x", "x", "x"}, 1.0) == 3.0);
    // overflow in plain arithmetic is also caught
    CHECK(std::isfinite(eval1({"mul", "exp", "x", "exp", "x"}, 600.0)));
}

TEST_CASE("evaluation errors")
{
    const auto lib = fig1_library();
    CHECK_THROWS_AS(evaluate(lib, Expression{tokens(lib, {"add", "x"}), {}}, column({1.0})),
                    std::invalid_argument);
    CHECK_THROWS_AS(evaluate(lib, Expression{tokens(lib, {"add", "x", "y"}), {}}, column({1.0})),
                    std::invalid_argument);
    CHECK_THROWS_AS(evaluate(lib, Expression{tokens(lib, {"mul", "const", "x"}), {}}, column({1.0})),
                    std::invalid_argument);
}

TEST_CASE("complexity and constant counts")
{
    const auto lib = fig1_library();
    const auto fig1 = tokens(lib, {"div", "sin", "mul", "const", "x", "log", "y"});
    CHECK(complexity(Expression{fig1, {1.0}}) == 7);
    CHECK(complexity(Expression{tokens(lib, {"x"}), {}}) == 1);
    CHECK(complexity(Expression{tokens(lib, {"add", "add", "mul", "mul", "x", "x", "x", "mul", "x", "x", "x"}), {}})
          == 11);
    CHECK(count_constants(lib, fig1) == 1);
    CHECK(count_constants(lib, tokens(lib, {"add", "x", "x"})) == 0);
    CHECK(count_constants(lib, tokens(lib, {"add", "const", "const"})) == 2);
}

TEST_CASE("infix rendering")
{
    const auto lib = fig1_library();
    CHECK(render_infix(lib, Expression{tokens(lib, {"add", "x", "x"}), {}}) == "(x + x)");
    CHECK(render_infix(lib, Expression{tokens(lib, {"div", "sin", "mul", "const", "x", "log", "y"}), {1.5}})
          == "(sin((1.5 * x)) / log(y))");
    CHECK(render_infix(lib, Expression{tokens(lib, {"exp", "mul", "y", "log", "x"}), {}}) == "exp((y * log(x)))");
    CHECK(render_infix(lib, Expression{tokens(lib, {"mul", "const", "x"}), {3.14159265}}) == "(3.14159 * x)");
}

TEST_CASE("serialized text round trip")
{
    const auto lib = fig1_library();
    const Expression e{tokens(lib, {"div", "sin", "mul", "const", "x", "log", "y"}), {1.5}};
    CHECK(serialize(lib, e) == "div sin mul const x log y ; 1.5");
    CHECK(parse_serialized(lib, "div sin mul const x log y ; 1.5") == e);
    const Expression two{tokens(lib, {"add", "mul", "const", "x", "const"}), {0.1, -2.75e-300}};
    CHECK(parse_serialized(lib, serialize(lib, two)) == two);
    // constants may be omitted and default to one
    CHECK(parse_serialized(lib, "mul const x").constants == std::vector<double>{1.0});
}

TEST_CASE("serialized parse errors name the offending symbol")
{
    const auto lib = fig1_library();
    try {
        parse_serialized(lib, "add x blah");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("blah") != std::string::npos);
        CHECK(e.position() == 2);
    }
    CHECK_THROWS_AS(parse_serialized(lib, "add x"), ParseError);
    CHECK_THROWS_AS(parse_serialized(lib, "x x"), ParseError);
    CHECK_THROWS_AS(parse_serialized(lib, "mul const x ; 1 ; 2"), ParseError);
    CHECK_THROWS_AS(parse_serialized(lib, "mul const x ; abc"), ParseError);
}

TEST_CASE("tree round trip and prefix safety on random traversals")
{
    const auto lib = fig1_library();
    Rng rng(42);
    for (int n = 0; n < 2000; ++n) {
        const auto t = oracle::random_traversal(lib, rng, 30);
        const auto tree = build_tree(lib, t);
        REQUIRE(tree.size() == t.size());
        CHECK(preorder(tree) == t);
        for (std::size_t k = 0; k < t.size(); ++k)
            CHECK(completeness_counter(lib, std::span<const int>(t.data(), k)) > 0);
        CHECK(completeness_counter(lib, t) == 0);
        CHECK(subtree_end(lib, t, 0) == t.size());
    }
}

TEST_CASE("evaluation matches an independent tree interpreter")
{
    const auto lib = fig1_library();
    Rng rng(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    Matrix X(25, 2);
    int compared = 0;
    while (compared < 100) {
        // depth <= 3 means at most 15 nodes for binary trees
        const auto t = oracle::random_traversal(lib, rng, 15);
        const auto root = oracle::tree(lib, t);
        std::function<int(const oracle::Node&)> depth = [&](const oracle::Node& n) {
            int d = 0;
            for (const auto& k : n.kids) d = std::max(d, 1 + depth(*k));
            return d;
        };
        if (depth(*root) > 3) continue;
        Expression e{t, {}};
        for (std::size_t i = 0; i < count_constants(lib, t); ++i) e.constants.push_back(u(rng));
        for (double& v : X.data) v = u(rng);
        const auto got = evaluate(lib, e, X);
        for (std::size_t r = 0; r < X.rows; ++r) {
            const double want = oracle::interpret(lib, *root, e.constants, X.row(r));
            CHECK(std::fabs(got[r] - want) <= 1e-12 * std::max(1.0, std::fabs(want)));
        }
        ++compared;
    }
}

TEST_CASE("dataset validation")
{
    Dataset d;
    d.X = column({1.0, 2.0});
    d.y = {1.0, 2.0};
    CHECK_NOTHROW(d.validate());
    d.y = {1.0};
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.y = {1.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}
