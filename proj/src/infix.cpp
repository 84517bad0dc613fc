#include "deepsr/infix.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>

#include <fmt/format.h>

namespace deepsr {

namespace {

class Parser {
public:
    explicit Parser(std::string_view text) : s_(text) {}

    InfixNode parse()
    {
        auto node = expr();
        skip();
        if (pos_ != s_.size()) fail(fmt::format("unexpected '{}'", s_[pos_]));
        return node;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const
    {
        throw ParseError(fmt::format("{} at column {}", msg, pos_ + 1), pos_);
    }

    void skip()
    {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c)
    {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    static InfixNode binary(char op, InfixNode a, InfixNode b)
    {
        InfixNode n;
        n.kind = InfixNode::Kind::Binary;
        n.op = op;
        n.children.push_back(std::move(a));
        n.children.push_back(std::move(b));
        return n;
    }

    InfixNode expr()
    {
        auto left = term();
        for (;;) {
            if (accept('+')) left = binary('+', std::move(left), term());
            else if (accept('-')) left = binary('-', std::move(left), term());
            else return left;
        }
    }

    InfixNode term()
    {
        auto left = factor();
        for (;;) {
            if (accept('*')) left = binary('*', std::move(left), factor());
            else if (accept('/')) left = binary('/', std::move(left), factor());
            else return left;
        }
    }

    // Unary minus binds looser than '^', so -x^2 is -(x^2).
    InfixNode factor()
    {
        if (accept('-')) {
            InfixNode n;
            n.kind = InfixNode::Kind::Negate;
            n.children.push_back(factor());
            return n;
        }
        auto base = primary();
        if (accept('^')) return binary('^', std::move(base), factor());
        return base;
    }

    InfixNode primary()
    {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            auto inner = expr();
            if (!accept(')')) fail("expected ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
            if (ec != std::errc()) fail("malformed number");
            pos_ = static_cast<std::size_t>(ptr - s_.data());
            InfixNode n;
            n.value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < s_.size()
                   && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                ++pos_;
            InfixNode n;
            n.name = std::string(s_.substr(start, pos_ - start));
            if (accept('(')) {
                n.kind = InfixNode::Kind::Call;
                n.children.push_back(expr());
                if (!accept(')')) fail("expected ')'");
            } else {
                n.kind = InfixNode::Kind::Variable;
            }
            return n;
        }
        fail(fmt::format("unexpected '{}'", c));
    }
};

}  // namespace

InfixNode parse_infix(std::string_view text) { return Parser(text).parse(); }

double evaluate_infix(const InfixNode& node, const std::vector<std::string>& variables,
                      std::span<const double> point)
{
    using K = InfixNode::Kind;
    switch (node.kind) {
    case K::Number: return node.value;
    case K::Variable:
        for (std::size_t i = 0; i < variables.size(); ++i)
            if (variables[i] == node.name) return point[i];
        throw std::invalid_argument(fmt::format("unbound variable '{}'", node.name));
    case K::Negate: return -evaluate_infix(node.children[0], variables, point);
    case K::Call: {
        const double a = evaluate_infix(node.children[0], variables, point);
        if (node.name == "sin") return std::sin(a);
        if (node.name == "cos") return std::cos(a);
        if (node.name == "exp") return std::exp(a);
        if (node.name == "log") return std::log(a);
        if (node.name == "sqrt") return std::sqrt(a);
        throw std::invalid_argument(fmt::format("unknown function '{}'", node.name));
    }
    case K::Binary: {
        const double a = evaluate_infix(node.children[0], variables, point);
        const double b = evaluate_infix(node.children[1], variables, point);
        switch (node.op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        case '/': return a / b;
        case '^': return std::pow(a, b);
        }
    }
    }
    throw std::logic_error("malformed infix node");
}

namespace {

struct Lowering {
    const Library& lib;
    Expression out;

    int require(std::string_view symbol)
    {
        auto idx = lib.index_of(symbol);
        if (!idx) throw ParseError(fmt::format("'{}' is not in the library", symbol), out.tokens.size());
        return *idx;
    }

    void constant(double v)
    {
        auto c = lib.constant_index();
        if (!c) throw ParseError(fmt::format("literal {} needs a constant token in the library", v),
                                 out.tokens.size());
        out.tokens.push_back(*c);
        out.constants.push_back(v);
    }

    void lower(const InfixNode& n)
    {
        using K = InfixNode::Kind;
        switch (n.kind) {
        case K::Number: constant(n.value); return;
        case K::Variable: {
            const int idx = require(n.name);
            if (lib[static_cast<std::size_t>(idx)].kind != TokenKind::Variable)
                throw ParseError(fmt::format("'{}' is not a variable", n.name), out.tokens.size());
            out.tokens.push_back(idx);
            return;
        }
        case K::Negate:
            if (n.children[0].kind == K::Number) {
                constant(-n.children[0].value);
                return;
            }
            throw ParseError("negation of a non-literal is not expressible", out.tokens.size());
        case K::Call: {
            const int idx = require(n.name);
            if (lib.arity(idx) != 1)
                throw ParseError(fmt::format("'{}' is not a unary operator", n.name), out.tokens.size());
            out.tokens.push_back(idx);
            lower(n.children[0]);
            return;
        }
        case K::Binary: {
            if (n.op == '^') {
                const auto& e = n.children[1];
                const bool small_int = e.kind == K::Number && e.value >= 1 && e.value <= 16
                                       && std::floor(e.value) == e.value;
                if (!small_int)
                    throw ParseError("only small positive integer powers are expressible", out.tokens.size());
                const int mul = require("mul");
                const int k = static_cast<int>(e.value);
                for (int i = 1; i < k; ++i) out.tokens.push_back(mul);
                for (int i = 0; i < k; ++i) lower(n.children[0]);
                return;
            }
            const char* sym = n.op == '+' ? "add" : n.op == '-' ? "sub" : n.op == '*' ? "mul" : "div";
            out.tokens.push_back(require(sym));
            lower(n.children[0]);
            lower(n.children[1]);
            return;
        }
        }
    }
};

}  // namespace

Expression to_expression(const InfixNode& node, const Library& lib)
{
    Lowering l{lib, {}};
    l.lower(node);
    return std::move(l.out);
}

Expression parse_expression(const Library& lib, std::string_view text)
{
    if (text.find_first_of("()+*/^") == std::string_view::npos) {
        // Bare words: pre-order form, unless it is a lone infix term like "x - 1".
        bool infix_minus = text.find(" - ") != std::string_view::npos;
        if (!infix_minus) return parse_serialized(lib, text);
    }
    return to_expression(parse_infix(text), lib);
}

}  // namespace deepsr
