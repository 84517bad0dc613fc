#include "deepsr/expression.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

namespace deepsr {

int arity(const Token& token) noexcept
{
    switch (token.kind) {
    case TokenKind::Binary: return 2;
    case TokenKind::Unary: return 1;
    default: return 0;
    }
}

Token make_operator(std::string_view symbol)
{
    struct Entry {
        std::string_view name;
        Op op;
        TokenKind kind;
    };
    static constexpr Entry table[] = {
        {"add", Op::Add, TokenKind::Binary}, {"sub", Op::Sub, TokenKind::Binary},
        {"mul", Op::Mul, TokenKind::Binary}, {"div", Op::Div, TokenKind::Binary},
        {"sin", Op::Sin, TokenKind::Unary},  {"cos", Op::Cos, TokenKind::Unary},
        {"exp", Op::Exp, TokenKind::Unary},  {"log", Op::Log, TokenKind::Unary},
    };
    for (const auto& e : table) {
        if (e.name == symbol) return Token{e.kind, e.op, std::string(e.name)};
    }
    throw std::invalid_argument(fmt::format("unknown operator '{}'", symbol));
}

Token make_variable(std::string symbol, int column)
{
    return Token{TokenKind::Variable, Op::Var, std::move(symbol), column};
}

Token make_constant() { return Token{TokenKind::Constant, Op::Const, "const"}; }

Library::Library(std::vector<Token> tokens) : tokens_(std::move(tokens))
{
    bool has_terminal = false;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        const auto& t = tokens_[i];
        const int idx = static_cast<int>(i);
        if (!by_symbol_.emplace(t.symbol, idx).second)
            throw std::invalid_argument(fmt::format("duplicate symbol '{}' in library", t.symbol));
        arities_.push_back(deepsr::arity(t));
        if (t.kind == TokenKind::Variable) {
            if (!first_var_) first_var_ = idx;
            n_vars_ = std::max(n_vars_, t.var_index + 1);
        }
        if (t.kind == TokenKind::Constant) const_index_ = idx;
        has_terminal = has_terminal || deepsr::arity(t) == 0;
    }
    if (!has_terminal) throw std::invalid_argument("library has no terminal token");
}

Library Library::build(const std::vector<std::string>& operators,
                       const std::vector<std::string>& variables, bool with_constant)
{
    std::vector<Token> tokens;
    for (const auto& op : operators) tokens.push_back(make_operator(op));
    for (std::size_t i = 0; i < variables.size(); ++i)
        tokens.push_back(make_variable(variables[i], static_cast<int>(i)));
    if (with_constant) tokens.push_back(make_constant());
    return Library(std::move(tokens));
}

const std::vector<std::string>& Library::default_operators()
{
    static const std::vector<std::string> ops = {"add", "sub", "mul", "div",
                                                 "sin", "cos", "exp", "log"};
    return ops;
}

std::optional<int> Library::index_of(std::string_view symbol) const
{
    auto it = by_symbol_.find(std::string(symbol));
    if (it == by_symbol_.end()) return std::nullopt;
    return it->second;
}

std::optional<int> Library::find_op(Op op) const
{
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        if (tokens_[i].op == op) return static_cast<int>(i);
    return std::nullopt;
}

bool Library::has_operators() const noexcept
{
    return std::any_of(arities_.begin(), arities_.end(), [](int a) { return a > 0; });
}

void Dataset::validate() const
{
    if (y.size() < 2) throw std::invalid_argument("dataset needs at least two rows");
    if (X.rows != y.size())
        throw std::invalid_argument(
            fmt::format("X has {} rows but y has {} entries", X.rows, y.size()));
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("dataset target contains non-finite values");
}

int completeness_counter(const Library& lib, std::span<const int> traversal)
{
    int counter = 1;
    for (std::size_t i = 0; i < traversal.size(); ++i) {
        if (counter == 0)
            throw std::invalid_argument(
                fmt::format("traversal continues after completion at position {}", i));
        counter += lib.arity(traversal[i]) - 1;
    }
    return counter;
}

bool is_complete(const Library& lib, std::span<const int> traversal)
{
    return !traversal.empty() && completeness_counter(lib, traversal) == 0;
}

std::size_t subtree_end(const Library& lib, std::span<const int> traversal, std::size_t start)
{
    int open = 1;
    std::size_t i = start;
    while (open > 0) {
        if (i >= traversal.size()) throw std::invalid_argument("incomplete subtree");
        open += lib.arity(traversal[i]) - 1;
        ++i;
    }
    return i;
}

std::vector<TreeNode> build_tree(const Library& lib, std::span<const int> traversal)
{
    if (!is_complete(lib, traversal)) throw std::invalid_argument("cannot build tree from incomplete traversal");
    std::vector<TreeNode> nodes(traversal.size());
    std::vector<int> open;  // nodes still missing children
    for (std::size_t i = 0; i < traversal.size(); ++i) {
        auto& node = nodes[i];
        node.token = traversal[i];
        if (!open.empty()) {
            const int p = open.back();
            node.parent = p;
            nodes[static_cast<std::size_t>(p)].children.push_back(static_cast<int>(i));
            if (static_cast<int>(nodes[static_cast<std::size_t>(p)].children.size())
                == lib.arity(nodes[static_cast<std::size_t>(p)].token))
                open.pop_back();
        }
        if (lib.arity(node.token) > 0) open.push_back(static_cast<int>(i));
    }
    return nodes;
}

std::vector<int> preorder(const std::vector<TreeNode>& tree)
{
    std::vector<int> out;
    if (tree.empty()) return out;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const int n = stack.back();
        stack.pop_back();
        out.push_back(tree[static_cast<std::size_t>(n)].token);
        const auto& ch = tree[static_cast<std::size_t>(n)].children;
        for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    return out;
}

std::size_t complexity(const Expression& expr) noexcept { return expr.tokens.size(); }

std::size_t count_constants(const Library& lib, std::span<const int> traversal)
{
    const auto c = lib.constant_index();
    if (!c) return 0;
    return static_cast<std::size_t>(std::count(traversal.begin(), traversal.end(), *c));
}

namespace protected_ops {

namespace {
inline double finite_or_one(double v) noexcept { return std::isfinite(v) ? v : 1.0; }
}  // namespace

double add(double a, double b) noexcept { return finite_or_one(a + b); }
double sub(double a, double b) noexcept { return finite_or_one(a - b); }
double mul(double a, double b) noexcept { return finite_or_one(a * b); }
double div(double a, double b) noexcept
{
    if (std::abs(b) < kDivEpsilon) return 1.0;
    return finite_or_one(a / b);
}
double sin(double a) noexcept { return std::sin(a); }
double cos(double a) noexcept { return std::cos(a); }
double exp(double a) noexcept { return a > kExpLimit ? 1.0 : std::exp(a); }
double log(double a) noexcept
{
    const double m = std::abs(a);
    return m < kLogEpsilon ? 1.0 : std::log(m);
}

}  // namespace protected_ops

namespace {

void check_evaluable(const Library& lib, const Expression& expr, std::size_t columns)
{
    if (!is_complete(lib, expr.tokens)) throw std::invalid_argument("cannot evaluate incomplete traversal");
    if (count_constants(lib, expr.tokens) != expr.constants.size())
        throw std::invalid_argument(fmt::format("expression has {} constant slots but {} values",
                                                count_constants(lib, expr.tokens), expr.constants.size()));
    for (int t : expr.tokens) {
        const auto& tok = lib[static_cast<std::size_t>(t)];
        if (tok.kind == TokenKind::Variable && static_cast<std::size_t>(tok.var_index) >= columns)
            throw std::invalid_argument(
                fmt::format("variable '{}' reads column {} but X has {} columns", tok.symbol,
                            tok.var_index, columns));
    }
}

}  // namespace

std::vector<double> evaluate(const Library& lib, const Expression& expr, const Matrix& X)
{
    check_evaluable(lib, expr, X.cols);
    const std::size_t n = X.rows;
    const std::size_t T = expr.tokens.size();

    // Reverse pre-order walk with a stack of column buffers; the top of the
    // stack is always the leftmost pending child.
    std::vector<double> buffer(T * n);
    std::size_t depth = 0;
    std::size_t next_const = expr.constants.size();
    auto slot = [&](std::size_t k) { return buffer.data() + k * n; };

    for (std::size_t pos = T; pos-- > 0;) {
        const auto& tok = lib[static_cast<std::size_t>(expr.tokens[pos])];
        switch (tok.kind) {
        case TokenKind::Variable: {
            double* out = slot(depth++);
            const auto col = static_cast<std::size_t>(tok.var_index);
            for (std::size_t r = 0; r < n; ++r) out[r] = X(r, col);
            break;
        }
        case TokenKind::Constant: {
            double* out = slot(depth++);
            std::fill(out, out + n, expr.constants[--next_const]);
            break;
        }
        case TokenKind::Unary: {
            double* a = slot(depth - 1);
            switch (tok.op) {
            case Op::Sin: for (std::size_t r = 0; r < n; ++r) a[r] = protected_ops::sin(a[r]); break;
            case Op::Cos: for (std::size_t r = 0; r < n; ++r) a[r] = protected_ops::cos(a[r]); break;
            case Op::Exp: for (std::size_t r = 0; r < n; ++r) a[r] = protected_ops::exp(a[r]); break;
            case Op::Log: for (std::size_t r = 0; r < n; ++r) a[r] = protected_ops::log(a[r]); break;
            default: throw std::logic_error("bad unary op");
            }
            break;
        }
        case TokenKind::Binary: {
            double* left = slot(depth - 1);
            const double* right = slot(depth - 2);
            double* out = slot(depth - 2);
            switch (tok.op) {
            case Op::Add: for (std::size_t r = 0; r < n; ++r) out[r] = protected_ops::add(left[r], right[r]); break;
            case Op::Sub: for (std::size_t r = 0; r < n; ++r) out[r] = protected_ops::sub(left[r], right[r]); break;
            case Op::Mul: for (std::size_t r = 0; r < n; ++r) out[r] = protected_ops::mul(left[r], right[r]); break;
            case Op::Div: for (std::size_t r = 0; r < n; ++r) out[r] = protected_ops::div(left[r], right[r]); break;
            default: throw std::logic_error("bad binary op");
            }
            --depth;
            break;
        }
        }
    }
    return {buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(n)};
}

namespace {

std::string infix_op(Op op)
{
    switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Div: return "/";
    default: return "?";
    }
}

struct InfixWriter {
    const Library& lib;
    const Expression& expr;
    std::size_t pos = 0;
    std::size_t next_const = 0;

    std::string write()
    {
        const auto& tok = lib[static_cast<std::size_t>(expr.tokens[pos++])];
        switch (tok.kind) {
        case TokenKind::Variable: return tok.symbol;
        case TokenKind::Constant: return fmt::format("{:.6g}", expr.constants[next_const++]);
        case TokenKind::Unary: return fmt::format("{}({})", tok.symbol, write());
        case TokenKind::Binary: {
            auto left = write();
            auto right = write();
            return fmt::format("({} {} {})", left, infix_op(tok.op), right);
        }
        }
        return {};
    }
};

}  // namespace

std::string render_infix(const Library& lib, const Expression& expr)
{
    check_evaluable(lib, expr, static_cast<std::size_t>(lib.variable_count()));
    InfixWriter w{lib, expr};
    return w.write();
}

std::string serialize(const Library& lib, const Expression& expr)
{
    std::string out;
    for (std::size_t i = 0; i < expr.tokens.size(); ++i) {
        if (i) out += ' ';
        out += lib[static_cast<std::size_t>(expr.tokens[i])].symbol;
    }
    for (double c : expr.constants) out += fmt::format(" ; {}", c);
    return out;
}

Expression parse_serialized(const Library& lib, std::string_view text)
{
    Expression expr;
    const auto semi = text.find(';');
    std::istringstream head(std::string(text.substr(0, semi)));
    std::string word;
    std::size_t index = 0;
    while (head >> word) {
        auto idx = lib.index_of(word);
        if (!idx) throw ParseError(fmt::format("unknown token '{}' at position {}", word, index), index);
        expr.tokens.push_back(*idx);
        ++index;
    }
    if (expr.tokens.empty()) throw ParseError("empty traversal", 0);
    if (semi != std::string_view::npos) {
        std::string rest(text.substr(semi + 1));
        std::replace(rest.begin(), rest.end(), ';', ' ');
        std::istringstream tail(rest);
        while (tail >> word) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), v);
            if (ec != std::errc() || ptr != word.data() + word.size())
                throw ParseError(fmt::format("bad constant '{}'", word), index);
            expr.constants.push_back(v);
            ++index;
        }
    }
    int counter = 1;
    for (std::size_t i = 0; i < expr.tokens.size(); ++i) {
        if (counter == 0)
            throw ParseError(fmt::format("token '{}' at position {} follows a complete expression",
                                         lib[static_cast<std::size_t>(expr.tokens[i])].symbol, i),
                             i);
        counter += lib.arity(expr.tokens[i]) - 1;
    }
    if (counter != 0)
        throw ParseError(fmt::format("incomplete traversal: {} open slot(s)", counter), expr.tokens.size());
    const auto nc = count_constants(lib, expr.tokens);
    if (expr.constants.empty() && nc > 0) expr.constants.assign(nc, 1.0);
    if (expr.constants.size() != nc)
        throw ParseError(fmt::format("expected {} constant value(s), got {}", nc, expr.constants.size()),
                         expr.tokens.size());
    return expr;
}

}  // namespace deepsr
