#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace deepsr {

enum class TokenKind : std::uint8_t { Binary, Unary, Variable, Constant };

enum class Op : std::uint8_t { Add, Sub, Mul, Div, Sin, Cos, Exp, Log, Var, Const };

struct Token {
    TokenKind kind;
    Op op;
    std::string symbol;
    int var_index = -1;  // column of X for variables, -1 otherwise
};

int arity(const Token& token) noexcept;

/// Builds the operator token named by `symbol` (add, sub, mul, div, sin, cos,
/// exp, log). Throws std::invalid_argument for anything else.
Token make_operator(std::string_view symbol);
Token make_variable(std::string symbol, int column);
Token make_constant();

/// The token vocabulary. Positions in `tokens()` are the indices the policy
/// emits probabilities over.
class Library {
public:
    Library() = default;
    explicit Library(std::vector<Token> tokens);

    /// Operators by symbol, then one variable per name, then optionally the
    /// constant placeholder.
    static Library build(const std::vector<std::string>& operators,
                         const std::vector<std::string>& variables, bool with_constant);
    static const std::vector<std::string>& default_operators();

    std::size_t size() const noexcept { return tokens_.size(); }
    const Token& operator[](std::size_t i) const { return tokens_[i]; }
    const std::vector<Token>& tokens() const noexcept { return tokens_; }
    int arity(int index) const { return arities_[static_cast<std::size_t>(index)]; }

    std::optional<int> index_of(std::string_view symbol) const;
    std::optional<int> constant_index() const noexcept { return const_index_; }
    /// First input-variable token; used to close expressions when length masking is off.
    std::optional<int> first_variable() const noexcept { return first_var_; }
    std::optional<int> find_op(Op op) const;
    int variable_count() const noexcept { return n_vars_; }
    bool has_operators() const noexcept;

private:
    std::vector<Token> tokens_;
    std::vector<int> arities_;
    std::unordered_map<std::string, int> by_symbol_;
    std::optional<int> const_index_;
    std::optional<int> first_var_;
    int n_vars_ = 0;
};

/// Pre-order traversal of library indices plus positional constant values,
/// one per constant placeholder in traversal order.
struct Expression {
    std::vector<int> tokens;
    std::vector<double> constants;

    bool operator==(const Expression&) const = default;
};

/// Row-major n x d matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

struct Dataset {
    Matrix X;
    std::vector<double> y;
    std::vector<std::string> variable_names;

    std::size_t size() const noexcept { return y.size(); }
    /// Throws std::invalid_argument unless n >= 2, X has n rows and y is finite.
    void validate() const;
};

/// Raised for malformed traversals, text or infix input. `position` is a
/// zero-based token or character offset where that makes sense.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// 1 + sum(arity - 1). Zero means complete, k > 0 means k open slots.
/// Throws std::invalid_argument if the counter hits zero before the last token.
int completeness_counter(const Library& lib, std::span<const int> traversal);
bool is_complete(const Library& lib, std::span<const int> traversal);

/// One past the last position of the subtree rooted at `start`.
std::size_t subtree_end(const Library& lib, std::span<const int> traversal, std::size_t start);

/// Explicit tree form; node i corresponds to traversal position i.
struct TreeNode {
    int token = -1;
    int parent = -1;
    std::vector<int> children;
};
std::vector<TreeNode> build_tree(const Library& lib, std::span<const int> traversal);
/// Re-emits the tokens in pre-order.
std::vector<int> preorder(const std::vector<TreeNode>& tree);

std::size_t complexity(const Expression& expr) noexcept;
std::size_t count_constants(const Library& lib, std::span<const int> traversal);

namespace protected_ops {
inline constexpr double kDivEpsilon = 1e-12;
inline constexpr double kLogEpsilon = 1e-12;
inline constexpr double kExpLimit = 700.0;

double add(double a, double b) noexcept;
double sub(double a, double b) noexcept;
double mul(double a, double b) noexcept;
double div(double a, double b) noexcept;
double sin(double a) noexcept;
double cos(double a) noexcept;
double exp(double a) noexcept;
double log(double a) noexcept;
}  // namespace protected_ops

/// Evaluates every row of X. Throws std::invalid_argument if the expression is
/// incomplete, its constant count is wrong, or it reads a column X lacks.
std::vector<double> evaluate(const Library& lib, const Expression& expr, const Matrix& X);

std::string render_infix(const Library& lib, const Expression& expr);

/// "div sin mul const x1 log x2 ; 1.5"
std::string serialize(const Library& lib, const Expression& expr);
Expression parse_serialized(const Library& lib, std::string_view text);

}  // namespace deepsr
