#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepsr/expression.hpp"

namespace deepsr {

/// Syntax tree for the small infix grammar used for ground-truth formulas and
/// for user input:
///
///   expr    := term (('+' | '-') term)*
///   term    := factor (('*' | '/') factor)*
///   factor  := '-' factor | primary ('^' factor)?
///   primary := number | name | name '(' expr ')' | '(' expr ')'
struct InfixNode {
    enum class Kind { Number, Variable, Call, Binary, Negate };

    Kind kind = Kind::Number;
    double value = 0.0;
    std::string name;  // variable or function name
    char op = 0;       // + - * / ^ for Binary
    std::vector<InfixNode> children;
};

InfixNode parse_infix(std::string_view text);

/// Plain (unprotected) evaluation; supports sqrt and pow on top of the search
/// operators. `variables` lists the names bound to `point` by position.
double evaluate_infix(const InfixNode& node, const std::vector<std::string>& variables,
                      std::span<const double> point);

/// Lowers an infix tree to a search expression over `lib`. Numbers become
/// constant placeholders carrying their value and small positive integer
/// powers expand into products. Throws ParseError for constructs the library
/// cannot express.
Expression to_expression(const InfixNode& node, const Library& lib);

/// Accepts either the serialized pre-order form or infix.
Expression parse_expression(const Library& lib, std::string_view text);

}  // namespace deepsr
