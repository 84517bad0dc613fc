#pragma once

// Independent reference implementations used by the property tests. None of
// these call into the code they check beyond reading token metadata.

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "deepsr/expression.hpp"
#include "deepsr/policy.hpp"
#include "deepsr/random.hpp"
#include "deepsr/sampler.hpp"

namespace oracle {

using deepsr::Library;
using deepsr::Op;
using deepsr::TokenKind;

inline int arity_of(const Library& lib, int token)
{
    switch (lib[static_cast<std::size_t>(token)].kind) {
    case TokenKind::Binary: return 2;
    case TokenKind::Unary: return 1;
    default: return 0;
    }
}

struct Node {
    int token = -1;
    int position = -1;
    int constant_slot = -1;
    std::vector<std::unique_ptr<Node>> kids;
    Node* parent = nullptr;
};

// Recursive-descent reconstruction; `pos` advances through the traversal.
inline std::unique_ptr<Node> read_tree(const Library& lib, std::span<const int> traversal, std::size_t& pos,
                                       int& const_slot, Node* parent = nullptr)
{
    if (pos >= traversal.size()) throw std::invalid_argument("oracle: traversal ends early");
    auto n = std::make_unique<Node>();
    n->token = traversal[pos];
    n->position = static_cast<int>(pos);
    n->parent = parent;
    ++pos;
    if (lib[static_cast<std::size_t>(n->token)].kind == TokenKind::Constant) n->constant_slot = const_slot++;
    for (int k = 0; k < arity_of(lib, n->token); ++k)
        n->kids.push_back(read_tree(lib, traversal, pos, const_slot, n.get()));
    return n;
}

inline std::unique_ptr<Node> tree(const Library& lib, std::span<const int> traversal)
{
    std::size_t pos = 0;
    int slot = 0;
    auto root = read_tree(lib, traversal, pos, slot);
    if (pos != traversal.size()) throw std::invalid_argument("oracle: trailing tokens");
    return root;
}

inline double interpret(const Library& lib, const Node& n, const std::vector<double>& constants,
                        std::span<const double> row)
{
    const auto& tok = lib[static_cast<std::size_t>(n.token)];
    auto kid = [&](int k) { return interpret(lib, *n.kids[static_cast<std::size_t>(k)], constants, row); };
    auto finite_or_one = [](double v) { return std::isfinite(v) ? v : 1.0; };
    switch (tok.op) {
    case Op::Add: return finite_or_one(kid(0) + kid(1));
    case Op::Sub: return finite_or_one(kid(0) - kid(1));
    case Op::Mul: return finite_or_one(kid(0) * kid(1));
    case Op::Div: {
        const double a = kid(0), b = kid(1);
        if (std::fabs(b) < 1e-12) return 1.0;
        return finite_or_one(a / b);
    }
    case Op::Sin: return std::sin(kid(0));
    case Op::Cos: return std::cos(kid(0));
    case Op::Exp: {
        const double a = kid(0);
        return a > 700.0 ? 1.0 : std::exp(a);
    }
    case Op::Log: {
        const double a = std::fabs(kid(0));
        return a < 1e-12 ? 1.0 : std::log(a);
    }
    case Op::Var: return row[static_cast<std::size_t>(tok.var_index)];
    case Op::Const: return constants[static_cast<std::size_t>(n.constant_slot)];
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Post-hoc constraint check on a complete traversal.

inline bool is_trig_token(const Library& lib, int t)
{
    const auto op = lib[static_cast<std::size_t>(t)].op;
    return op == Op::Sin || op == Op::Cos;
}

inline bool has_trig_below(const Library& lib, const Node& n)
{
    for (const auto& k : n.kids)
        if (is_trig_token(lib, k->token) || has_trig_below(lib, *k)) return true;
    return false;
}

inline bool node_ok(const Library& lib, const Node& n, const deepsr::ConstraintSet& cs)
{
    const auto& tok = lib[static_cast<std::size_t>(n.token)];
    auto is_const = [&](const Node& k) { return lib[static_cast<std::size_t>(k.token)].kind == TokenKind::Constant; };
    if (cs.const_children && !n.kids.empty()) {
        bool all = true;
        for (const auto& k : n.kids) all = all && is_const(*k);
        if (all) return false;
    }
    if (cs.inverse_unary && n.kids.size() == 1) {
        const auto child = lib[static_cast<std::size_t>(n.kids[0]->token)].op;
        if ((tok.op == Op::Log && child == Op::Exp) || (tok.op == Op::Exp && child == Op::Log)) return false;
    }
    if (cs.nested_trig && is_trig_token(lib, n.token) && has_trig_below(lib, n)) return false;
    for (const auto& k : n.kids)
        if (!node_ok(lib, *k, cs)) return false;
    return true;
}

inline bool satisfies(const Library& lib, std::span<const int> traversal, const deepsr::ConstraintSet& cs)
{
    const auto root = tree(lib, traversal);
    const int T = static_cast<int>(traversal.size());
    if (cs.length && (T < cs.min_length || T > cs.max_length)) return false;
    if (cs.limit_constants) {
        int n = 0;
        for (int t : traversal) n += lib[static_cast<std::size_t>(t)].kind == TokenKind::Constant;
        if (n > cs.max_constants) return false;
    }
    return node_ok(lib, *root, cs);
}

// ---------------------------------------------------------------------------
// Enumeration of every complete traversal up to a length bound, with no masks.

inline void enumerate(const Library& lib, int max_length, const std::function<void(const std::vector<int>&)>& visit)
{
    std::vector<int> cur;
    std::function<void(int)> rec = [&](int open) {
        if (open == 0) {
            visit(cur);
            return;
        }
        // every open slot needs at least one more token
        if (static_cast<int>(cur.size()) + open > max_length) return;
        for (int t = 0; t < static_cast<int>(lib.size()); ++t) {
            cur.push_back(t);
            rec(open + arity_of(lib, t) - 1);
            cur.pop_back();
        }
    };
    rec(1);
}

// ---------------------------------------------------------------------------
// LSTM step written against the dense input vector, one scalar at a time.

struct ScalarState {
    std::vector<double> h, c;
};

inline std::vector<double> scalar_lstm_step(const deepsr::Policy& p, const std::vector<double>& x, ScalarState& s)
{
    const std::size_t L = p.library_size(), H = p.hidden(), D = p.input_dim();
    auto W_ih = [&](std::size_t gate_row, std::size_t input) { return p.w_input()[input * 4 * H + gate_row]; };
    auto W_hh = [&](std::size_t gate_row, std::size_t j) { return p.w_hidden()[gate_row * H + j]; };
    auto pre = [&](std::size_t gate, std::size_t j) {
        const std::size_t r = gate * H + j;
        double z = p.b_gate()[r];
        for (std::size_t d = 0; d < D; ++d) z += W_ih(r, d) * x[d];
        for (std::size_t k = 0; k < H; ++k) z += W_hh(r, k) * s.h[k];
        return z;
    };
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    std::vector<double> h(H), c(H);
    for (std::size_t j = 0; j < H; ++j) {
        const double i = sig(pre(0, j)), f = sig(pre(1, j)), g = std::tanh(pre(2, j)), o = sig(pre(3, j));
        c[j] = f * s.c[j] + i * g;
        h[j] = o * std::tanh(c[j]);
    }
    s.h = h;
    s.c = c;
    std::vector<double> z(L);
    double zmax = -1e300;
    for (std::size_t l = 0; l < L; ++l) {
        z[l] = p.b_out()[l];
        for (std::size_t j = 0; j < H; ++j) z[l] += p.w_out()[l * H + j] * h[j];
        zmax = std::max(zmax, z[l]);
    }
    double sum = 0.0;
    for (auto& v : z) sum += (v = std::exp(v - zmax));
    for (auto& v : z) v /= sum;
    return z;
}

// Random complete traversal grown top-down; operators are picked with
// probability `p_op` while the length budget allows.
inline std::vector<int> random_traversal(const Library& lib, deepsr::Rng& rng, int max_length, double p_op = 0.6)
{
    std::vector<int> ops, terms;
    for (int t = 0; t < static_cast<int>(lib.size()); ++t) (arity_of(lib, t) ? ops : terms).push_back(t);
    std::vector<int> out;
    int open = 1;
    while (open > 0) {
        const int room = max_length - static_cast<int>(out.size()) - open;
        std::vector<int> choices;
        if (room >= 2 && !ops.empty() && deepsr::uniform01(rng) < p_op) {
            choices = ops;
        } else if (room >= 1 && !ops.empty() && deepsr::uniform01(rng) < p_op) {
            for (int t : ops)
                if (arity_of(lib, t) == 1) choices.push_back(t);
        }
        if (choices.empty()) choices = terms;
        const int t = choices[deepsr::uniform_index(rng, choices.size())];
        out.push_back(t);
        open += arity_of(lib, t) - 1;
    }
    return out;
}

}  // namespace oracle
