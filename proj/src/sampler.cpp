#include "deepsr/sampler.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace deepsr {

void ConstraintSet::validate() const
{
    if (min_length < 1 || min_length > max_length)
        throw std::invalid_argument(
            fmt::format("need 1 <= min_length <= max_length, got {} and {}", min_length, max_length));
    if (max_constants < 0) throw std::invalid_argument("max_constants must be nonnegative");
}

ConstraintSet ConstraintSet::none()
{
    ConstraintSet c;
    c.length = c.const_children = c.inverse_unary = c.nested_trig = c.limit_constants = false;
    return c;
}

std::pair<int, int> parent_sibling(const Library& lib, std::span<const int> partial)
{
    if (partial.empty()) throw std::invalid_argument("parent_sibling of an empty traversal");
    if (completeness_counter(lib, partial) == 0)
        throw std::invalid_argument("parent_sibling of a complete traversal");
    const std::size_t T = partial.size();
    if (lib.arity(partial[T - 1]) > 0) return {partial[T - 1], kEmptyToken};
    int counter = 0;
    for (std::size_t i = T; i-- > 0;) {
        counter += lib.arity(partial[i]) - 1;
        if (counter == 0) return {partial[i], partial[i + 1]};
    }
    throw std::logic_error("parent_sibling found no open node");
}

namespace {

bool is_trig(Op op) noexcept { return op == Op::Sin || op == Op::Cos; }

bool inverse_pair(Op parent, Op child) noexcept
{
    return (parent == Op::Log && child == Op::Exp) || (parent == Op::Exp && child == Op::Log);
}

}  // namespace

void SamplerContext::push(int token)
{
    if (counter_ == 0) throw std::logic_error("push onto a complete traversal");
    const int a = lib_->arity(token);
    const auto& tok = (*lib_)[static_cast<std::size_t>(token)];
    if (!open_.empty()) ++open_.back().filled;
    if (a > 0) {
        open_.push_back({static_cast<int>(partial_.size()), token, 0});
        if (is_trig(tok.op)) ++trig_ancestors_;
    } else {
        // A terminal closes the innermost subtree; unwind every ancestor whose
        // last child has now finished.
        while (!open_.empty() && open_.back().filled == lib_->arity(open_.back().token)) {
            if (is_trig((*lib_)[static_cast<std::size_t>(open_.back().token)].op)) --trig_ancestors_;
            open_.pop_back();
        }
    }
    if (tok.kind == TokenKind::Constant) ++n_consts_;
    partial_.push_back(token);
    counter_ += a - 1;
}

int SamplerContext::parent() const noexcept { return open_.empty() ? kEmptyToken : open_.back().token; }

int SamplerContext::sibling() const noexcept
{
    if (open_.empty() || open_.back().filled == 0) return kEmptyToken;
    return partial_[static_cast<std::size_t>(open_.back().position) + 1];
}

TokenEncoding SamplerContext::encoding(InputMode mode) const
{
    const int empty = static_cast<int>(lib_->size());
    auto slot = [empty](int t) { return t == kEmptyToken ? empty : t; };
    if (mode == InputMode::PreviousToken)
        return {partial_.empty() ? empty : partial_.back(), empty};
    return {slot(parent()), slot(sibling())};
}

std::vector<std::uint8_t> constraint_mask(const Library& lib, const SamplerContext& ctx,
                                          const ConstraintSet& constraints)
{
    const std::size_t L = lib.size();
    std::vector<std::uint8_t> mask(L, 1);
    std::vector<std::uint8_t> too_short(L, 0);

    const int len = static_cast<int>(ctx.length());
    const int counter = ctx.counter();
    const int parent = ctx.parent();
    const int sibling = ctx.sibling();
    const Token* ptok = parent == kEmptyToken ? nullptr : &lib[static_cast<std::size_t>(parent)];
    const bool sibling_const =
        sibling != kEmptyToken && lib[static_cast<std::size_t>(sibling)].kind == TokenKind::Constant;

    for (std::size_t j = 0; j < L; ++j) {
        const auto& tok = lib[j];
        const int a = lib.arity(static_cast<int>(j));
        bool bad = false;
        if (constraints.length) {
            const int min_final = (len + 1) + (counter - 1 + a);
            bad = bad || min_final > constraints.max_length;
            if (a == 0 && counter == 1 && len + 1 < constraints.min_length) too_short[j] = 1;
        }
        if (constraints.const_children && tok.kind == TokenKind::Constant && ptok) {
            bad = bad || ptok->kind == TokenKind::Unary || (ptok->kind == TokenKind::Binary && sibling_const);
        }
        if (constraints.inverse_unary && ptok && ptok->kind == TokenKind::Unary)
            bad = bad || inverse_pair(ptok->op, tok.op);
        if (constraints.nested_trig && is_trig(tok.op)) bad = bad || ctx.under_trig();
        if (constraints.limit_constants && tok.kind == TokenKind::Constant)
            bad = bad || ctx.constants() >= constraints.max_constants;
        mask[j] = bad ? 0 : 1;
    }

    bool any_with_min = false;
    for (std::size_t j = 0; j < L; ++j) any_with_min = any_with_min || (mask[j] && !too_short[j]);
    if (any_with_min)
        for (std::size_t j = 0; j < L; ++j)
            if (too_short[j]) mask[j] = 0;
    return mask;
}

std::vector<std::uint8_t> apply_constraints(std::span<double> probs, const Library& lib,
                                            const SamplerContext& ctx, const ConstraintSet& constraints)
{
    auto mask = constraint_mask(lib, ctx, constraints);
    double sum = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        if (!mask[j]) probs[j] = 0.0;
        sum += probs[j];
    }
    if (!(sum > 0.0))
        throw std::logic_error(fmt::format("no feasible token after {} sampled tokens", ctx.length()));
    for (double& p : probs) p /= sum;
    return mask;
}

Sample sample_expression(const Policy& policy, const Library& lib, const ConstraintSet& constraints,
                         Rng& rng, InputMode mode)
{
    const std::size_t L = lib.size();
    if (policy.library_size() != L) throw std::invalid_argument("policy and library sizes differ");
    const auto filler = lib.first_variable();
    if (!filler) throw std::invalid_argument("sampling needs at least one input variable in the library");

    Sample s;
    s.record.library_size = L;
    SamplerContext ctx(lib);
    auto state = policy.initial_state();
    std::vector<double> gates(4 * policy.hidden()), logits(L), probs(L);

    while (!ctx.complete()) {
        if (!constraints.length && static_cast<int>(ctx.length()) >= constraints.max_length) {
            while (!ctx.complete()) ctx.push(*filler);
            break;
        }
        const auto enc = ctx.encoding(mode);
        policy.step_detailed(enc, state, gates, logits, probs);
        const auto mask = apply_constraints(probs, lib, ctx, constraints);

        const double u = uniform01(rng);
        double cum = 0.0;
        int choice = -1;
        for (std::size_t j = 0; j < L; ++j) {
            if (probs[j] <= 0.0) continue;
            choice = static_cast<int>(j);
            cum += probs[j];
            if (u < cum) break;
        }

        s.record.inputs.push_back(enc);
        s.record.actions.push_back(choice);
        s.record.masks.insert(s.record.masks.end(), mask.begin(), mask.end());
        s.record.probs.insert(s.record.probs.end(), probs.begin(), probs.end());
        ctx.push(choice);
    }
    s.expr.tokens = ctx.partial();
    s.expr.constants.assign(count_constants(lib, s.expr.tokens), 1.0);
    return s;
}

}  // namespace deepsr
