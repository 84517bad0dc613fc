#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "deepsr/expression.hpp"
#include "deepsr/policy.hpp"
#include "deepsr/random.hpp"

namespace deepsr {

/// In-situ sampling constraints. Each family has its own switch so ablations
/// can turn them off individually.
struct ConstraintSet {
    int min_length = 2;
    int max_length = 30;
    int max_constants = 3;
    bool length = true;               // min/max length masking
    bool const_children = true;       // an operator's children may not all be constants
    bool inverse_unary = true;        // no log(exp(.)) / exp(log(.))
    bool nested_trig = true;          // no sin/cos below a sin/cos
    bool limit_constants = true;      // at most max_constants placeholders

    void validate() const;
    static ConstraintSet none();
};

enum class InputMode : std::uint8_t { ParentSibling, PreviousToken };

/// Sentinel returned by parent_sibling for the empty token.
inline constexpr int kEmptyToken = -1;

/// Parent and sibling of the next token to be sampled, found by walking the
/// partial traversal backwards until a node with an unselected child appears.
/// Throws std::invalid_argument for an empty or complete traversal.
std::pair<int, int> parent_sibling(const Library& lib, std::span<const int> partial);

/// Incrementally tracked state of a partial traversal: open slot counter,
/// the chain of ancestors of the next position, and constant count.
class SamplerContext {
public:
    explicit SamplerContext(const Library& lib) : lib_(&lib) {}

    void push(int token);

    const std::vector<int>& partial() const noexcept { return partial_; }
    int counter() const noexcept { return counter_; }
    bool complete() const noexcept { return counter_ == 0; }
    std::size_t length() const noexcept { return partial_.size(); }
    int constants() const noexcept { return n_consts_; }
    bool under_trig() const noexcept { return trig_ancestors_ > 0; }

    int parent() const noexcept;   // kEmptyToken when none
    int sibling() const noexcept;  // kEmptyToken when none
    TokenEncoding encoding(InputMode mode) const;

private:
    struct Open {
        int position;
        int token;
        int filled;
    };
    const Library* lib_;
    std::vector<int> partial_;
    std::vector<Open> open_;  // unfinished subtrees (ancestors of the next position), root first
    int counter_ = 1;
    int n_consts_ = 0;
    int trig_ancestors_ = 0;
};

/// Feasibility of each library token at the next position (1 = allowed).
/// Length rules for too-short completions give way when nothing else is feasible.
std::vector<std::uint8_t> constraint_mask(const Library& lib, const SamplerContext& ctx,
                                          const ConstraintSet& constraints);

/// Zeroes infeasible entries of `probs` and renormalizes in place. Returns the
/// mask used. Throws std::logic_error if no token is feasible.
std::vector<std::uint8_t> apply_constraints(std::span<double> probs, const Library& lib,
                                            const SamplerContext& ctx, const ConstraintSet& constraints);

struct Sample {
    Expression expr;  // constants set to 1.0
    SampleRecord record;
};

/// Draws one complete traversal token by token from the policy under the
/// constraint masks. When length masking is off and max_length is reached,
/// remaining slots are filled with the first input variable; those tokens are
/// not part of the record.
Sample sample_expression(const Policy& policy, const Library& lib, const ConstraintSet& constraints,
                         Rng& rng, InputMode mode = InputMode::ParentSibling);

}  // namespace deepsr
