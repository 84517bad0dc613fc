#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace deepsr {

/// One-hot pair fed to the recurrent cell. Each index is in [0, L]; the value
/// L is the dedicated "empty" slot. In previous-token mode the previous token
/// occupies `parent` and `sibling` stays empty.
struct TokenEncoding {
    int parent = 0;
    int sibling = 0;

    static TokenEncoding empty(std::size_t library_size)
    {
        const int e = static_cast<int>(library_size);
        return {e, e};
    }
    /// Dense 2(L+1) vector with one nonzero entry per half.
    std::vector<double> dense(std::size_t library_size) const;
    bool operator==(const TokenEncoding&) const = default;
};

struct CellState {
    std::vector<double> h;
    std::vector<double> c;
};

/// Single-layer LSTM (gate order i, f, g, o) followed by a softmax projection
/// shared across time steps. Parameters live in one flat buffer so gradients,
/// optimizer state and checkpoints all share a layout:
///
///   w_input  [(2L+2) x 4H]  one 4H row per input slot
///   w_hidden [4H x H]
///   b_gate   [4H]
///   w_out    [L x H]
///   b_out    [L]
class Policy {
public:
    static constexpr std::size_t kDefaultHidden = 32;

    Policy() = default;
    /// Zero weights, zero biases.
    explicit Policy(std::size_t library_size, std::size_t hidden = kDefaultHidden);

    /// U(-0.08, 0.08) weights, zero biases except forget gate bias = 1.
    static Policy initialized(std::size_t library_size, std::uint64_t seed,
                              std::size_t hidden = kDefaultHidden);

    std::size_t library_size() const noexcept { return L_; }
    std::size_t hidden() const noexcept { return H_; }
    std::size_t input_dim() const noexcept { return 2 * (L_ + 1); }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }

    const double* w_input() const noexcept { return params_.data(); }
    const double* w_hidden() const noexcept { return w_input() + input_dim() * 4 * H_; }
    const double* b_gate() const noexcept { return w_hidden() + 4 * H_ * H_; }
    const double* w_out() const noexcept { return b_gate() + 4 * H_; }
    const double* b_out() const noexcept { return w_out() + L_ * H_; }

    CellState initial_state() const { return {std::vector<double>(H_, 0.0), std::vector<double>(H_, 0.0)}; }

    /// Advances `state` by one step and writes the unmasked softmax output.
    void step(const TokenEncoding& input, CellState& state, std::span<double> probs) const;

    /// Same step, additionally exposing the activated gates (4H) and logits (L);
    /// used by the backward pass.
    void step_detailed(const TokenEncoding& input, CellState& state, std::span<double> gates,
                       std::span<double> logits, std::span<double> probs) const;

    bool operator==(const Policy&) const = default;

private:
    std::size_t L_ = 0;
    std::size_t H_ = 0;
    std::vector<double> params_;
};

std::pair<std::vector<double>, CellState> forward_step(const TokenEncoding& input, const CellState& state,
                                                       const Policy& policy);

/// Everything needed to replay one sampled traversal: per sampled step the
/// input encoding, the feasibility mask, the chosen library index, and the
/// masked, renormalized distribution it was drawn from.
struct SampleRecord {
    std::size_t library_size = 0;
    std::vector<TokenEncoding> inputs;
    std::vector<int> actions;
    std::vector<std::uint8_t> masks;  // steps x L
    std::vector<double> probs;        // steps x L

    std::size_t steps() const noexcept { return actions.size(); }
    std::span<const double> step_probs(std::size_t t) const
    {
        return {probs.data() + t * library_size, library_size};
    }
    std::span<const std::uint8_t> step_mask(std::size_t t) const
    {
        return {masks.data() + t * library_size, library_size};
    }
};

/// Sum of log masked probabilities of the chosen tokens. `traversal` is the
/// sampled prefix; any tokens appended after sampling stopped are ignored.
double sequence_log_prob(std::span<const int> traversal, const SampleRecord& record);
double sequence_log_prob(const SampleRecord& record);
double sequence_entropy(const SampleRecord& record);

/// mean_i(advantage_i * log p_i + entropy_coef * H_i), with every record
/// replayed through `policy` under its stored masks.
double policy_objective(const Policy& policy, std::span<const SampleRecord> batch,
                        std::span<const double> advantages, double entropy_coef);

/// Exact gradient of policy_objective with respect to the flat parameters.
std::vector<double> policy_gradients(const Policy& policy, std::span<const SampleRecord> batch,
                                     std::span<const double> advantages, double entropy_coef);

/// Gradient ascent: theta += learning_rate * gradient.
void apply_update(Policy& policy, std::span<const double> gradient, double learning_rate);

/// Adam applied as an ascent step.
class AdamAscent {
public:
    explicit AdamAscent(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps)
    {}
    void apply(Policy& policy, std::span<const double> gradient, double learning_rate);

private:
    std::vector<double> m_, v_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

/// Text checkpoint:
///   deepsr-policy 1
///   library_size <L> hidden <H>
///   <name> <rows> <cols>
///   <rows*cols values, one per line, shortest round-trip form>
/// repeated for w_input, w_hidden, b_gate, w_out, b_out.
void save_policy(const Policy& policy, std::ostream& out);
Policy load_policy(std::istream& in);

}  // namespace deepsr
