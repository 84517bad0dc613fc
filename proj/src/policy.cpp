#include "deepsr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <cstdlib>
#include <stdexcept>

#include <fmt/format.h>

#include "deepsr/random.hpp"

namespace deepsr {

namespace {

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

// Masked softmax over logits; infeasible entries get probability 0.
void masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask,
                    std::span<double> out)
{
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.size(); ++j)
        if (mask[j]) m = std::max(m, logits[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        out[j] = mask[j] ? std::exp(logits[j] - m) : 0.0;
        sum += out[j];
    }
    for (double& v : out) v /= sum;
}

double categorical_entropy(std::span<const double> q) noexcept
{
    double h = 0.0;
    for (double v : q)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

}  // namespace

std::vector<double> TokenEncoding::dense(std::size_t library_size) const
{
    std::vector<double> v(2 * (library_size + 1), 0.0);
    v[static_cast<std::size_t>(parent)] = 1.0;
    v[library_size + 1 + static_cast<std::size_t>(sibling)] = 1.0;
    return v;
}

Policy::Policy(std::size_t library_size, std::size_t hidden) : L_(library_size), H_(hidden)
{
    if (L_ == 0 || H_ == 0) throw std::invalid_argument("policy needs a nonempty library and hidden layer");
    params_.assign(input_dim() * 4 * H_ + 4 * H_ * H_ + 4 * H_ + L_ * H_ + L_, 0.0);
}

Policy Policy::initialized(std::size_t library_size, std::uint64_t seed, std::size_t hidden)
{
    Policy p(library_size, hidden);
    Rng rng(seed);
    std::uniform_real_distribution<double> dist(-0.08, 0.08);
    const std::size_t H = p.H_;
    const std::size_t n_in = p.input_dim() * 4 * H;
    const std::size_t n_hh = 4 * H * H;
    const std::size_t n_out = p.L_ * H;
    double* base = p.params_.data();
    for (std::size_t i = 0; i < n_in + n_hh; ++i) base[i] = dist(rng);
    double* bias = base + n_in + n_hh;
    for (std::size_t k = H; k < 2 * H; ++k) bias[k] = 1.0;
    double* wo = bias + 4 * H;
    for (std::size_t i = 0; i < n_out; ++i) wo[i] = dist(rng);
    return p;
}

void Policy::step_detailed(const TokenEncoding& input, CellState& state, std::span<double> gates,
                           std::span<double> logits, std::span<double> probs) const
{
    const std::size_t H = H_, G = 4 * H_;
    const double* wp = w_input() + static_cast<std::size_t>(input.parent) * G;
    const double* ws = w_input() + (L_ + 1 + static_cast<std::size_t>(input.sibling)) * G;
    const double* wh = w_hidden();
    const double* bg = b_gate();
    for (std::size_t k = 0; k < G; ++k) {
        double acc = wp[k] + ws[k] + bg[k];
        const double* row = wh + k * H;
        for (std::size_t j = 0; j < H; ++j) acc += row[j] * state.h[j];
        gates[k] = acc;
    }
    for (std::size_t j = 0; j < H; ++j) {
        const double i = sigmoid(gates[j]);
        const double f = sigmoid(gates[H + j]);
        const double g = std::tanh(gates[2 * H + j]);
        const double o = sigmoid(gates[3 * H + j]);
        gates[j] = i;
        gates[H + j] = f;
        gates[2 * H + j] = g;
        gates[3 * H + j] = o;
        state.c[j] = f * state.c[j] + i * g;
        state.h[j] = o * std::tanh(state.c[j]);
    }
    const double* wo = w_out();
    const double* bo = b_out();
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < L_; ++l) {
        double acc = bo[l];
        const double* row = wo + l * H;
        for (std::size_t j = 0; j < H; ++j) acc += row[j] * state.h[j];
        logits[l] = acc;
        m = std::max(m, acc);
    }
    if (!std::isfinite(m)) throw std::runtime_error("non-finite policy logits");
    double sum = 0.0;
    for (std::size_t l = 0; l < L_; ++l) {
        probs[l] = std::exp(logits[l] - m);
        sum += probs[l];
    }
    for (std::size_t l = 0; l < L_; ++l) probs[l] /= sum;
}

void Policy::step(const TokenEncoding& input, CellState& state, std::span<double> probs) const
{
    thread_local std::vector<double> gates, logits;
    gates.resize(4 * H_);
    logits.resize(L_);
    step_detailed(input, state, gates, logits, probs);
}

std::pair<std::vector<double>, CellState> forward_step(const TokenEncoding& input, const CellState& state,
                                                       const Policy& policy)
{
    CellState next = state;
    std::vector<double> probs(policy.library_size());
    policy.step(input, next, probs);
    return {std::move(probs), std::move(next)};
}

double sequence_log_prob(const SampleRecord& record)
{
    double lp = 0.0;
    for (std::size_t t = 0; t < record.steps(); ++t)
        lp += std::log(record.step_probs(t)[static_cast<std::size_t>(record.actions[t])]);
    return lp;
}

double sequence_log_prob(std::span<const int> traversal, const SampleRecord& record)
{
    if (traversal.size() < record.steps())
        throw std::invalid_argument(fmt::format("traversal has {} tokens but record has {} steps",
                                                traversal.size(), record.steps()));
    for (std::size_t t = 0; t < record.steps(); ++t)
        if (traversal[t] != record.actions[t])
            throw std::invalid_argument(fmt::format("traversal and record disagree at step {}", t));
    return sequence_log_prob(record);
}

double sequence_entropy(const SampleRecord& record)
{
    double h = 0.0;
    for (std::size_t t = 0; t < record.steps(); ++t) h += categorical_entropy(record.step_probs(t));
    return h;
}

namespace {

void check_batch(const Policy& policy, std::span<const SampleRecord> batch, std::span<const double> advantages)
{
    if (batch.size() != advantages.size())
        throw std::invalid_argument(
            fmt::format("{} records but {} advantages", batch.size(), advantages.size()));
    for (const auto& r : batch)
        if (r.library_size != policy.library_size())
            throw std::invalid_argument("record library size does not match policy");
}

}  // namespace

double policy_objective(const Policy& policy, std::span<const SampleRecord> batch,
                        std::span<const double> advantages, double entropy_coef)
{
    check_batch(policy, batch, advantages);
    if (batch.empty()) return 0.0;
    const std::size_t L = policy.library_size();
    std::vector<double> gates(4 * policy.hidden()), logits(L), raw(L), q(L);
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& rec = batch[b];
        auto state = policy.initial_state();
        double lp = 0.0, ent = 0.0;
        for (std::size_t t = 0; t < rec.steps(); ++t) {
            policy.step_detailed(rec.inputs[t], state, gates, logits, raw);
            masked_softmax(logits, rec.step_mask(t), q);
            lp += std::log(q[static_cast<std::size_t>(rec.actions[t])]);
            ent += categorical_entropy(q);
        }
        total += advantages[b] * lp + entropy_coef * ent;
    }
    return total / static_cast<double>(batch.size());
}

std::vector<double> policy_gradients(const Policy& policy, std::span<const SampleRecord> batch,
                                     std::span<const double> advantages, double entropy_coef)
{
    check_batch(policy, batch, advantages);
    std::vector<double> grad(policy.parameter_count(), 0.0);
    if (batch.empty()) return grad;

    const std::size_t L = policy.library_size(), H = policy.hidden(), G = 4 * H;
    const std::size_t off_hidden = static_cast<std::size_t>(policy.w_hidden() - policy.w_input());
    const std::size_t off_bgate = static_cast<std::size_t>(policy.b_gate() - policy.w_input());
    const std::size_t off_wout = static_cast<std::size_t>(policy.w_out() - policy.w_input());
    const std::size_t off_bout = static_cast<std::size_t>(policy.b_out() - policy.w_input());
    double* g_in = grad.data();
    double* g_hh = grad.data() + off_hidden;
    double* g_bg = grad.data() + off_bgate;
    double* g_out = grad.data() + off_wout;
    double* g_bo = grad.data() + off_bout;
    const double* w_hh = policy.w_hidden();
    const double* w_out = policy.w_out();
    const double scale = 1.0 / static_cast<double>(batch.size());

    std::vector<double> logits(L), raw(L), q(L), dz(L), dh(H), dc(H), dh_next(H), dc_next(H), dpre(G);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& rec = batch[b];
        const std::size_t T = rec.steps();
        if (T == 0) continue;
        // Forward replay, keeping h/c before and after each step and the gates.
        std::vector<double> hs((T + 1) * H, 0.0), cs((T + 1) * H, 0.0), gates(T * G), dlogits(T * L);
        auto state = policy.initial_state();
        for (std::size_t t = 0; t < T; ++t) {
            policy.step_detailed(rec.inputs[t], state, std::span<double>(gates.data() + t * G, G), logits, raw);
            std::copy(state.h.begin(), state.h.end(), hs.begin() + static_cast<std::ptrdiff_t>((t + 1) * H));
            std::copy(state.c.begin(), state.c.end(), cs.begin() + static_cast<std::ptrdiff_t>((t + 1) * H));
            const auto mask = rec.step_mask(t);
            masked_softmax(logits, mask, q);
            const double ent = categorical_entropy(q);
            const auto a = static_cast<std::size_t>(rec.actions[t]);
            for (std::size_t j = 0; j < L; ++j) {
                double d = 0.0;
                if (mask[j] && q[j] > 0.0) {
                    d = advantages[b] * ((j == a ? 1.0 : 0.0) - q[j]);
                    d += entropy_coef * (-q[j] * (std::log(q[j]) + ent));
                }
                dlogits[t * L + j] = d * scale;
            }
        }

        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        std::fill(dc_next.begin(), dc_next.end(), 0.0);
        for (std::size_t t = T; t-- > 0;) {
            const double* h_prev = hs.data() + t * H;
            const double* h_t = hs.data() + (t + 1) * H;
            const double* c_prev = cs.data() + t * H;
            const double* c_t = cs.data() + (t + 1) * H;
            const double* gt = gates.data() + t * G;
            const double* dzt = dlogits.data() + t * L;

            dh = dh_next;
            for (std::size_t l = 0; l < L; ++l) {
                const double d = dzt[l];
                if (d == 0.0) continue;
                g_bo[l] += d;
                const double* row = w_out + l * H;
                double* grow = g_out + l * H;
                for (std::size_t j = 0; j < H; ++j) {
                    grow[j] += d * h_t[j];
                    dh[j] += d * row[j];
                }
            }
            for (std::size_t j = 0; j < H; ++j) {
                const double i = gt[j], f = gt[H + j], g = gt[2 * H + j], o = gt[3 * H + j];
                const double tc = std::tanh(c_t[j]);
                const double d_o = dh[j] * tc;
                dc[j] = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
                const double d_i = dc[j] * g;
                const double d_g = dc[j] * i;
                const double d_f = dc[j] * c_prev[j];
                dc_next[j] = dc[j] * f;
                dpre[j] = d_i * i * (1.0 - i);
                dpre[H + j] = d_f * f * (1.0 - f);
                dpre[2 * H + j] = d_g * (1.0 - g * g);
                dpre[3 * H + j] = d_o * o * (1.0 - o);
            }
            double* gp = g_in + static_cast<std::size_t>(rec.inputs[t].parent) * G;
            double* gs = g_in + (L + 1 + static_cast<std::size_t>(rec.inputs[t].sibling)) * G;
            std::fill(dh_next.begin(), dh_next.end(), 0.0);
            for (std::size_t k = 0; k < G; ++k) {
                const double d = dpre[k];
                g_bg[k] += d;
                gp[k] += d;
                gs[k] += d;
                double* grow = g_hh + k * H;
                const double* row = w_hh + k * H;
                for (std::size_t j = 0; j < H; ++j) {
                    grow[j] += d * h_prev[j];
                    dh_next[j] += d * row[j];
                }
            }
        }
    }
    for (double v : grad)
        if (!std::isfinite(v)) throw std::runtime_error("non-finite policy gradient");
    return grad;
}

void apply_update(Policy& policy, std::span<const double> gradient, double learning_rate)
{
    auto p = policy.params();
    if (gradient.size() != p.size()) throw std::invalid_argument("gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += learning_rate * gradient[i];
}

void AdamAscent::apply(Policy& policy, std::span<const double> gradient, double learning_rate)
{
    auto p = policy.params();
    if (gradient.size() != p.size() || m_.size() != p.size()) throw std::invalid_argument("gradient shape mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < p.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * gradient[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * gradient[i] * gradient[i];
        p[i] += learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
}

namespace {

struct Block {
    const char* name;
    std::size_t rows, cols;
};

std::vector<Block> blocks(std::size_t L, std::size_t H)
{
    return {{"w_input", 2 * (L + 1), 4 * H}, {"w_hidden", 4 * H, H}, {"b_gate", 1, 4 * H},
            {"w_out", L, H}, {"b_out", 1, L}};
}

}  // namespace

void save_policy(const Policy& policy, std::ostream& out)
{
    out << "deepsr-policy 1\n";
    out << "library_size " << policy.library_size() << " hidden " << policy.hidden() << "\n";
    const auto p = policy.params();
    std::size_t offset = 0;
    for (const auto& b : blocks(policy.library_size(), policy.hidden())) {
        out << b.name << ' ' << b.rows << ' ' << b.cols << '\n';
        for (std::size_t i = 0; i < b.rows * b.cols; ++i) out << fmt::format("{}\n", p[offset++]);
    }
}

Policy load_policy(std::istream& in)
{
    std::string magic, key1, key2;
    int version = 0;
    std::size_t L = 0, H = 0;
    if (!(in >> magic >> version) || magic != "deepsr-policy" || version != 1)
        throw std::runtime_error("not a deepsr-policy v1 checkpoint");
    if (!(in >> key1 >> L >> key2 >> H) || key1 != "library_size" || key2 != "hidden")
        throw std::runtime_error("malformed checkpoint shape header");
    Policy policy(L, H);
    auto p = policy.params();
    std::size_t offset = 0;
    for (const auto& b : blocks(L, H)) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(in >> name >> rows >> cols) || name != b.name || rows != b.rows || cols != b.cols)
            throw std::runtime_error(fmt::format("checkpoint block '{}' has unexpected shape", b.name));
        for (std::size_t i = 0; i < rows * cols; ++i) {
            std::string word;
            if (!(in >> word)) throw std::runtime_error("truncated checkpoint");
            p[offset++] = std::strtod(word.c_str(), nullptr);
        }
    }
    return policy;
}

}  // namespace deepsr
