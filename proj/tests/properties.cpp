#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "deepsr/gp.hpp"
#include "deepsr/trainer.hpp"
#include "oracles.hpp"

namespace props {

using namespace deepsr;

namespace {

Library small_library() { return Library::build({"add", "sin"}, {"x"}, false); }

Library mixed_library() { return Library::build({"add", "mul", "sin", "cos", "exp", "log"}, {"x"}, true); }

Policy scaled_policy(std::size_t L, std::uint64_t seed, std::size_t H, double scale)
{
    auto p = Policy::initialized(L, seed, H);
    Rng rng(derive_seed(seed, 7));
    std::uniform_real_distribution<double> jitter(-scale, scale);
    for (double& v : p.params()) v += jitter(rng);
    return p;
}

}  // namespace

Outcome gradient_check(std::uint64_t seed, double tolerance)
{
    const auto lib = mixed_library();
    auto policy = scaled_policy(lib.size(), seed, 8, 0.5);
    ConstraintSet cs;
    cs.max_length = 12;
    Rng rng(derive_seed(seed, 1));
    std::vector<SampleRecord> batch;
    std::vector<double> adv;
    for (int i = 0; i < 5; ++i) {
        batch.push_back(sample_expression(policy, lib, cs, rng).record);
        adv.push_back(uniform01(rng) * 2.0 - 1.0);
    }
    const double lambda = 0.08;
    const auto g = policy_gradients(policy, batch, adv, lambda);
    auto params = policy.params();
    const double h = 1e-5;
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double saved = params[k];
        params[k] = saved + h;
        const double up = policy_objective(policy, batch, adv, lambda);
        params[k] = saved - h;
        const double down = policy_objective(policy, batch, adv, lambda);
        params[k] = saved;
        const double fd = (up - down) / (2.0 * h);
        if (std::fabs(g[k]) < 1e-8 && std::fabs(fd) < 1e-8) continue;
        ++checked;
        const double rel = std::fabs(g[k] - fd) / std::max(std::fabs(g[k]), std::fabs(fd));
        worst = std::max(worst, rel);
    }
    return {worst <= tolerance && checked > 0,
            fmt::format("{} entries checked, max relative error {:.3g}", checked, worst)};
}

Outcome normalization(std::uint64_t seed, double tolerance)
{
    const auto lib = small_library();
    const auto policy = scaled_policy(lib.size(), seed, 16, 1.0);
    ConstraintSet cs;
    cs.max_length = 7;
    double total = 0.0;
    std::size_t count = 0;
    std::function<void(SamplerContext, CellState, double)> walk = [&](SamplerContext ctx, CellState state,
                                                                      double p) {
        if (ctx.complete()) {
            total += p;
            ++count;
            return;
        }
        std::vector<double> probs(lib.size());
        policy.step(ctx.encoding(InputMode::ParentSibling), state, probs);
        apply_constraints(probs, lib, ctx, cs);
        for (std::size_t t = 0; t < lib.size(); ++t) {
            if (probs[t] == 0.0) continue;
            auto next = ctx;
            next.push(static_cast<int>(t));
            walk(next, state, p * probs[t]);
        }
    };
    walk(SamplerContext(lib), policy.initial_state(), 1.0);
    const double err = std::fabs(total - 1.0);
    return {err <= tolerance, fmt::format("{} traversals, |sum p - 1| = {:.3g}", count, err)};
}

Outcome parent_sibling_oracle(std::uint64_t seed, int prefixes)
{
    const auto lib = Library::build(Library::default_operators(), {"x", "y"}, true);
    Rng rng(derive_seed(seed, 2));
    int mismatches = 0;
    for (int n = 0; n < prefixes; ++n) {
        std::vector<int> full;
        while (full.size() < 2) full = oracle::random_traversal(lib, rng, 30);
        const std::size_t len = 1 + uniform_index(rng, full.size() - 1);
        const auto root = oracle::tree(lib, full);
        // Find the node that occupies position `len` in the completed tree.
        const oracle::Node* target = nullptr;
        std::function<void(const oracle::Node&)> find = [&](const oracle::Node& nd) {
            if (nd.position == static_cast<int>(len)) target = &nd;
            for (const auto& k : nd.kids) find(*k);
        };
        find(*root);
        const auto* parent = target->parent;
        int want_parent = parent ? parent->token : kEmptyToken;
        int want_sibling = kEmptyToken;
        if (parent && parent->kids.size() == 2 && parent->kids[1].get() == target)
            want_sibling = parent->kids[0]->token;

        const std::span<const int> prefix(full.data(), len);
        const auto [p, s] = parent_sibling(lib, prefix);
        SamplerContext ctx(lib);
        for (int t : prefix) ctx.push(t);
        if (p != want_parent || s != want_sibling || ctx.parent() != want_parent || ctx.sibling() != want_sibling)
            ++mismatches;
    }
    return {mismatches == 0, fmt::format("{} prefixes, {} mismatches", prefixes, mismatches)};
}

Outcome constraint_soundness()
{
    const auto lib = mixed_library();
    ConstraintSet cs;
    cs.max_length = 7;
    cs.max_constants = 2;
    const int L = static_cast<int>(lib.size());
    std::size_t complete = 0, valid = 0, problems = 0;
    std::vector<int> cur;
    std::function<void(const SamplerContext&, bool)> dfs = [&](const SamplerContext& ctx, bool reachable) {
        if (ctx.complete()) {
            ++complete;
            const bool ok = oracle::satisfies(lib, cur, cs);
            valid += ok;
            if (ok != reachable) ++problems;
            return;
        }
        std::vector<std::uint8_t> mask;
        if (reachable) {
            mask = constraint_mask(lib, ctx, cs);
            if (std::none_of(mask.begin(), mask.end(), [](auto m) { return m != 0; })) ++problems;
        }
        for (int t = 0; t < L; ++t) {
            const int open = ctx.counter() + oracle::arity_of(lib, t) - 1;
            const bool allowed = reachable && mask[static_cast<std::size_t>(t)];
            if (static_cast<int>(ctx.length()) + 1 + open > cs.max_length) {
                if (allowed) ++problems;  // mask admits a token that cannot finish in time
                continue;
            }
            auto next = ctx;
            next.push(t);
            cur.push_back(t);
            dfs(next, allowed);
            cur.pop_back();
        }
    };
    dfs(SamplerContext(lib), true);
    return {problems == 0, fmt::format("{} traversals enumerated ({} valid), {} disagreements", complete, valid,
                                       problems)};
}

Outcome totality(std::uint64_t seed, int expressions)
{
    const auto lib = Library::build(Library::default_operators(), {"x", "y"}, true);
    Rng rng(derive_seed(seed, 3));
    std::uniform_real_distribution<double> xs(-10.0, 10.0);
    int bad = 0;
    Matrix X(8, 2);
    for (int n = 0; n < expressions; ++n) {
        Expression e;
        e.tokens = oracle::random_traversal(lib, rng, 30, 0.7);
        for (std::size_t i = 0; i < count_constants(lib, e.tokens); ++i) e.constants.push_back(xs(rng));
        for (double& v : X.data) v = xs(rng);
        for (double v : evaluate(lib, e, X))
            if (!std::isfinite(v)) {
                ++bad;
                break;
            }
    }
    return {bad == 0, fmt::format("{} expressions, {} produced NaN/Inf", expressions, bad)};
}

Outcome gp_completeness(std::uint64_t seed, int operations)
{
    const auto lib = Library::build(Library::default_operators(), {"x", "y"}, true);
    GPConfig cfg;
    Rng rng(derive_seed(seed, 4));
    std::vector<Expression> pool;
    for (int i = 0; i < 64; ++i) pool.push_back(init_full(lib, static_cast<int>(uniform_index(rng, 3)), rng));
    int bad = 0;
    auto sound = [&](const Expression& e) {
        return is_complete(lib, e.tokens) && e.constants.size() == count_constants(lib, e.tokens);
    };
    for (int n = 0; n < operations; ++n) {
        const std::size_t i = uniform_index(rng, pool.size()), j = uniform_index(rng, pool.size());
        if (n % 2 == 0) {
            auto [a, b] = subtree_crossover(lib, pool[i], pool[j], rng);
            bad += !sound(a) + !sound(b);
            if (a.tokens.size() <= 64 && a.constants.size() <= 3) pool[i] = std::move(a);
            if (b.tokens.size() <= 64 && b.constants.size() <= 3) pool[j] = std::move(b);
        } else {
            auto m = subtree_mutation(lib, pool[i], cfg, rng);
            bad += !sound(m) || m.constants.size() > static_cast<std::size_t>(cfg.max_constants);
            if (m.tokens.size() <= 64) pool[i] = std::move(m);
        }
    }
    return {bad == 0, fmt::format("{} operations, {} malformed offspring", operations, bad)};
}

Outcome risk_filter_cases()
{
    int failures = 0;
    auto expect = [&](std::vector<double> r, double eps, std::vector<std::size_t> want, double thr) {
        const auto got = risk_filter(r, eps);
        if (got.selected != want || got.threshold != thr) ++failures;
    };
    expect({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}, 0.1, {9}, 1.0);
    expect({0.3, 0.1, 0.2}, 1.0, {0, 1, 2}, 0.1);
    expect({0.5, 0.5, 0.5, 0.5}, 0.1, {0, 1, 2, 3}, 0.5);
    // 20 values: rank ceil(0.9 * 19) = 18 (0-based) keeps the top two
    std::vector<double> twenty;
    for (int i = 0; i < 20; ++i) twenty.push_back(i);
    expect(twenty, 0.1, {18, 19}, 18.0);
    // ties at the threshold are kept
    expect({0.2, 0.9, 0.9, 0.1, 0.9}, 0.5, {1, 2, 4}, 0.9);
    return {failures == 0, fmt::format("5 hand cases, {} failures", failures)};
}

Outcome reward_cases()
{
    int failures = 0;
    auto near = [&](double a, double b) {
        if (std::fabs(a - b) > 1e-12) ++failures;
    };
    near(nrmse(std::vector<double>{0, 2}, std::vector<double>{1, 1}), 1.0);
    near(nrmse(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 0.0);
    {
        std::vector<double> y{1, 4, 2, 8}, yh;
        const double mean = 15.0 / 4.0;
        double var = 0.0;
        for (double v : y) var += (v - mean) * (v - mean) / 4.0;
        for (double v : y) yh.push_back(v + std::sqrt(var));
        near(nrmse(y, yh), 1.0);
    }
    near(squash(0.0), 1.0);
    near(squash(1.0), 0.5);
    near(squash(1.0) - 0.01 * 7, 0.43);
    {
        // reward() end to end: (add x x) on y = 2x + sigma offset -> nrmse 1
        const auto lib = Library::build({"add"}, {"x"}, false);
        Matrix X(2, 1);
        X(0, 0) = 0.0;
        X(1, 0) = 1.0;
        const std::vector<double> y{1.0, 3.0};  // 2x + 1, sigma = 1
        Expression e{{0, 1, 1}, {}};
        near(reward(lib, e, X, y), 0.5);
        near(reward(lib, e, X, y, 0.01), 0.5 - 0.03);
    }
    return {failures == 0, fmt::format("8 formula cases, {} failures", failures)};
}

Outcome squashing_invariance(std::uint64_t seed, int populations)
{
    Rng rng(derive_seed(seed, 5));
    int disagreements = 0;
    for (int n = 0; n < populations; ++n) {
        const std::size_t size = 2 + uniform_index(rng, 200);
        std::vector<double> err(size), neg_reward(size);
        for (std::size_t i = 0; i < size; ++i) {
            const double u = uniform01(rng);
            // mix of ties, exact fits, large errors and failed evaluations
            err[i] = u < 0.05 ? std::numeric_limits<double>::infinity()
                   : u < 0.1  ? 0.0
                   : u < 0.3  ? std::round(uniform01(rng) * 4.0) / 4.0
                              : std::exp(uniform01(rng) * 10.0 - 5.0);
            neg_reward[i] = -squash(err[i]);
        }
        const int k = 1 + static_cast<int>(uniform_index(rng, 7));
        for (int t = 0; t < 20; ++t) {
            const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t));
            Rng a(s), b(s);
            if (tournament_select(err, k, a) != tournament_select(neg_reward, k, b)) ++disagreements;
        }
    }
    return {disagreements == 0,
            fmt::format("{} populations x 20 tournaments, {} disagreements", populations, disagreements)};
}

Outcome likelihood_smoke(int steps)
{
    // {add, x}, max_length 3, min_length 1: the space is {x, add x x}
    const auto lib = Library::build({"add"}, {"x"}, false);
    ConstraintSet cs;
    cs.max_length = 3;
    cs.min_length = 1;
    auto policy = Policy::initialized(lib.size(), 0);
    const std::vector<int> target{0, 1, 1};
    auto target_prob = [&] {
        SamplerContext ctx(lib);
        auto state = policy.initial_state();
        double p = 1.0;
        for (int t : target) {
            std::vector<double> probs(lib.size());
            policy.step(ctx.encoding(InputMode::ParentSibling), state, probs);
            apply_constraints(probs, lib, ctx, cs);
            p *= probs[static_cast<std::size_t>(t)];
            ctx.push(t);
        }
        return p;
    };
    Rng rng(1);
    const double start = target_prob();
    double prev = start;
    int increases = 0;
    for (int step = 0; step < steps; ++step) {
        std::vector<SampleRecord> batch;
        std::vector<double> reward;
        for (int i = 0; i < 16; ++i) {
            const auto s = sample_expression(policy, lib, cs, rng);
            reward.push_back(s.expr.tokens == target ? 1.0 : 0.0);
            batch.push_back(s.record);
        }
        apply_update(policy, policy_gradients(policy, batch, reward, 0.0), 0.05);
        const double now = target_prob();
        increases += now > prev;
        prev = now;
    }
    return {increases == steps && prev > start,
            fmt::format("p(add x x) {:.4f} -> {:.4f}, {}/{} steps increased", start, prev, increases, steps)};
}

}  // namespace props
