#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dualpost/policy.hpp"

namespace dualpost {

// Central finite differences over every parameter. Loss is re-evaluated
// through the public loss functions only, so this is an independent route
// against the analytic backward pass.
template <typename LossFn>
std::vector<double> finite_difference_grad(Policy& policy, LossFn&& loss_of,
                                           double eps = 1e-5) {
    std::vector<double> fd(policy.param_count());
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double saved = policy.params()[i];
        policy.params()[i] = saved + eps;
        const double up = loss_of(policy);
        policy.params()[i] = saved - eps;
        const double down = loss_of(policy);
        policy.params()[i] = saved;
        fd[i] = (up - down) / (2.0 * eps);
    }
    return fd;
}

inline double max_relative_error(const std::vector<double>& analytic,
                                 const std::vector<double>& fd) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-4});
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
    }
    return worst;
}

struct GradCheckInstance {
    Policy policy;
    Policy teacher;
    TokenSequence seq;
};

// Small random policy/teacher/sequence with all three token kinds present.
inline GradCheckInstance make_gradcheck_instance(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> vdist(3, 8);
    std::uniform_int_distribution<int> cdist(2, 6);
    std::uniform_int_distribution<int> hdist(2, 8);
    std::uniform_int_distribution<int> edist(2, 4);
    std::uniform_int_distribution<int> len(4, 10);
    const int vocab = vdist(rng);
    const int context = cdist(rng);
    const int hidden = hdist(rng);
    const int embed = edist(rng);
    GradCheckInstance inst{
        Policy::random_init(vocab, embed, hidden, context, rng(), 0.5),
        Policy::random_init(vocab, embed, hidden, context, rng(), 0.5),
        {}};
    std::uniform_int_distribution<int> tok(0, vocab - 1);
    std::uniform_int_distribution<int> kind(0, 2);
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
        inst.seq.tokens.push_back(tok(rng));
        inst.seq.kinds.push_back(static_cast<TokenKind>(kind(rng)));
    }
    // Guarantee at least one position of each trainable kind.
    inst.seq.kinds[static_cast<std::size_t>(n) - 1] = TokenKind::Action;
    inst.seq.kinds[static_cast<std::size_t>(n) - 2] = TokenKind::Reasoning;
    return inst;
}

struct GradCheckResult {
    double max_ce_error = 0.0;
    double max_kd_error = 0.0;
};

// Checks CE and KD gradients on `instances` seeded instances across the
// given temperatures; returns the worst relative error seen per loss.
inline GradCheckResult run_gradcheck(std::uint64_t seed, int instances,
                                     const std::vector<double>& temperatures) {
    GradCheckResult result;
    const std::set<TokenKind> train_kinds = {TokenKind::Action, TokenKind::Reasoning};
    for (int k = 0; k < instances; ++k) {
        GradCheckInstance inst = make_gradcheck_instance(seed + static_cast<std::uint64_t>(k));
        {
            const auto r = ce_loss(inst.policy, inst.seq, train_kinds);
            const auto fd = finite_difference_grad(inst.policy, [&](const Policy& p) {
                return ce_loss(p, inst.seq, train_kinds).loss;
            });
            result.max_ce_error = std::max(result.max_ce_error,
                                           max_relative_error(r.grad, fd));
        }
        for (const double t : temperatures) {
            const auto r = kd_loss(inst.policy, inst.teacher, inst.seq, train_kinds, t);
            const auto fd = finite_difference_grad(inst.policy, [&](const Policy& p) {
                return kd_loss(p, inst.teacher, inst.seq, train_kinds, t).loss;
            });
            result.max_kd_error = std::max(result.max_kd_error,
                                           max_relative_error(r.grad, fd));
        }
    }
    return result;
}

}  // namespace dualpost
