#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dualpost/error.hpp"
#include "dualpost/trajectory.hpp"

namespace dualpost {

enum class TokenKind { Action, Reasoning, Prompt };

// A flat training sequence: token ids plus a per-position role mask that
// decides which positions each loss trains on.
struct TokenSequence {
    std::vector<int> tokens;
    std::vector<TokenKind> kinds;

    std::size_t size() const { return tokens.size(); }
};

inline constexpr int kPadToken = 0;

// Fixed-context two-layer categorical policy:
//   x = concat of the last C token embeddings (left-padded with kPadToken)
//   h = tanh(W1^T x + b1)
//   logits = W2^T h + b2
// Parameters live in one flat vector so finite differencing and SGD are
// trivial. Gradients are computed analytically; no autodiff anywhere.
class Policy {
public:
    Policy(int vocab, int embed, int hidden, int context)
        : vocab_(vocab), embed_(embed), hidden_(hidden), context_(context),
          params_(param_count(), 0.0) {
        if (vocab < 2 || embed < 1 || hidden < 1 || context < 1) {
            throw InvalidArgument("Policy: bad dimensions");
        }
    }

    static Policy random_init(int vocab, int embed, int hidden, int context,
                              std::uint64_t seed, double scale = 0.1) {
        Policy p(vocab, embed, hidden, context);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> dist(0.0, scale);
        for (double& v : p.params_) v = dist(rng);
        return p;
    }

    int vocab() const { return vocab_; }
    int embed_dim() const { return embed_; }
    int hidden_dim() const { return hidden_; }
    int context_len() const { return context_; }

    std::size_t param_count() const {
        const std::size_t ce = static_cast<std::size_t>(context_) * embed_;
        return static_cast<std::size_t>(vocab_) * embed_  // embedding table
               + ce * hidden_ + hidden_                   // W1, b1
               + static_cast<std::size_t>(hidden_) * vocab_ + vocab_;  // W2, b2
    }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    // Number of forward evaluations made so far; used by the routing
    // exclusivity checks.
    std::size_t forward_calls() const { return forward_calls_; }
    void reset_forward_calls() const { forward_calls_ = 0; }

    struct Trace {
        std::vector<int> context;   // padded/truncated to C
        std::vector<double> input;  // C*E
        std::vector<double> hidden;
        std::vector<double> logits;
    };

    // ctx may be any length: only the most recent C tokens are used,
    // left-padded with kPadToken when shorter.
    Trace run(const std::vector<int>& ctx) const {
        ++forward_calls_;
        Trace tr;
        tr.context.assign(context_, kPadToken);
        const std::size_t take = std::min<std::size_t>(ctx.size(), context_);
        for (std::size_t i = 0; i < take; ++i) {
            tr.context[context_ - take + i] = ctx[ctx.size() - take + i];
        }
        for (int tok : tr.context) {
            if (tok < 0 || tok >= vocab_) {
                throw InvalidArgument("Policy: token index out of range");
            }
        }
        tr.input.resize(static_cast<std::size_t>(context_) * embed_);
        for (int c = 0; c < context_; ++c) {
            const double* row = emb_row(tr.context[c]);
            std::copy(row, row + embed_, tr.input.begin() + c * embed_);
        }
        const std::size_t in_dim = tr.input.size();
        tr.hidden.resize(hidden_);
        for (int j = 0; j < hidden_; ++j) {
            double a = params_[b1_off() + j];
            const double* w = &params_[w1_off() + static_cast<std::size_t>(j) * in_dim];
            for (std::size_t i = 0; i < in_dim; ++i) a += w[i] * tr.input[i];
            tr.hidden[j] = std::tanh(a);
        }
        tr.logits.resize(vocab_);
        for (int v = 0; v < vocab_; ++v) {
            double a = params_[b2_off() + v];
            const double* w = &params_[w2_off() + static_cast<std::size_t>(v) * hidden_];
            for (int j = 0; j < hidden_; ++j) a += w[j] * tr.hidden[j];
            tr.logits[v] = a;
        }
        return tr;
    }

    std::vector<double> forward(const std::vector<int>& ctx) const {
        return softmax(run(ctx).logits);
    }

    // Accumulates d(loss)/d(params) into grad given d(loss)/d(logits).
    void backward(const Trace& tr, const std::vector<double>& dlogits,
                  std::vector<double>& grad) const {
        const std::size_t in_dim = tr.input.size();
        std::vector<double> dh(hidden_, 0.0);
        for (int v = 0; v < vocab_; ++v) {
            const double dv = dlogits[v];
            if (dv == 0.0) continue;
            grad[b2_off() + v] += dv;
            const std::size_t w2 = w2_off() + static_cast<std::size_t>(v) * hidden_;
            for (int j = 0; j < hidden_; ++j) {
                grad[w2 + j] += dv * tr.hidden[j];
                dh[j] += params_[w2 + j] * dv;
            }
        }
        std::vector<double> dx(in_dim, 0.0);
        for (int j = 0; j < hidden_; ++j) {
            const double da = dh[j] * (1.0 - tr.hidden[j] * tr.hidden[j]);
            if (da == 0.0) continue;
            grad[b1_off() + j] += da;
            const std::size_t w1 = w1_off() + static_cast<std::size_t>(j) * in_dim;
            for (std::size_t i = 0; i < in_dim; ++i) {
                grad[w1 + i] += da * tr.input[i];
                dx[i] += params_[w1 + i] * da;
            }
        }
        for (int c = 0; c < context_; ++c) {
            const std::size_t e = emb_off(tr.context[c]);
            for (int i = 0; i < embed_; ++i) grad[e + i] += dx[c * embed_ + i];
        }
    }

    static std::vector<double> softmax(const std::vector<double>& logits) {
        std::vector<double> p(logits.size());
        const double m = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
        for (double& v : p) v /= z;
        return p;
    }

private:
    std::size_t emb_off(int tok) const { return static_cast<std::size_t>(tok) * embed_; }
    const double* emb_row(int tok) const { return &params_[emb_off(tok)]; }
    std::size_t w1_off() const { return static_cast<std::size_t>(vocab_) * embed_; }
    std::size_t b1_off() const {
        return w1_off() + static_cast<std::size_t>(context_) * embed_ * hidden_;
    }
    std::size_t w2_off() const { return b1_off() + hidden_; }
    std::size_t b2_off() const {
        return w2_off() + static_cast<std::size_t>(hidden_) * vocab_;
    }

    int vocab_, embed_, hidden_, context_;
    std::vector<double> params_;
    mutable std::size_t forward_calls_ = 0;
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad;
};

namespace detail {

inline std::vector<int> context_before(const TokenSequence& seq, std::size_t pos) {
    return std::vector<int>(seq.tokens.begin(), seq.tokens.begin() + pos);
}

inline void check_sequence(const TokenSequence& seq, int vocab) {
    if (seq.tokens.size() != seq.kinds.size()) {
        throw InvalidArgument("TokenSequence: tokens/kinds length mismatch");
    }
    for (int tok : seq.tokens) {
        if (tok < 0 || tok >= vocab) {
            throw InvalidArgument("TokenSequence: token index out of range");
        }
    }
}

}  // namespace detail

// Mean negative log-likelihood over positions whose kind is in train_kinds,
// with the gradient w.r.t. every parameter.
inline LossResult ce_loss(const Policy& policy, const TokenSequence& seq,
                          const std::set<TokenKind>& train_kinds) {
    detail::check_sequence(seq, policy.vocab());
    LossResult out;
    out.grad.assign(policy.param_count(), 0.0);
    std::size_t m = 0;
    for (std::size_t pos = 0; pos < seq.size(); ++pos) {
        if (!train_kinds.count(seq.kinds[pos])) continue;
        ++m;
    }
    if (m == 0) throw InvalidArgument("ce_loss: no trainable positions");
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t pos = 0; pos < seq.size(); ++pos) {
        if (!train_kinds.count(seq.kinds[pos])) continue;
        const auto tr = policy.run(detail::context_before(seq, pos));
        const auto p = Policy::softmax(tr.logits);
        const int target = seq.tokens[pos];
        out.loss -= std::log(std::max(p[target], 1e-300)) * inv_m;
        std::vector<double> dlogits = p;
        dlogits[target] -= 1.0;
        for (double& v : dlogits) v *= inv_m;
        policy.backward(tr, dlogits, out.grad);
    }
    return out;
}

// Temperature-scaled distillation: mean over selected positions of
// T^2 * KL(softmax(teacher/T) || softmax(student/T)), natural log, gradient
// w.r.t. the student only. The teacher is consulted but never differentiated.
inline LossResult kd_loss(const Policy& student, const Policy& teacher,
                          const TokenSequence& seq, const std::set<TokenKind>& kinds,
                          double temperature) {
    if (temperature <= 0.0) throw InvalidArgument("kd_loss: temperature must be > 0");
    if (student.vocab() != teacher.vocab()) {
        throw InvalidArgument("kd_loss: vocabulary mismatch");
    }
    detail::check_sequence(seq, student.vocab());
    std::size_t m = 0;
    for (std::size_t pos = 0; pos < seq.size(); ++pos) {
        if (kinds.count(seq.kinds[pos])) ++m;
    }
    if (m == 0) throw InvalidArgument("kd_loss: no positions of the requested kinds");

    LossResult out;
    out.grad.assign(student.param_count(), 0.0);
    const double inv_m = 1.0 / static_cast<double>(m);
    const double t2 = temperature * temperature;
    for (std::size_t pos = 0; pos < seq.size(); ++pos) {
        if (!kinds.count(seq.kinds[pos])) continue;
        const auto ctx = detail::context_before(seq, pos);
        auto soften = [&](std::vector<double> logits) {
            for (double& v : logits) v /= temperature;
            return Policy::softmax(logits);
        };
        const auto p = soften(teacher.run(ctx).logits);
        const auto str = student.run(ctx);
        const auto q = soften(str.logits);
        double kl = 0.0;
        for (int v = 0; v < student.vocab(); ++v) {
            if (p[v] > 0.0) kl += p[v] * (std::log(p[v]) - std::log(std::max(q[v], 1e-300)));
        }
        out.loss += t2 * kl * inv_m;
        // d(T^2 KL)/d(student logit) = T * (q - p)
        std::vector<double> dlogits(student.vocab());
        for (int v = 0; v < student.vocab(); ++v) {
            dlogits[v] = temperature * (q[v] - p[v]) * inv_m;
        }
        student.backward(str, dlogits, out.grad);
    }
    return out;
}

enum class TeacherRole { Action, Reasoning };

struct DistillConfig {
    double temperature = 2.0;
    double lambda = 0.15;
    std::map<DomainTag, TeacherRole> routing = {
        {DomainTag::Robot, TeacherRole::Action},
        {DomainTag::Multimodal, TeacherRole::Reasoning},
    };
};

struct TotalLossResult {
    double total = 0.0;
    double ce = 0.0;
    double kd = 0.0;
    std::vector<double> grad;
};

// L_total = L_VLA + lambda * L_KD, where L_VLA is hard-label CE over all
// non-Prompt positions and the KD term is routed by domain: robot samples
// distill from the action teacher over Action positions, multimodal samples
// from the reasoning teacher over Reasoning positions. Exactly one teacher is
// consulted; the other may be null.
inline TotalLossResult total_loss(const Policy& student, const Policy* action_teacher,
                                  const Policy* reason_teacher,
                                  const TokenSequence& seq, const DistillConfig& cfg,
                                  DomainTag domain) {
    const auto route = cfg.routing.find(domain);
    if (route == cfg.routing.end()) {
        throw InvalidArgument("total_loss: unroutable domain");
    }
    TotalLossResult out;
    const LossResult ce =
        ce_loss(student, seq, {TokenKind::Action, TokenKind::Reasoning});
    out.ce = ce.loss;
    out.grad = ce.grad;
    if (cfg.lambda != 0.0) {
        const bool action_route = route->second == TeacherRole::Action;
        const Policy* teacher = action_route ? action_teacher : reason_teacher;
        if (teacher == nullptr) {
            throw InvalidArgument("total_loss: required teacher is missing");
        }
        const std::set<TokenKind> kd_kinds = {action_route ? TokenKind::Action
                                                           : TokenKind::Reasoning};
        bool has_kd_positions = false;
        for (std::size_t pos = 0; pos < seq.size(); ++pos) {
            if (kd_kinds.count(seq.kinds[pos])) { has_kd_positions = true; break; }
        }
        if (has_kd_positions) {
            const LossResult kd = kd_loss(student, *teacher, seq, kd_kinds,
                                          cfg.temperature);
            out.kd = kd.loss;
            for (std::size_t i = 0; i < out.grad.size(); ++i) {
                out.grad[i] += cfg.lambda * kd.grad[i];
            }
        }
    }
    out.total = out.ce + cfg.lambda * out.kd;
    return out;
}

}  // namespace dualpost
