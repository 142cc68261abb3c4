#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dualpost/gradcheck.hpp"
#include "dualpost/policy.hpp"

using namespace dualpost;

namespace {

TokenSequence make_seq(std::mt19937_64& rng, int vocab, int len) {
    std::uniform_int_distribution<int> tok(0, vocab - 1);
    std::uniform_int_distribution<int> kind(0, 2);
    TokenSequence seq;
    for (int i = 0; i < len; ++i) {
        seq.tokens.push_back(tok(rng));
        seq.kinds.push_back(static_cast<TokenKind>(kind(rng)));
    }
    // Guarantee at least one trainable position of each kind.
    seq.kinds[len - 1] = TokenKind::Action;
    seq.kinds[len - 2] = TokenKind::Reasoning;
    return seq;
}

// Independent KD oracle: soften both logit vectors by hand and sum
// T^2 * KL(p || q) over the requested positions.
double kd_oracle(const Policy& student, const Policy& teacher,
                 const TokenSequence& seq, const std::set<TokenKind>& kinds,
                 double temperature) {
    double total = 0.0;
    std::size_t m = 0;
    for (std::size_t pos = 0; pos < seq.tokens.size(); ++pos) {
        if (!kinds.count(seq.kinds[pos])) continue;
        ++m;
        std::vector<int> ctx(seq.tokens.begin(), seq.tokens.begin() + pos);
        auto tl = teacher.run(ctx).logits;
        auto sl = student.run(ctx).logits;
        for (double& v : tl) v /= temperature;
        for (double& v : sl) v /= temperature;
        const auto p = Policy::softmax(tl);
        const auto q = Policy::softmax(sl);
        double kl = 0.0;
        for (std::size_t v = 0; v < p.size(); ++v) {
            if (p[v] > 0) kl += p[v] * (std::log(p[v]) - std::log(q[v]));
        }
        total += temperature * temperature * kl;
    }
    return total / static_cast<double>(m);
}

}  // namespace

TEST_CASE("softmax is a probability distribution") {
    const auto p = Policy::softmax({1.0, -2.0, 0.5, 1000.0});
    double sum = 0.0;
    for (double v : p) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
    const auto result = run_gradcheck(1234, 5, {1.0, 2.0});
    CHECK(result.max_ce_error <= 1e-5);
    CHECK(result.max_kd_error <= 1e-5);
}

TEST_CASE("distilling from an identical teacher is a zero") {
    std::mt19937_64 rng(7);
    const auto policy = Policy::random_init(9, 3, 5, 4, 42);
    const auto seq = make_seq(rng, 9, 8);
    const auto kd = kd_loss(policy, policy, seq, {TokenKind::Action}, 2.0);
    CHECK_THAT(kd.loss, Catch::Matchers::WithinAbs(0.0, 1e-12));
    for (double g : kd.grad) CHECK_THAT(g, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("kd matches an independently computed softened KL") {
    std::mt19937_64 rng(8);
    for (double T : {0.5, 1.0, 2.0, 4.0}) {
        const auto student = Policy::random_init(7, 3, 4, 3, 100 + static_cast<int>(T));
        const auto teacher = Policy::random_init(7, 3, 4, 3, 200 + static_cast<int>(T));
        const auto seq = make_seq(rng, 7, 7);
        const std::set<TokenKind> kinds = {TokenKind::Action, TokenKind::Reasoning};
        const auto kd = kd_loss(student, teacher, seq, kinds, T);
        CHECK(kd.loss >= 0.0);
        CHECK_THAT(kd.loss,
                   Catch::Matchers::WithinAbs(kd_oracle(student, teacher, seq, kinds, T),
                                              1e-12));
    }
}

TEST_CASE("total loss recomposes exactly as ce + lambda * kd") {
    std::mt19937_64 rng(9);
    const auto student = Policy::random_init(9, 3, 5, 4, 1);
    const auto action_teacher = Policy::random_init(9, 3, 5, 4, 2);
    const auto reason_teacher = Policy::random_init(9, 3, 5, 4, 3);
    const auto seq = make_seq(rng, 9, 8);
    DistillConfig cfg;
    cfg.lambda = 0.15;
    const auto total = total_loss(student, &action_teacher, &reason_teacher, seq, cfg,
                                  DomainTag::Robot);
    const auto ce = ce_loss(student, seq, {TokenKind::Action, TokenKind::Reasoning});
    const auto kd = kd_loss(student, action_teacher, seq, {TokenKind::Action},
                            cfg.temperature);
    CHECK_THAT(total.total, Catch::Matchers::WithinAbs(ce.loss + 0.15 * kd.loss, 1e-12));
    CHECK_THAT(total.ce, Catch::Matchers::WithinAbs(ce.loss, 1e-15));
    CHECK_THAT(total.kd, Catch::Matchers::WithinAbs(kd.loss, 1e-15));
    REQUIRE(total.grad.size() == ce.grad.size());
    for (std::size_t i = 0; i < total.grad.size(); ++i) {
        CHECK_THAT(total.grad[i],
                   Catch::Matchers::WithinAbs(ce.grad[i] + 0.15 * kd.grad[i], 1e-12));
    }
}

TEST_CASE("routing consults exactly one teacher") {
    std::mt19937_64 rng(10);
    const auto student = Policy::random_init(9, 3, 5, 4, 1);
    const auto action_teacher = Policy::random_init(9, 3, 5, 4, 2);
    const auto reason_teacher = Policy::random_init(9, 3, 5, 4, 3);
    const auto seq = make_seq(rng, 9, 8);
    DistillConfig cfg;

    action_teacher.reset_forward_calls();
    reason_teacher.reset_forward_calls();
    total_loss(student, &action_teacher, &reason_teacher, seq, cfg, DomainTag::Robot);
    CHECK(action_teacher.forward_calls() > 0);
    CHECK(reason_teacher.forward_calls() == 0);

    action_teacher.reset_forward_calls();
    reason_teacher.reset_forward_calls();
    total_loss(student, &action_teacher, &reason_teacher, seq, cfg,
               DomainTag::Multimodal);
    CHECK(action_teacher.forward_calls() == 0);
    CHECK(reason_teacher.forward_calls() > 0);

    // The unused teacher may legitimately be absent.
    CHECK_NOTHROW(total_loss(student, &action_teacher, nullptr, seq, cfg,
                             DomainTag::Robot));
    CHECK_THROWS_AS(total_loss(student, nullptr, &reason_teacher, seq, cfg,
                               DomainTag::Robot),
                    InvalidArgument);
}

TEST_CASE("loss masking: prompt positions never contribute") {
    const auto policy = Policy::random_init(6, 2, 3, 3, 5);
    TokenSequence seq;
    seq.tokens = {1, 2, 3, 4};
    seq.kinds = {TokenKind::Prompt, TokenKind::Prompt, TokenKind::Action,
                 TokenKind::Prompt};
    const auto all = ce_loss(policy, seq, {TokenKind::Action, TokenKind::Reasoning});
    const auto action_only = ce_loss(policy, seq, {TokenKind::Action});
    CHECK(all.loss == action_only.loss);
    CHECK_THROWS_AS(ce_loss(policy, seq, {TokenKind::Reasoning}), InvalidArgument);
}

TEST_CASE("loss functions validate their inputs") {
    const auto a = Policy::random_init(6, 2, 3, 3, 5);
    const auto b = Policy::random_init(7, 2, 3, 3, 5);
    TokenSequence seq;
    seq.tokens = {1, 2};
    seq.kinds = {TokenKind::Prompt, TokenKind::Action};
    CHECK_THROWS_AS(kd_loss(a, b, seq, {TokenKind::Action}, 2.0), InvalidArgument);
    CHECK_THROWS_AS(kd_loss(a, a, seq, {TokenKind::Action}, 0.0), InvalidArgument);
    TokenSequence bad = seq;
    bad.tokens[1] = 6;
    CHECK_THROWS_AS(ce_loss(a, bad, {TokenKind::Action}), InvalidArgument);
}
