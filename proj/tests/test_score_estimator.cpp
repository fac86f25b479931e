#include <doctest.h>

#include "phytune/errors.hpp"
#include "phytune/mllm_client.hpp"
#include "phytune/score_estimator.hpp"
#include "support.hpp"

using namespace phytune;
using namespace phytune::testing;

namespace {

// Random spec with up to `max_tokens` tokens and logits for a random subset
// (at least one) of them.
struct RandomCase {
    ScoreSpec spec;
    LogitVector logits;
    std::vector<double> z;
    std::vector<double> scores;
};

RandomCase random_case(Rng& rng, std::size_t max_tokens = 12) {
    const int groups = 1 + rng.uniform_int(0, 5);
    std::map<int, std::vector<std::string>> g;
    int next_token = 0;
    const std::size_t budget = 1 + static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(max_tokens)));
    std::size_t used = 0;
    for (int i = 0; i < groups && used < budget; ++i) {
        const int score = rng.uniform_int(-3, 10);
        if (g.contains(score)) continue;
        const int n = 1 + rng.uniform_int(0, 3);
        for (int k = 0; k < n && used < budget; ++k, ++used) g[score].push_back("t" + std::to_string(next_token++));
        if (g[score].empty()) g.erase(score);
    }
    if (g.empty()) g[1] = {"t_only"};
    RandomCase c{ScoreSpec::create(g), {}, {}, {}};
    for (const auto& [score, tokens] : g) {
        for (const auto& tok : tokens) {
            if (c.logits.empty() || rng.uniform() < 0.85) {
                const double z = rng.normal() * 4.0;
                c.logits[tok] = z;
                c.z.push_back(z);
                c.scores.push_back(score);
            }
        }
    }
    return c;
}

}  // namespace

TEST_CASE("single token carries all the mass") {
    CHECK(expected_score({{"3", 0.7}}, ScoreSpec::five_point()) == 3.0);
    CHECK(expected_score({{"3", -40.0}}, ScoreSpec::five_point()) == 3.0);
}

TEST_CASE("two-group fixture matches the softmax oracle") {
    const auto spec = ScoreSpec::create({{1, {"1", "one"}}, {5, {"5"}}});
    const LogitVector logits = {{"1", 2.0}, {"one", 1.0}, {"5", 2.0}};
    const double e1 = std::exp(2.0), e2 = std::exp(1.0);
    const double p1 = (e1 + e2) / (2 * e1 + e2);
    const double p5 = e1 / (2 * e1 + e2);
    const auto dist = score_distribution(logits, spec);
    CHECK(dist.probability.at(1) == doctest::Approx(p1).epsilon(1e-14));
    CHECK(dist.probability.at(5) == doctest::Approx(p5).epsilon(1e-14));
    CHECK(std::abs(dist.expected - (p1 + 5 * p5)) < 1e-12);
    CHECK(dist.expected == doctest::Approx(2.689).epsilon(1e-3));
    CHECK(dist.probability.at(1) == doctest::Approx(0.5777).epsilon(1e-4));
}

TEST_CASE("binary fixture gives three quarters") {
    const LogitVector logits = {{"yes", std::log(3.0)}, {"0", 0.0}};
    CHECK(std::abs(expected_score(logits, ScoreSpec::binary()) - 0.75) < 1e-15);
}

TEST_CASE("tokens outside the spec and -inf tokens are excluded") {
    const auto spec = ScoreSpec::binary();
    const double ninf = -std::numeric_limits<double>::infinity();
    CHECK(expected_score({{"yes", 0.0}, {"no", 0.0}, {"banana", 100.0}}, spec) == 0.5);
    CHECK(expected_score({{"yes", 0.0}, {"no", ninf}}, spec) == 1.0);
    CHECK_THROWS_AS(expected_score({{"banana", 1.0}}, spec), EmptySupportError);
    CHECK_THROWS_AS(expected_score({{"yes", ninf}}, spec), EmptySupportError);
}

TEST_CASE("token matching ignores case") {
    const auto spec = ScoreSpec::five_point();
    CHECK(spec.score_of("One") == 1);
    CHECK(spec.score_of("FIVE") == 5);
    CHECK_FALSE(spec.score_of("six").has_value());
    CHECK(expected_score({{"FOUR", 1.0}}, spec) == 4.0);
}

TEST_CASE("spec construction rejects bad groups") {
    CHECK_THROWS_AS(ScoreSpec::create({}), PreconditionError);
    CHECK_THROWS_AS(ScoreSpec::create({{0, {"a"}}, {1, {"A"}}}), PreconditionError);
    CHECK_THROWS_AS(ScoreSpec::create({{0, {}}}), PreconditionError);
    const auto spec = ScoreSpec::five_point();
    const auto back = ScoreSpec::from_json(spec.to_json());
    CHECK(back.groups() == spec.groups());
    CHECK_THROWS_AS(ScoreSpec::from_json(nlohmann::json{{"support", {1}}}), JsonError);
}

TEST_CASE("filtering keeps exactly the score tokens") {
    auto vocab = std::make_shared<const Vocabulary>(std::vector<std::string>{"1", "one", "banana"});
    const auto spec = ScoreSpec::create({{1, {"1", "one"}}, {0, {"fünf"}}});
    VocabLogits raw{vocab, ag::Var::constant(Tensor({3}, std::vector<double>{0.1, 0.2, 9.0}))};
    const auto f = filter_valid_tokens(raw, spec);
    CHECK(f.logits.size() == 2);
    CHECK(f.logits.contains("1"));
    CHECK(f.logits.contains("one"));
    REQUIRE(f.warnings.size() == 1);
    CHECK(f.warnings[0].find("fünf") != std::string::npos);
}

TEST_CASE("five-point spec over the mock vocabulary resolves every case variant") {
    const auto vocab = mock_vocabulary();
    const auto spec = ScoreSpec::five_point();
    std::size_t expected = 0;
    for (const auto& tok : vocab->tokens()) {
        const auto low = text::to_lower(tok);
        for (const char* t : {"1", "2", "3", "4", "5", "one", "two", "three", "four", "five"}) expected += low == t;
    }
    VocabLogits raw{vocab, ag::Var::constant(Tensor({vocab->size()}, 0.0))};
    CHECK(filter_valid_tokens(raw, spec).logits.size() == expected);
    CHECK(select_score_tokens(*vocab, spec).vocab_index.size() == expected);
}

TEST_CASE("oracle equivalence, normalization, shift invariance and bounds") {
    Rng rng(2024);
    for (int i = 0; i < 2000; ++i) {
        const auto c = random_case(rng);
        const double e = expected_score(c.logits, c.spec);
        CHECK(std::abs(e - oracle_expected(c.z, c.scores)) <= 1e-9);
        CHECK(e >= c.spec.min_score());
        CHECK(e <= c.spec.max_score());

        const auto dist = score_distribution(c.logits, c.spec);
        double total = 0;
        for (const auto& [s, p] : dist.probability) total += p;
        CHECK(std::abs(total - 1.0) <= 1e-12);

        LogitVector shifted = c.logits;
        const double shift = rng.normal() * 50.0;
        for (auto& [_, z] : shifted) z += shift;
        CHECK(std::abs(expected_score(shifted, c.spec) - e) <= 1e-9);
    }
}

TEST_CASE("analytic gradient matches central differences") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const auto c = random_case(rng);
        std::vector<double> grad(c.z.size());
        expected_score_core(c.z, c.scores, grad);
        for (std::size_t k = 0; k < c.z.size(); ++k) {
            // Five-point stencil on the long double oracle keeps truncation error negligible.
            const double h = 1e-3;
            auto at = [&](double offset) {
                auto z = c.z;
                z[k] += offset;
                return oracle_expected(z, c.scores);
            };
            const double numeric = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
            CHECK(rel_err(grad[k], numeric, 1e-6) < 1e-6);
        }
    }
}

TEST_CASE("raising a top-score logit never lowers the expectation") {
    Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
        const auto c = random_case(rng);
        const int top = c.spec.max_score();
        for (const auto& tok : c.spec.groups().at(top)) {
            if (!c.logits.contains(tok)) continue;
            auto bumped = c.logits;
            bumped[tok] += std::abs(rng.normal()) * 3.0;
            CHECK(expected_score(bumped, c.spec) >= expected_score(c.logits, c.spec) - 1e-12);
        }
    }
}

TEST_CASE("graph version propagates the analytic gradient to the vocabulary logits") {
    const auto vocab = mock_vocabulary();
    Rng rng(8);
    auto logits = ag::Var::parameter(rng.normal_tensor({vocab->size()}));
    const auto spec = ScoreSpec::five_point();
    auto e = expected_score_var({vocab, logits}, spec);
    ag::backward(e);
    const auto g = logits.grad();
    const auto numeric = numeric_gradient(
        [&](const Tensor& z) { return expected_score_var({vocab, ag::Var::constant(z)}, spec).item(); },
        logits.value());
    CHECK(gradient_rel_error(g.data(), numeric) < 1e-7);
    // Tokens outside the spec get no gradient.
    CHECK(g[*vocab->find("banana")] == 0.0);
    CHECK(g[*vocab->find("yes")] == 0.0);
}
