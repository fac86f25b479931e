#include <doctest.h>

#include "phytune/errors.hpp"
#include "phytune/mllm_client.hpp"
#include "phytune/physics_losses.hpp"
#include "support.hpp"
#include "toy_objective.hpp"

using namespace phytune;
using namespace phytune::testing;

namespace {

// Independent closed forms.
double oracle_phen(const std::vector<double>& e) {
    double s = 0;
    for (double x : e) s += (1.0 - x) * (1.0 - x);
    return s;
}
double oracle_quality(double score) { return (1.0 - score / 5.0) * (1.0 - score / 5.0); }

}  // namespace

TEST_CASE("phenomena loss fixtures") {
    CHECK(phenomena_loss(std::vector<double>{1.0, 1.0, 1.0}) == 0.0);
    CHECK(std::abs(phenomena_loss(std::vector<double>{0.5, 0.5}) - 0.5) <= 1e-12);
    CHECK(std::abs(phenomena_loss(std::vector<double>{0.75}) - 0.0625) <= 1e-12);
    CHECK(std::abs(phenomena_loss(std::vector<double>{0.5, 0.5}, Reduction::mean) - 0.25) <= 1e-12);
    CHECK_THROWS_AS(phenomena_loss(std::vector<double>{}), EmptyFactList);
    CHECK_THROWS_AS(phenomena_loss(std::vector<double>{1.2}), RangeError);
    CHECK_THROWS_AS(phenomena_loss(std::vector<double>{std::nan("")}), RangeError);
}

TEST_CASE("quality loss fixtures") {
    for (auto* f : {&commonsense_loss, &semantic_loss}) {
        CHECK((*f)(5.0) == 0.0);
        CHECK(std::abs((*f)(4.0) - 0.04) <= 1e-12);
        CHECK(std::abs((*f)(1.0) - 0.64) <= 1e-12);
        CHECK_THROWS_AS((*f)(0.5), RangeError);
        CHECK_THROWS_AS((*f)(5.5), RangeError);
    }
}

TEST_CASE("total loss fixtures") {
    CHECK(std::abs(total_loss(0.2, 0.3, 0.1, 0.1, 0.1).total - 0.25) <= 1e-12);
    CHECK(total_loss(0, 0, 0, 0, 0.1).total == 0.0);
    CHECK(total_loss(1.0, 0, 0, 0, 0.1).total == 1.0);
    CHECK_THROWS_AS(total_loss(-0.1, 0, 0, 0, 0.1), NegativeComponent);
    CHECK_THROWS_AS(total_loss(0, 0, -1e-9, 0, 0.1), NegativeComponent);
    CHECK_THROWS_AS(total_loss(0, 0, 0, 0, 0.0), PreconditionError);
    CHECK(parse_reduction("mean") == Reduction::mean);
    CHECK_THROWS_AS(parse_reduction("median"), ConfigError);
}

TEST_CASE("losses match closed forms on random inputs, are non-negative and zero at target") {
    Rng rng(31);
    for (int i = 0; i < 2000; ++i) {
        std::vector<double> e(static_cast<std::size_t>(1 + rng.uniform_int(0, 8)));
        for (auto& x : e) x = rng.uniform();
        const double lp = phenomena_loss(e);
        CHECK(std::abs(lp - oracle_phen(e)) <= 1e-12);
        CHECK(lp >= 0.0);
        const double s = 1.0 + 4.0 * rng.uniform();
        CHECK(std::abs(commonsense_loss(s) - oracle_quality(s)) <= 1e-12);
        CHECK(commonsense_loss(s) >= 0.0);
    }
    CHECK(phenomena_loss(std::vector<double>{1.0}) == 0.0);
    CHECK(semantic_loss(5.0) == 0.0);
}

TEST_CASE("total is linear in beta") {
    Rng rng(32);
    for (int i = 0; i < 500; ++i) {
        const double d = rng.uniform(), p = rng.uniform(), c = rng.uniform(), s = rng.uniform();
        const double b1 = 0.01 + rng.uniform(), b2 = 0.01 + rng.uniform();
        const double t1 = total_loss(d, p, c, s, b1).total;
        const double t2 = total_loss(d, p, c, s, b2).total;
        CHECK(std::abs((t2 - t1) / (b2 - b1) - (p + c + s)) <= 1e-9);
        CHECK(std::abs(t1 - (d + b1 * (p + c + s))) <= 1e-12);
    }
}

TEST_CASE("loss gradients match central differences") {
    Rng rng(33);
    const double h = 1e-5;
    for (int i = 0; i < 200; ++i) {
        std::vector<double> e(static_cast<std::size_t>(1 + rng.uniform_int(0, 6)));
        for (auto& x : e) x = 0.05 + 0.9 * rng.uniform();
        for (auto red : {Reduction::sum, Reduction::mean}) {
            const auto g = phenomena_loss_gradient(e, red);
            for (std::size_t k = 0; k < e.size(); ++k) {
                auto up = e, down = e;
                up[k] += h;
                down[k] -= h;
                const double numeric = (phenomena_loss(up, red) - phenomena_loss(down, red)) / (2 * h);
                CHECK(rel_err(g[k], numeric) < 1e-6);
            }
        }
        const double s = 1.1 + 3.8 * rng.uniform();
        const double numeric = (commonsense_loss(s + h) - commonsense_loss(s - h)) / (2 * h);
        CHECK(rel_err(quality_loss_gradient(s), numeric) < 1e-6);

        // Graph versions agree with the analytic gradients.
        std::vector<ag::Var> vars;
        for (double x : e) vars.push_back(ag::Var::parameter(Tensor::scalar(x)));
        ag::backward(phenomena_loss(vars));
        const auto g = phenomena_loss_gradient(e);
        for (std::size_t k = 0; k < e.size(); ++k) CHECK(rel_err(vars[k].grad()[0], g[k]) < 1e-12);
        auto sv = ag::Var::parameter(Tensor::scalar(s));
        ag::backward(quality_loss(sv));
        CHECK(rel_err(sv.grad()[0], quality_loss_gradient(s)) < 1e-12);
    }
}

TEST_CASE("end-to-end objective gradient with respect to the noisy latent") {
    DitConfig cfg;
    const ToyDit model(cfg);
    const DifferentiableMockMllm mock;
    const Verifier verifier(mock, PromptLibrary::bundled(), {0.5, 1});
    Rng rng(34);
    ToyObjective objective{model,
                           verifier,
                           VideoDecoder(cfg),
                           model.text_encoder().encode("a candle falling to its side"),
                           rng.normal_tensor(cfg.latent_shape()),
                           20,
                           {{1, "The candle lies down.", {}}, {2, "The flame points up.", {}}},
                           "a candle falling to its side"};
    const auto x = rng.normal_tensor(cfg.latent_shape());
    CHECK(end_to_end_gradient_error(objective, x, 48, rng) < 1e-3);
}
