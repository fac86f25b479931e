#include <doctest.h>

#include "phytune/errors.hpp"
#include "phytune/noise_schedule.hpp"
#include "phytune/text_encoder.hpp"
#include "phytune/toy_dit.hpp"
#include "support.hpp"

using namespace phytune;
using namespace phytune::testing;

namespace {

Tensor forward_value(const ToyDit& m, const Tensor& latent, const Tensor& text, int t) {
    return m.forward(ag::Var::constant(latent), ag::Var::constant(text), t).value();
}

}  // namespace

TEST_CASE("config validation") {
    DitConfig c;
    CHECK_NOTHROW(c.validate());
    c.patch = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.heads = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.blocks = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json({{"frames", 4}, {"bogus", 1}}).get<DitConfig>(), ConfigError);
    const nlohmann::json j = DitConfig{};
    CHECK(j.get<DitConfig>().model_dim == DitConfig{}.model_dim);
}

TEST_CASE("zero inputs give the golden output") {
    DitConfig cfg;
    const ToyDit model(cfg);
    const auto out = forward_value(model, Tensor(cfg.latent_shape(), 0.0), Tensor({3, cfg.text_dim}, 0.0), 10);
    CHECK(out.shape() == cfg.latent_shape());
    CHECK(out.all_finite());
    CHECK(matches_golden("dit_zero_forward.txt", tensor_hash(out)));
}

TEST_CASE("forward is deterministic and seed dependent") {
    DitConfig cfg;
    Rng rng(41);
    const auto x = rng.normal_tensor(cfg.latent_shape());
    const auto text = rng.normal_tensor({5, cfg.text_dim});
    const ToyDit a(cfg), b(cfg);
    CHECK(forward_value(a, x, text, 7) == forward_value(a, x, text, 7));
    CHECK(forward_value(a, x, text, 7) == forward_value(b, x, text, 7));
    cfg.seed = 1;
    const ToyDit c(cfg);
    CHECK_FALSE(forward_value(c, x, text, 7) == forward_value(a, x, text, 7));
    CHECK_FALSE(forward_value(a, x, text, 8) == forward_value(a, x, text, 7));
}

TEST_CASE("shape mismatches are rejected") {
    DitConfig cfg;
    const ToyDit model(cfg);
    CHECK_THROWS_AS(forward_value(model, Tensor({4, 4, 6, 8}, 0.0), Tensor({2, 16}, 0.0), 1), ShapeError);
    CHECK_THROWS_AS(forward_value(model, Tensor(cfg.latent_shape(), 0.0), Tensor({2, 15}, 0.0), 1), ShapeError);
    CHECK_THROWS_AS(denoise_loss(Tensor({2}, 0.0), Tensor({3}, 0.0)), ShapeError);
}

TEST_CASE("denoise loss fixtures and oracle") {
    Rng rng(42);
    const auto a = rng.normal_tensor({4, 4, 8, 8});
    CHECK(denoise_loss(a, a) == 0.0);
    Tensor b = a;
    for (auto& v : b.data()) v += 1.0;
    CHECK(std::abs(denoise_loss(b, a) - 1.0) < 1e-12);
    const auto c = rng.normal_tensor({4, 4, 8, 8});
    double oracle = 0;
    for (std::size_t i = 0; i < a.size(); ++i) oracle += (a[i] - c[i]) * (a[i] - c[i]) / static_cast<double>(a.size());
    CHECK(std::abs(denoise_loss(a, c) - oracle) <= 1e-12);
    CHECK(std::abs(denoise_loss(ag::Var::constant(a), ag::Var::constant(c)).item() - oracle) <= 1e-12);
}

TEST_CASE("noise schedule") {
    const NoiseSchedule s(50);
    CHECK(s.alpha_bar(0) == 1.0);
    for (int t = 1; t < 50; ++t) {
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        CHECK(s.alpha_bar(t) > 0.0);
    }
    CHECK_THROWS_AS(s.check(50), ScheduleError);
    CHECK_THROWS_AS(s.check(-1), ScheduleError);
    CHECK_THROWS_AS(NoiseSchedule(50, "cosine"), ScheduleError);
    CHECK_THROWS_AS(NoiseSchedule(1), ScheduleError);

    Rng rng(43);
    const auto x0 = rng.normal_tensor({4, 4, 8, 8});
    const auto eps = rng.normal_tensor({4, 4, 8, 8});
    CHECK(s.estimate_clean(x0, eps, 0) == x0);
    for (int t = 1; t < 50; ++t) {
        const auto xt = s.corrupt(x0, eps, t);
        CHECK(max_abs_diff(s.estimate_clean(xt, eps, t), x0) < 1e-6);
    }
    CHECK_THROWS_AS(s.corrupt(x0, eps, 50), ScheduleError);

    const auto steps = s.sampling_timesteps(10);
    CHECK(steps.front() == 49);
    CHECK(steps.back() == 0);
    CHECK(std::is_sorted(steps.rbegin(), steps.rend()));
    // A DDIM step to t = 0 with the true noise lands on the clean latent.
    CHECK(max_abs_diff(s.ddim_step(s.corrupt(x0, eps, 30), eps, 30, 0), x0) < 1e-9);
}

TEST_CASE("decoder: zero latent is mid-gray, pixel changes bounded by latent changes") {
    DitConfig cfg;
    const VideoDecoder dec(cfg);
    const auto gray = dec.decode(Tensor(cfg.latent_shape(), 0.0));
    CHECK(gray.shape() == cfg.video_shape());
    for (double v : gray.data()) CHECK(v == 0.5);

    Rng rng(44);
    for (int i = 0; i < 200; ++i) {
        const auto a = rng.normal_tensor(cfg.latent_shape(), 2.0);
        auto b = a;
        for (auto& v : b.data()) v += rng.normal() * 0.3;
        const double in_delta = max_abs_diff(a, b);
        CHECK(max_abs_diff(dec.decode(a), dec.decode(b)) <= in_delta + 1e-15);
    }
    const auto fixed = Rng(7).normal_tensor(cfg.latent_shape());
    CHECK(matches_golden("decoder_seed7.txt", tensor_hash(dec.decode(fixed))));
    CHECK(dec.decode(fixed) == dec.decode(ag::Var::constant(fixed)).value());
}

TEST_CASE("denoise loss gradient with respect to the latent") {
    DitConfig cfg;
    const ToyDit model(cfg);
    Rng rng(45);
    const auto x = rng.normal_tensor(cfg.latent_shape());
    const auto text = ag::Var::constant(rng.normal_tensor({4, cfg.text_dim}));
    const auto target = ag::Var::constant(rng.normal_tensor(cfg.latent_shape()));
    auto objective = [&](const ag::Var& v) { return denoise_loss(model.forward(v, text, 12), target); };
    auto var = ag::Var::parameter(x);
    ag::backward(objective(var));
    const auto g = var.grad();
    std::vector<double> analytic, numeric;
    Tensor probe = x;
    for (int n = 0; n < 64; ++n) {
        const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(x.size())));
        const double orig = probe[i];
        probe[i] = orig + 1e-5;
        const double up = objective(ag::Var::constant(probe)).item();
        probe[i] = orig - 1e-5;
        const double down = objective(ag::Var::constant(probe)).item();
        probe[i] = orig;
        analytic.push_back(g[i]);
        numeric.push_back((up - down) / 2e-5);
    }
    CHECK(gradient_rel_error(analytic, numeric) < 1e-5);
}

TEST_CASE("adapter composition equals the materialized effective weight") {
    Rng rng(46);
    AdapterConfig ac{4, 8.0};
    const auto layer = Linear::create(6, 5, rng);
    auto adapter = LoraAdapter::create(6, 5, ac, rng);
    adapter.up.mutable_value() = rng.normal_tensor({4, 5});
    const auto x = rng.normal_tensor({3, 6});
    const auto adapted = layer.apply(ag::Var::constant(x), &adapter).value();
    const Linear dense{ag::Var::constant(layer.effective_weight(adapter)), ag::Var::constant(layer.bias.value())};
    CHECK(max_abs_diff(adapted, dense.apply(ag::Var::constant(x)).value()) < 1e-10);
    // A fresh adapter is the identity on its layer.
    const auto fresh = LoraAdapter::create(6, 5, ac, rng);
    CHECK(layer.apply(ag::Var::constant(x), &fresh).value() == layer.apply(ag::Var::constant(x)).value());
    CHECK_THROWS_AS((AdapterConfig{0, 1.0}.validate()), PreconditionError);
}

TEST_CASE("base and adapter checkpoints restore the model") {
    const auto dir = scratch_dir("dit_ckpt");
    DitConfig cfg;
    cfg.seed = 5;
    ToyDit model(cfg);
    model.attach_lora({});
    Rng rng(47);
    for (const auto& p : model.lora_parameters()) {
        ag::Var v = p.var;
        for (auto& x : v.mutable_value().data()) x = rng.normal() * 0.01;
    }
    save_checkpoint((dir / "base.ckpt").string(), model.base_checkpoint());
    save_checkpoint((dir / "lora.ckpt").string(), model.lora_checkpoint());
    auto restored = ToyDit::from_checkpoint(load_checkpoint((dir / "base.ckpt").string()));
    restored.load_lora(load_checkpoint((dir / "lora.ckpt").string()));
    const auto x = rng.normal_tensor(cfg.latent_shape());
    const auto text = rng.normal_tensor({3, cfg.text_dim});
    CHECK(forward_value(model, x, text, 9) == forward_value(restored, x, text, 9));

    Checkpoint wrong = model.base_checkpoint();
    wrong.kind = "lora";
    CHECK_THROWS_AS(ToyDit::from_checkpoint(wrong), IncompatibleModel);
}

TEST_CASE("text encoder") {
    const TextEncoder enc(512, 16, 3);
    CHECK(enc.tokenize("") == std::vector<std::size_t>{TextEncoder::kPad});
    const auto ids = enc.tokenize("The candle falls, the candle");
    CHECK(ids.size() == 5);
    CHECK(ids[1] == ids[4]);
    for (auto id : ids) CHECK(id >= 2);
    CHECK(enc.encode("a b c").shape() == Shape{3, 16});
    CHECK(enc.encode("x y") == TextEncoder(512, 16, 3).encode("x y"));
}
