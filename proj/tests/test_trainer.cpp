#include <doctest.h>

#include <sstream>

#include "phytune/errors.hpp"
#include "phytune/mllm_client.hpp"
#include "phytune/trainer.hpp"
#include "support.hpp"

using namespace phytune;
using namespace phytune::testing;

namespace {

DitConfig small_config() {
    DitConfig c;
    c.frames = 2;
    c.height = 4;
    c.width = 4;
    c.model_dim = 16;
    c.text_dim = 8;
    c.timesteps = 20;
    c.video_height = 8;
    c.video_width = 8;
    return c;
}

TrainingExample candle_example(const DitConfig& cfg) {
    PhysicalContext ctx;
    ctx.attributes = {{"Gravity", "cat", "candle", "", ""}};
    ctx.phenomena = {{1, "The candle changes position from upright to lying down.", {}},
                     {2, "The flame keeps pointing upward.", {}},
                     {3, "Melted wax runs toward the lower end.", {}}};
    ctx.enhanced_prompt = "A candle tips over and lies on its side.";
    return {"a candle falling to its side", ctx, synthetic_latent("a candle falling to its side", cfg, 0)};
}

struct Rig {
    ToyDit model;
    InjectionBranch branch;
    explicit Rig(const DitConfig& cfg, AdapterConfig ac = {4, 8.0})
        : model([&] {
              ToyDit m(cfg);
              m.attach_lora(ac);
              return m;
          }()),
          branch(InjectionBranch::build(model, ac)) {}
};

std::map<std::string, Tensor> snapshot(const std::vector<NamedParam>& params) {
    std::map<std::string, Tensor> out;
    for (const auto& p : params) out[p.name] = p.var.value();
    return out;
}

}  // namespace

TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.beta = 0.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.skip_injection_prob = 1.5;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.verify_every = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK_THROWS_AS(nlohmann::json({{"betta", 0.1}}).get<TrainConfig>(), ConfigError);
    const nlohmann::json j = TrainConfig{};
    CHECK(j.get<TrainConfig>().beta == kDefaultBeta);
    CHECK(TrainConfig{}.skip_injection_prob == 0.1);
}

TEST_CASE("all-matched verifier takes the no-failure path") {
    const auto cfg = small_config();
    Rig rig(cfg);
    const auto mock = ScriptedMllmClient::all_matched(5);
    const Verifier verifier(mock, PromptLibrary::bundled(), {0.5, 1});
    Trainer trainer(rig.model, rig.branch, verifier, {});
    const auto ex = candle_example(cfg);
    for (int i = 0; i < 5; ++i) {
        const auto r = trainer.train_step(ex);
        CHECK(r.verified);
        CHECK_FALSE(r.injected);
        CHECK_FALSE(r.resampled);
        CHECK(r.failure_ids.empty());
        CHECK(r.loss.phenomena == 0.0);
        CHECK(r.loss.commonsense == 0.0);
        CHECK(r.loss.semantic == 0.0);
        CHECK(r.loss.total == r.loss.denoise);
        CHECK(r.mean_fact_score() == 1.0);
    }
}

TEST_CASE("a failing fact triggers a re-sampled injected pass") {
    const auto cfg = small_config();
    Rig rig(cfg);
    const auto mock = ScriptedMllmClient::failing_facts({"The flame keeps pointing upward."}, 3);
    const Verifier verifier(mock, PromptLibrary::bundled(), {0.5, 1});
    TrainConfig tc;
    tc.skip_injection_prob = 0.0;
    Trainer trainer(rig.model, rig.branch, verifier, tc);
    const auto ex = candle_example(cfg);
    const auto r = trainer.train_step(ex);
    CHECK(r.resampled);
    CHECK(r.injected);
    CHECK(r.failure_ids == std::vector<int>{2});
    CHECK(r.failure_tokens == rig.branch.fact_encoder().tokenize(ex.context.phenomena[1].text).size());
    REQUIRE(r.resample_loss.has_value());
    CHECK(std::abs(r.loss.phenomena - 1.0) < 1e-12);
    const double q = (1 - 3.0 / 5) * (1 - 3.0 / 5);
    CHECK(std::abs(r.loss.commonsense - q) < 1e-12);
    CHECK(std::abs(r.loss.total - (r.loss.denoise + 0.1 * (1.0 + 2 * q))) < 1e-12);
}

TEST_CASE("skipped steps never re-sample") {
    const auto cfg = small_config();
    Rig rig(cfg);
    const auto mock = ScriptedMllmClient::failing_facts({"The candle"}, 3);
    const Verifier verifier(mock, PromptLibrary::bundled(), {0.5, 1});
    TrainConfig tc;
    tc.skip_injection_prob = 1.0;
    Trainer trainer(rig.model, rig.branch, verifier, tc);
    const auto r = trainer.train_step(candle_example(cfg));
    CHECK(r.skipped_injection);
    CHECK_FALSE(r.resampled);
    CHECK(r.failure_ids == std::vector<int>{1});
}

TEST_CASE("base and clone weights stay frozen over training") {
    const auto cfg = small_config();
    Rig rig(cfg);
    const DifferentiableMockMllm mock;
    const Verifier verifier(mock, PromptLibrary::bundled(), {0.5, 1});
    TrainConfig tc;
    tc.steps = 100;
    tc.learning_rate = 0.05;
    const auto base_before = snapshot(rig.model.base_parameters());
    const auto clone_before = snapshot(rig.branch.clone_parameters());
    const auto lora_before = snapshot(rig.model.lora_parameters());
    const auto branch_before = snapshot(rig.branch.trainable_parameters());
    Trainer trainer(rig.model, rig.branch, verifier, tc);
    for (const auto& p : rig.model.base_parameters()) CHECK_FALSE(p.var.requires_grad());
    for (const auto& p : trainer.trainable_parameters()) CHECK(p.var.requires_grad());
    const auto reports = trainer.run({candle_example(cfg)});
    CHECK(reports.size() == 100);
    CHECK(snapshot(rig.model.base_parameters()) == base_before);
    CHECK(snapshot(rig.branch.clone_parameters()) == clone_before);
    CHECK_FALSE(snapshot(rig.model.lora_parameters()) == lora_before);
    CHECK_FALSE(snapshot(rig.branch.trainable_parameters()) == branch_before);
}

TEST_CASE("identical runs give identical step logs") {
    const auto cfg = small_config();
    auto run_once = [&] {
        Rig rig(cfg);
        const DifferentiableMockMllm mock;
        const Verifier verifier(mock, PromptLibrary::bundled(), {0.5, 1});
        TrainConfig tc;
        tc.steps = 20;
        tc.seed = 9;
        Trainer trainer(rig.model, rig.branch, verifier, tc);
        std::ostringstream log;
        trainer.run({candle_example(cfg)}, &log);
        return log.str();
    };
    const auto a = run_once();
    CHECK(a == run_once());
    CHECK(std::count(a.begin(), a.end(), '\n') == 20);
}

TEST_CASE("every step report satisfies the loss identity") {
    const auto cfg = small_config();
    Rig rig(cfg);
    const DifferentiableMockMllm mock;
    const Verifier verifier(mock, PromptLibrary::bundled(), {0.5, 1});
    TrainConfig tc;
    tc.steps = 30;
    Trainer trainer(rig.model, rig.branch, verifier, tc);
    for (const auto& r : trainer.run({candle_example(cfg)})) {
        const auto& l = r.loss;
        CHECK(std::abs(l.total - (l.denoise + l.beta * (l.phenomena + l.commonsense + l.semantic))) < 1e-12);
        double phen = 0;
        for (const auto& v : r.verdicts) phen += (1 - v.expected) * (1 - v.expected);
        CHECK(std::abs(l.phenomena - phen) < 1e-12);
        if (r.resample_loss) {
            const auto& s = *r.resample_loss;
            CHECK(std::abs(s.total - (s.denoise + s.beta * (s.phenomena + s.commonsense + s.semantic))) < 1e-12);
        }
    }
}

TEST_CASE("verification frequency") {
    const auto cfg = small_config();
    Rig rig(cfg);
    const DifferentiableMockMllm mock;
    const Verifier verifier(mock, PromptLibrary::bundled(), {0.5, 1});
    TrainConfig tc;
    tc.steps = 6;
    tc.verify_every = 3;
    Trainer trainer(rig.model, rig.branch, verifier, tc);
    const auto reports = trainer.run({candle_example(cfg)});
    for (const auto& r : reports) {
        CHECK(r.verified == (r.step % 3 == 0));
        if (!r.verified) {
            CHECK(r.verdicts.empty());
            CHECK(r.loss.total == r.loss.denoise);
        }
    }
}

TEST_CASE("non-finite losses stop training with checkpoints") {
    const auto cfg = small_config();
    Rig rig(cfg);
    const DifferentiableMockMllm mock;
    const Verifier verifier(mock, PromptLibrary::bundled(), {0.5, 1});
    const auto dir = scratch_dir("divergence");
    TrainConfig tc;
    tc.checkpoint_dir = dir.string();
    Trainer trainer(rig.model, rig.branch, verifier, tc);
    auto ex = candle_example(cfg);
    ex.clean_latent[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(trainer.train_step(ex), DivergenceError);
    CHECK(std::filesystem::exists(dir / "lora.ckpt"));
    CHECK(std::filesystem::exists(dir / "branch.ckpt"));
}

TEST_CASE("run rejects empty input and mismatched latents") {
    const auto cfg = small_config();
    Rig rig(cfg);
    const DifferentiableMockMllm mock;
    const Verifier verifier(mock, PromptLibrary::bundled(), {0.5, 1});
    Trainer trainer(rig.model, rig.branch, verifier, {});
    CHECK_THROWS_AS(trainer.run({}), EmptyInput);
    auto ex = candle_example(cfg);
    ex.clean_latent = Tensor({1, 2, 3}, 0.0);
    CHECK_THROWS_AS(trainer.train_step(ex), ShapeError);
}

TEST_CASE("two-pass inference") {
    const auto cfg = small_config();
    Rig rig(cfg);
    const auto ex = candle_example(cfg);
    const auto prompt = UserPrompt::create(ex.prompt);
    InferenceOptions one{1, 6, 3};
    InferenceOptions two{2, 6, 3};

    SUBCASE("a single pass never calls the verifier") {
        const auto mock = ScriptedMllmClient::failing_facts({"The candle"});
        const Verifier verifier(mock, PromptLibrary::bundled());
        const auto r = infer(rig.model, rig.branch, verifier, prompt, ex.context, one);
        CHECK_FALSE(r.verifier_invoked);
        CHECK(mock.call_count() == 0);
        CHECK(r.passes_run == 1);
    }
    SUBCASE("all matched keeps the first pass") {
        const auto mock = ScriptedMllmClient::all_matched();
        const Verifier verifier(mock, PromptLibrary::bundled());
        const auto a = infer(rig.model, rig.branch, verifier, prompt, ex.context, one);
        const auto b = infer(rig.model, rig.branch, verifier, prompt, ex.context, two);
        CHECK(b.verifier_invoked);
        CHECK(b.injected_regenerations == 0);
        CHECK(a.latent == b.latent);
        CHECK(a.video == b.video);
    }
    SUBCASE("a failure regenerates once with the failure injected") {
        const auto mock = ScriptedMllmClient::failing_facts({"Melted wax"});
        const Verifier verifier(mock, PromptLibrary::bundled());
        // Open the gates so the injected pass is observable.
        Rng rng(61);
        for (std::size_t b = 0; b < rig.branch.block_count(); ++b) {
            rig.branch.mutable_block(b).gate.weight.mutable_value() =
                rng.normal_tensor({cfg.model_dim, cfg.model_dim}, 0.1);
        }
        const auto a = infer(rig.model, rig.branch, verifier, prompt, ex.context, one);
        const auto b = infer(rig.model, rig.branch, verifier, prompt, ex.context, two);
        CHECK(b.injected_regenerations == 1);
        CHECK(b.passes_run == 2);
        REQUIRE(b.failures.size() == 1);
        CHECK(b.failures[0].id == 3);
        CHECK(b.failure_tokens > 0);
        CHECK_FALSE(a.latent == b.latent);
    }
    CHECK_THROWS_AS(infer(rig.model, rig.branch, Verifier(ScriptedMllmClient::all_matched(), PromptLibrary::bundled()),
                          prompt, ex.context, {3, 6, 0}),
                    PreconditionError);
}
