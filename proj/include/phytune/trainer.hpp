#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phytune/context_reasoner.hpp"
#include "phytune/injection_adapter.hpp"
#include "phytune/optimizer.hpp"
#include "phytune/physics_losses.hpp"
#include "phytune/toy_dit.hpp"
#include "phytune/verifier.hpp"

namespace phytune {

struct TrainConfig {
    double beta = kDefaultBeta;
    double skip_injection_prob = 0.1;
    std::size_t verify_every = 1;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double grad_clip = 1.0;  // 0 disables clipping
    std::size_t epochs = 1;
    std::size_t steps = 0;  // overrides epochs * examples when nonzero
    std::uint64_t seed = 0;
    double match_threshold = 0.5;
    std::string phenomena_reduction = "sum";
    // Backpropagate verifier scores into the model when the client allows it.
    bool mllm_gradients = true;
    std::size_t verifier_workers = 1;
    std::size_t checkpoint_every = 0;  // 0: only at the end of a run
    std::string checkpoint_dir;

    // ValidationError on out-of-range settings.
    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainingExample {
    std::string prompt;
    PhysicalContext context;
    Tensor clean_latent;
};

// Synthetic clean latent for a prompt, reproducible from (prompt, seed).
Tensor synthetic_latent(const std::string& prompt, const DitConfig& config, std::uint64_t seed);

struct StepReport {
    std::size_t step = 0;
    int t = 0;
    bool verified = false;
    bool skipped_injection = false;
    bool injected = false;
    bool resampled = false;
    LossBreakdown loss;
    std::vector<FactVerdict> verdicts;
    std::optional<QualityScores> quality;
    std::optional<LossBreakdown> resample_loss;
    std::vector<int> failure_ids;
    std::size_t failure_tokens = 0;

    double mean_fact_score() const;
};

nlohmann::json to_json(const StepReport& r);

// Owns the optimizer state and the seeded stream for one training run.
// Base and clone weights are frozen on construction; the backbone adapters and
// the injection branch's adapters and gates are the trainable set.
class Trainer {
public:
    Trainer(ToyDit& model, InjectionBranch& branch, const Verifier& verifier, TrainConfig config);

    StepReport train_step(const TrainingExample& example);

    // Runs config.steps (or epochs * examples) steps, cycling through the
    // examples, writing one JSON line per step to `log` when given.
    std::vector<StepReport> run(const std::vector<TrainingExample>& examples, std::ostream* log = nullptr,
                                const std::function<void(const StepReport&)>& on_step = {});

    std::vector<NamedParam> trainable_parameters() const;
    // base.ckpt (pristine), lora.ckpt and branch.ckpt under `dir`.
    void save_checkpoints(const std::string& dir) const;

    const TrainConfig& config() const noexcept { return config_; }
    std::size_t steps_taken() const noexcept { return step_; }

private:
    struct PassResult {
        ag::Var total;
        LossBreakdown breakdown;
        std::vector<FactVerdict> verdicts;
        std::optional<QualityScores> quality;
    };

    PassResult evaluate_pass(const ag::Var& noisy, const ag::Var& pred, const ag::Var& noise, int t,
                             const TrainingExample& example, bool verify) const;
    // Saves checkpoints (when configured) and throws DivergenceError.
    [[noreturn]] void diverge() const;
    void update(const PassResult& pass, const std::vector<NamedParam>& params);

    ToyDit& model_;
    InjectionBranch& branch_;
    const Verifier& verifier_;
    TrainConfig config_;
    Reduction reduction_;
    VideoDecoder decoder_;
    Rng rng_;
    SgdMomentum optimizer_;
    std::size_t step_ = 0;
};

struct InferenceOptions {
    int passes = 1;
    int sample_steps = 10;
    std::uint64_t seed = 0;
};

struct InferenceReport {
    Tensor latent;
    Tensor video;
    int passes_run = 1;
    bool verifier_invoked = false;
    std::size_t injected_regenerations = 0;
    std::vector<FactVerdict> verdicts;
    std::vector<PhenomenonFact> failures;
    std::size_t failure_tokens = 0;
};

// Deterministic DDIM sampling from seeded noise, optionally with injection
// over `failure` [L, text_dim].
Tensor sample_latent(const ToyDit& model, const InjectionBranch* branch, const Tensor& text, const Tensor* failure,
                     std::uint64_t seed, int sample_steps);

// Pass 1 generates from the enhanced prompt without injection. With passes=2
// the result is verified and, if any fact fails, regenerated from the same
// noise with the failures injected; otherwise pass 1 is returned as is.
InferenceReport infer(const ToyDit& model, const InjectionBranch& branch, const Verifier& verifier,
                      const UserPrompt& prompt, const PhysicalContext& context, const InferenceOptions& options);

}  // namespace phytune
