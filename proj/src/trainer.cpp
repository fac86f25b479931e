#include "phytune/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <set>

#include "phytune/errors.hpp"
#include "phytune/util.hpp"

namespace phytune {

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("invalid training config: " + msg); };
    if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta must be positive");
    if (!(skip_injection_prob >= 0.0 && skip_injection_prob <= 1.0)) fail("skip_injection_prob must lie in [0, 1]");
    if (verify_every == 0) fail("verify_every must be at least 1");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
    if (grad_clip < 0.0) fail("grad_clip must be non-negative");
    if (epochs == 0 && steps == 0) fail("epochs or steps must be positive");
    if (!(match_threshold >= 0.0 && match_threshold <= 1.0)) fail("match_threshold must lie in [0, 1]");
    if (phenomena_reduction != "sum" && phenomena_reduction != "mean") fail("phenomena_reduction must be sum or mean");
    if (verifier_workers == 0) fail("verifier_workers must be at least 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"beta", c.beta},
         {"skip_injection_prob", c.skip_injection_prob},
         {"verify_every", c.verify_every},
         {"learning_rate", c.learning_rate},
         {"momentum", c.momentum},
         {"grad_clip", c.grad_clip},
         {"epochs", c.epochs},
         {"steps", c.steps},
         {"seed", c.seed},
         {"match_threshold", c.match_threshold},
         {"phenomena_reduction", c.phenomena_reduction},
         {"mllm_gradients", c.mllm_gradients},
         {"verifier_workers", c.verifier_workers},
         {"checkpoint_every", c.checkpoint_every},
         {"checkpoint_dir", c.checkpoint_dir}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (!j.is_object()) throw ConfigError("training config must be an object");
    nlohmann::json defaults = c;
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) throw ConfigError("unknown training config key '" + key + "'");
    }
    try {
        c.beta = j.value("beta", c.beta);
        c.skip_injection_prob = j.value("skip_injection_prob", c.skip_injection_prob);
        c.verify_every = j.value("verify_every", c.verify_every);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.momentum = j.value("momentum", c.momentum);
        c.grad_clip = j.value("grad_clip", c.grad_clip);
        c.epochs = j.value("epochs", c.epochs);
        c.steps = j.value("steps", c.steps);
        c.seed = j.value("seed", c.seed);
        c.match_threshold = j.value("match_threshold", c.match_threshold);
        c.phenomena_reduction = j.value("phenomena_reduction", c.phenomena_reduction);
        c.mllm_gradients = j.value("mllm_gradients", c.mllm_gradients);
        c.verifier_workers = j.value("verifier_workers", c.verifier_workers);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("training config: ") + e.what());
    }
}

Tensor synthetic_latent(const std::string& prompt, const DitConfig& config, std::uint64_t seed) {
    Rng rng(fnv1a64(text::canonical(prompt)) ^ (seed * 0x9e3779b97f4a7c15ULL));
    return rng.normal_tensor(config.latent_shape(), 0.5);
}

double StepReport::mean_fact_score() const {
    if (verdicts.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& v : verdicts) acc += v.expected;
    return acc / static_cast<double>(verdicts.size());
}

nlohmann::json to_json(const StepReport& r) {
    nlohmann::json j = {{"step", r.step},
                        {"t", r.t},
                        {"verified", r.verified},
                        {"skipped_injection", r.skipped_injection},
                        {"injected", r.injected},
                        {"resampled", r.resampled},
                        {"loss", r.loss},
                        {"verdicts", r.verdicts},
                        {"failure_ids", r.failure_ids}};
    if (r.quality) {
        j["commonsense"] = r.quality->commonsense;
        j["semantic"] = r.quality->semantic;
    }
    if (r.resample_loss) j["resample_loss"] = *r.resample_loss;
    return j;
}

Trainer::Trainer(ToyDit& model, InjectionBranch& branch, const Verifier& verifier, TrainConfig config)
    : model_(model),
      branch_(branch),
      verifier_(verifier),
      config_((config.validate(), std::move(config))),
      reduction_(parse_reduction(config_.phenomena_reduction)),
      decoder_(model.config()),
      rng_(config_.seed),
      optimizer_(config_.learning_rate, config_.momentum, config_.grad_clip) {
    if (branch_.block_count() != model_.block_count()) throw IncompatibleModel("branch was built for another model");
    if (!model_.has_lora()) model_.attach_lora(branch_.config());
    model_.freeze_base();
    for (auto& p : branch_.clone_parameters()) p.var.set_requires_grad(false);
}

std::vector<NamedParam> Trainer::trainable_parameters() const {
    auto params = model_.lora_parameters();
    auto extra = branch_.trainable_parameters();
    params.insert(params.end(), extra.begin(), extra.end());
    return params;
}

Trainer::PassResult Trainer::evaluate_pass(const ag::Var& noisy, const ag::Var& pred, const ag::Var& noise, int t,
                                           const TrainingExample& example, bool verify) const {
    PassResult out;
    const auto denoise = denoise_loss(pred, noise);
    // Non-finite predictions would otherwise surface as verifier input errors.
    if (!std::isfinite(denoise.item())) diverge();
    if (!verify) {
        out.total = denoise;
        out.breakdown = total_loss(denoise.item(), 0.0, 0.0, 0.0, config_.beta);
        return out;
    }

    auto clean = model_.schedule().estimate_clean(noisy, pred, t);
    if (!(config_.mllm_gradients && verifier_.client().differentiable())) {
        clean = ag::Var::constant(clean.value());
    }
    const auto video = decoder_.decode_video(clean);

    ag::Var phen = ag::Var::constant(Tensor::scalar(0.0));
    if (!example.context.phenomena.empty()) {
        auto eval = verifier_.evaluate(video, example.context.phenomena, {});
        phen = phenomena_loss(eval.fact_scores, reduction_);
        out.verdicts = std::move(eval.verdicts);
    }
    const auto com_score = verifier_.commonsense_score(video, example.prompt);
    const auto sem_score = verifier_.semantic_score(video, example.prompt);
    const auto com = quality_loss(com_score);
    const auto sem = quality_loss(sem_score);
    out.quality = QualityScores{com_score.item(), sem_score.item()};

    out.total = total_loss(denoise, ag::add(ag::add(phen, com), sem), config_.beta);
    out.breakdown = total_loss(denoise.item(), phen.item(), com.item(), sem.item(), config_.beta);
    return out;
}

void Trainer::diverge() const {
    if (!config_.checkpoint_dir.empty()) save_checkpoints(config_.checkpoint_dir);
    throw DivergenceError("non-finite loss at step " + std::to_string(step_));
}

void Trainer::update(const PassResult& pass, const std::vector<NamedParam>& params) {
    if (!std::isfinite(pass.total.item()) || !std::isfinite(pass.breakdown.total)) diverge();
    optimizer_.zero_grad(params);
    ag::backward(pass.total);
    optimizer_.step(params);
}

StepReport Trainer::train_step(const TrainingExample& example) {
    const auto& cfg = model_.config();
    if (example.clean_latent.shape() != cfg.latent_shape()) throw ShapeError("example latent does not match the model");

    StepReport report;
    report.step = step_;
    // Fixed draw order per step: timestep, noise, skip decision.
    report.t = rng_.uniform_int(1, cfg.timesteps);
    const Tensor eps = rng_.normal_tensor(cfg.latent_shape());
    report.skipped_injection = rng_.uniform() < config_.skip_injection_prob;
    report.verified = step_ % config_.verify_every == 0;

    const auto noise = ag::Var::constant(eps);
    const auto noisy = ag::Var::constant(model_.schedule().corrupt(example.clean_latent, eps, report.t));
    const std::string& conditioning =
        example.context.enhanced_prompt.empty() ? example.prompt : example.context.enhanced_prompt;
    const auto text = ag::Var::constant(model_.text_encoder().encode(conditioning));
    const auto params = trainable_parameters();

    auto first = evaluate_pass(noisy, model_.forward(noisy, text, report.t), noise, report.t, example, report.verified);
    report.loss = first.breakdown;
    report.verdicts = first.verdicts;
    report.quality = first.quality;
    update(first, params);

    const auto failures = collect_failures(report.verdicts);
    for (const auto& f : failures) report.failure_ids.push_back(f.id);
    if (report.verified && !failures.empty() && !report.skipped_injection && branch_.enabled()) {
        const auto ids = branch_.failure_token_ids(failures);
        report.failure_tokens = ids.size();
        const auto failure = ag::Var::constant(branch_.fact_encoder().embed_ids(ids));
        auto pred = forward_with_injection(model_, branch_, noisy, text, failure, report.t);
        auto second = evaluate_pass(noisy, pred, noise, report.t, example, true);
        report.injected = true;
        report.resampled = true;
        report.resample_loss = second.breakdown;
        update(second, params);
    }

    ++step_;
    return report;
}

std::vector<StepReport> Trainer::run(const std::vector<TrainingExample>& examples, std::ostream* log,
                                     const std::function<void(const StepReport&)>& on_step) {
    if (examples.empty()) throw EmptyInput("no training examples");
    const std::size_t total = config_.steps ? config_.steps : config_.epochs * examples.size();
    std::vector<StepReport> reports;
    reports.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        reports.push_back(train_step(examples[i % examples.size()]));
        if (log) *log << to_json(reports.back()).dump() << '\n';
        if (on_step) on_step(reports.back());
        if (config_.checkpoint_every && !config_.checkpoint_dir.empty() && (i + 1) % config_.checkpoint_every == 0) {
            save_checkpoints(config_.checkpoint_dir);
        }
    }
    if (!config_.checkpoint_dir.empty()) save_checkpoints(config_.checkpoint_dir);
    return reports;
}

void Trainer::save_checkpoints(const std::string& dir) const {
    const std::filesystem::path root(dir);
    save_checkpoint((root / "base.ckpt").string(), model_.base_checkpoint());
    save_checkpoint((root / "lora.ckpt").string(), model_.lora_checkpoint());
    save_checkpoint((root / "branch.ckpt").string(), branch_.checkpoint());
}

Tensor sample_latent(const ToyDit& model, const InjectionBranch* branch, const Tensor& text, const Tensor* failure,
                     std::uint64_t seed, int sample_steps) {
    const auto& schedule = model.schedule();
    Rng rng(seed);
    Tensor x = rng.normal_tensor(model.config().latent_shape());
    const auto text_var = ag::Var::constant(text);
    const auto failure_var = failure ? ag::Var::constant(*failure) : ag::Var();
    const auto steps = schedule.sampling_timesteps(sample_steps);
    for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
        const auto x_var = ag::Var::constant(x);
        const auto pred = (branch && failure) ? forward_with_injection(model, *branch, x_var, text_var, failure_var, steps[i])
                                              : model.forward(x_var, text_var, steps[i]);
        x = schedule.ddim_step(x, pred.value(), steps[i], steps[i + 1]);
    }
    return x;
}

InferenceReport infer(const ToyDit& model, const InjectionBranch& branch, const Verifier& verifier,
                      const UserPrompt& prompt, const PhysicalContext& context, const InferenceOptions& options) {
    if (options.passes != 1 && options.passes != 2) throw PreconditionError("passes must be 1 or 2");
    const VideoDecoder decoder(model.config());
    const std::string& conditioning = context.enhanced_prompt.empty() ? prompt.text() : context.enhanced_prompt;
    const Tensor text = model.text_encoder().encode(conditioning);

    InferenceReport report;
    report.latent = sample_latent(model, nullptr, text, nullptr, options.seed, options.sample_steps);
    report.video = decoder.decode(report.latent);
    if (options.passes == 1 || context.phenomena.empty()) return report;

    report.verifier_invoked = true;
    const PixelVideo video{ag::Var::constant(report.video)};
    report.verdicts = verifier.verify_facts(video, context.phenomena);
    report.failures = collect_failures(report.verdicts);
    if (report.failures.empty() || !branch.enabled()) return report;

    const auto ids = branch.failure_token_ids(report.failures);
    report.failure_tokens = ids.size();
    const Tensor failure = branch.fact_encoder().embed_ids(ids);
    report.latent = sample_latent(model, &branch, text, &failure, options.seed, options.sample_steps);
    report.video = decoder.decode(report.latent);
    report.passes_run = 2;
    report.injected_regenerations = 1;
    return report;
}

}  // namespace phytune
