#include "phytune/cli.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "phytune/config.hpp"
#include "phytune/context_reasoner.hpp"
#include "phytune/dataset_pipeline.hpp"
#include "phytune/eval_harness.hpp"
#include "phytune/injection_adapter.hpp"
#include "phytune/llm_client.hpp"
#include "phytune/mllm_client.hpp"
#include "phytune/prompt_library.hpp"
#include "phytune/trainer.hpp"
#include "phytune/util.hpp"
#include "phytune/verifier.hpp"

namespace phytune {

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::precondition:
        case ErrorKind::template_error: return kExitUsage;
        case ErrorKind::config: return kExitConfig;
        case ErrorKind::io: return kExitIo;
        case ErrorKind::client:
        case ErrorKind::classifier: return kExitClient;
        case ErrorKind::empty_input: return kExitEmptyInput;
        case ErrorKind::divergence: return kExitDivergence;
        case ErrorKind::parse:
        case ErrorKind::validation:
        case ErrorKind::tag:
        case ErrorKind::json:
        case ErrorKind::empty_support:
        case ErrorKind::shape:
        case ErrorKind::schedule:
        case ErrorKind::range:
        case ErrorKind::empty_fact_list:
        case ErrorKind::negative_component:
        case ErrorKind::incompatible_model: return kExitData;
    }
    return kExitInternal;
}

namespace {

namespace fs = std::filesystem;

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool mock_backends = false;
    std::string output_dir;
};

struct Session {
    CliConfig config;
    std::uint64_t seed = 0;
    fs::path out_dir;
    PromptLibrary prompts;
    std::unique_ptr<LlmClient> llm;

    fs::path under_output(const std::string& rel) const { return out_dir / rel; }
};

Session open_session(const GlobalOptions& g) {
    Session s;
    s.config = g.config_path.empty() ? CliConfig{} : load_config(g.config_path);
    if (g.mock_backends) {
        s.config.backends.llm = "mock";
        s.config.backends.mllm = "mock";
    }
    if (!g.output_dir.empty()) s.config.output_dir = g.output_dir;
    if (g.seed) {
        s.config.train.seed = *g.seed;
        s.config.model.seed = *g.seed;
        s.config.infer.seed = *g.seed;
    }
    s.config.validate();
    s.seed = s.config.train.seed;
    s.out_dir = s.config.output_dir;
    s.prompts = PromptLibrary::bundled();

    if (s.config.backends.llm == "http") {
        s.llm = std::make_unique<HttpLlmClient>(s.config.backends.llm_url, s.config.backends.llm_model, llm_api_key());
    } else {
        const auto fixtures = s.config.backends.fixtures.empty()
                                  ? (fs::path(asset_dir()) / "mock" / "llm_fixtures.json").string()
                                  : s.config.backends.fixtures;
        s.llm = std::make_unique<MockLlmClient>(MockLlmClient::from_json_file(fixtures));
    }
    return s;
}

std::unique_ptr<MllmClient> make_mllm(const Session& s) {
    if (s.config.backends.mllm == "http") {
        return std::make_unique<HttpMllmClient>(s.config.backends.mllm_url, mllm_api_key());
    }
    DifferentiableMockOptions opts;
    opts.seed = s.seed;
    return std::make_unique<DifferentiableMockMllm>(opts);
}

PhysicalContext cached_context(const Session& s, const UserPrompt& prompt, std::ostream& err) {
    const ContextCache cache(s.under_output("contexts").string());
    if (auto hit = cache.load(prompt)) return *hit;
    ReasonerOptions opts;
    opts.max_facts = s.config.max_facts;
    opts.seed = s.seed;
    const ContextReasoner reasoner(*s.llm, s.prompts, opts);
    auto result = reasoner.reason(prompt);
    for (const auto& w : result.warnings) err << "warning: " << w << '\n';
    cache.store(prompt, result.context);
    return result.context;
}

int cmd_reason(const Session& s, const std::string& text, std::ostream& out, std::ostream& err) {
    const auto prompt = UserPrompt::create(text);
    cached_context(s, prompt, err);
    out << ContextCache(s.under_output("contexts").string()).path_for(prompt) << '\n';
    return kExitOk;
}

int cmd_train(Session& s, std::optional<std::size_t> steps, std::ostream& out, std::ostream& err) {
    if (steps) s.config.train.steps = *steps;
    if (s.config.prompts.empty()) throw EmptyInput("config lists no training prompts");
    auto& tc = s.config.train;
    tc.checkpoint_dir = s.under_output(tc.checkpoint_dir.empty() ? "checkpoints" : tc.checkpoint_dir).string();

    ToyDit model(s.config.model);
    model.attach_lora(s.config.adapter);
    auto branch = InjectionBranch::build(model, s.config.adapter);
    const auto mllm = make_mllm(s);
    const Verifier verifier(*mllm, s.prompts, {tc.match_threshold, tc.verifier_workers});

    std::vector<TrainingExample> examples;
    for (const auto& p : s.config.prompts) {
        const auto prompt = UserPrompt::create(p);
        examples.push_back({prompt.text(), cached_context(s, prompt, err),
                            synthetic_latent(prompt.text(), s.config.model, s.seed)});
    }

    const auto log_path = s.under_output("train_log.jsonl");
    fs::create_directories(log_path.parent_path());
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw IoError("cannot write " + log_path.string());
    Trainer trainer(model, branch, verifier, tc);
    const auto reports = trainer.run(examples, &log);
    log.close();

    std::size_t resampled = 0;
    for (const auto& r : reports) resampled += r.resampled ? 1 : 0;
    out << fmt::format("trained {} steps ({} re-sampled); log {}; checkpoints {}\n", reports.size(), resampled,
                       log_path.string(), tc.checkpoint_dir);
    return kExitOk;
}

int cmd_eval(const Session& s, const std::string& records_path, bool plots, std::ostream& out) {
    std::error_code ec;
    if (!fs::exists(records_path, ec)) throw IoError("records file not found: " + records_path);
    const auto summary = aggregate(load_eval_records(records_path));
    const auto dir = s.under_output("eval");
    write_file((dir / "summary.csv").string(), summary_csv(summary));
    write_file((dir / "summary.json").string(), summary_json(summary).dump(2) + "\n");
    out << summary_csv(summary);
    if (plots) {
        for (const auto& p : write_summary_plots(summary, (dir / "plots").string())) out << "plot " << p << '\n';
    }
    return kExitOk;
}

int cmd_curate(const Session& s, const std::string& input, std::ostream& out) {
    const auto source = load_source(input);
    const KeywordRealismClassifier classifier;
    const auto filtered = filter_realistic(source, classifier, s.config.dataset.threshold, s.config.dataset.workers);
    AnnotateOptions opts;
    opts.seed = s.seed;
    opts.workers = s.config.dataset.workers;
    const auto annotated = annotate_all(filtered.accepted, *s.llm, s.prompts, opts);

    const auto dir = s.under_output("dataset");
    const auto manifest = emit(annotated, (dir / "records.jsonl").string());
    std::string drops;
    for (const auto& d : filtered.dropped) {
        drops += nlohmann::json{{"index", d.index}, {"video_ref", d.video_ref}, {"caption", d.caption},
                                {"realism_score", d.realism_score}}
                     .dump() +
                 "\n";
    }
    write_file((dir / "dropped.jsonl").string(), drops);
    out << fmt::format("kept {} of {} records ({} need review); wrote {}\n", manifest.count, source.size(),
                       manifest.needs_review, (dir / "records.jsonl").string());
    return kExitOk;
}

int cmd_infer(const Session& s, const std::string& text, std::optional<int> passes, std::ostream& out,
              std::ostream& err) {
    const auto prompt = UserPrompt::create(text);
    const auto context = cached_context(s, prompt, err);
    auto options = s.config.infer;
    if (passes) options.passes = *passes;

    const auto ckpt_dir = s.under_output(s.config.train.checkpoint_dir.empty() ? "checkpoints"
                                                                                 : s.config.train.checkpoint_dir);
    std::optional<ToyDit> model;
    std::optional<InjectionBranch> branch;
    if (fs::exists(ckpt_dir / "base.ckpt")) {
        model.emplace(ToyDit::from_checkpoint(load_checkpoint((ckpt_dir / "base.ckpt").string())));
        if (fs::exists(ckpt_dir / "lora.ckpt")) model->load_lora(load_checkpoint((ckpt_dir / "lora.ckpt").string()));
        branch.emplace(InjectionBranch::build(*model, s.config.adapter));
        if (fs::exists(ckpt_dir / "branch.ckpt")) branch->load(load_checkpoint((ckpt_dir / "branch.ckpt").string()));
    } else {
        err << "warning: no checkpoint under " << ckpt_dir.string() << "; sampling from an untrained model\n";
        model.emplace(s.config.model);
        branch.emplace(InjectionBranch::build(*model, s.config.adapter));
    }
    const auto mllm = make_mllm(s);
    const Verifier verifier(*mllm, s.prompts, {s.config.train.match_threshold, s.config.train.verifier_workers});
    const auto report = infer(*model, *branch, verifier, prompt, context, options);

    const auto dir = s.under_output("infer");
    const auto key = ContextCache::key(prompt);
    const auto video_path = dir / (key + ".video.json");
    write_file(video_path.string(),
               nlohmann::json{{"shape", report.video.shape()}, {"data", report.video.data()}}.dump() + "\n");
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : report.failures) failures.push_back(f);
    const nlohmann::json summary = {{"prompt", prompt.text()},
                                    {"passes_requested", options.passes},
                                    {"passes_run", report.passes_run},
                                    {"verifier_invoked", report.verifier_invoked},
                                    {"injected_regenerations", report.injected_regenerations},
                                    {"verdicts", report.verdicts},
                                    {"failures", failures},
                                    {"video", video_path.string()}};
    write_file((dir / (key + ".report.json")).string(), summary.dump(2) + "\n");
    out << video_path.string() << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Physics-aware fine-tuning toolkit for a toy video diffusion model", "phytune"};
    app.require_subcommand(1);
    GlobalOptions g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Seed for every stochastic stage");
    app.add_flag("--mock-backends", g.mock_backends, "Use the deterministic mock LLM and verifier");
    app.add_option("--output-dir", g.output_dir, "Directory for all outputs (overrides the config)");

    std::string prompt_text, records_path, input_path;
    std::optional<std::size_t> steps;
    std::optional<int> passes;
    bool plots = false;

    auto* reason = app.add_subcommand("reason", "Reason physical context for a prompt");
    reason->add_option("prompt", prompt_text, "User prompt")->required();
    auto* train = app.add_subcommand("train", "Fine-tune with physics losses and failure injection");
    train->add_option("--steps", steps, "Number of optimizer steps (overrides the config)");
    auto* eval = app.add_subcommand("eval", "Aggregate PC/SA evaluation records");
    eval->add_option("records", records_path, "JSON-lines evaluation records")->required();
    eval->add_flag("--plots", plots, "Also write SVG bar charts");
    auto* curate = app.add_subcommand("curate", "Filter and annotate a caption corpus");
    curate->add_option("input", input_path, "CSV or JSON-lines source records")->required();
    auto* inf = app.add_subcommand("infer", "Generate a clip, optionally with a refinement pass");
    inf->add_option("prompt", prompt_text, "User prompt")->required();
    inf->add_option("--passes", passes, "1, or 2 for verification and refinement")->check(CLI::IsMember({1, 2}));

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    }
    if (seed_opt->count() > 0) g.seed = seed;

    try {
        auto session = open_session(g);
        if (*reason) return cmd_reason(session, prompt_text, out, err);
        if (*train) return cmd_train(session, steps, out, err);
        if (*eval) return cmd_eval(session, records_path, plots, out);
        if (*curate) return cmd_curate(session, input_path, out);
        if (*inf) return cmd_infer(session, prompt_text, passes, out, err);
        err << app.help();
        return kExitUsage;
    } catch (const Error& e) {
        const int code = exit_code_for(e.kind());
        err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        if (code == kExitUsage) err << "run with --help for usage\n";
        return code;
    } catch (const fs::filesystem_error& e) {
        err << "error (io): " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

}  // namespace phytune
