#include "phytune/verifier.hpp"

#include <algorithm>
#include <future>

#include "phytune/errors.hpp"

namespace phytune {

void to_json(nlohmann::json& j, const FactVerdict& v) {
    j = {{"id", v.fact.id}, {"expected", v.expected}, {"matched", v.matched}};
}

Verifier::Verifier(const MllmClient& client, PromptLibrary prompts, VerifierOptions options)
    : client_(client), prompts_(std::move(prompts)), options_(options), binary_(ScoreSpec::binary()),
      five_point_(ScoreSpec::five_point()) {
    if (!(options_.match_threshold >= 0.0 && options_.match_threshold <= 1.0)) {
        throw PreconditionError("match_threshold must lie in [0, 1]");
    }
    if (options_.workers == 0) options_.workers = 1;
}

ag::Var Verifier::score(const PixelVideo& video, const std::string& question, const ScoreSpec& spec,
                        std::vector<std::string>* warnings) const {
    if (video.empty()) throw PreconditionError("video is empty");
    VocabLogits raw;
    try {
        raw = client_.score_logits(video, question, spec);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw ClientError(std::string("verifier backend failed: ") + e.what());
    }
    return expected_score_var(raw, spec, warnings);
}

ag::Var Verifier::fact_score(const PixelVideo& video, const PhenomenonFact& fact) const {
    if (fact.text.empty()) throw PreconditionError("fact text is empty");
    return score(video, prompts_.render("verify_fact", {{"fact", fact.text}}), binary_, nullptr);
}

ag::Var Verifier::commonsense_score(const PixelVideo& video, const std::string& prompt_text) const {
    return score(video, prompts_.render("verify_commonsense", {{"prompt", prompt_text}}), five_point_, nullptr);
}

ag::Var Verifier::semantic_score(const PixelVideo& video, const std::string& prompt_text) const {
    return score(video, prompts_.render("verify_semantic", {{"prompt", prompt_text}}), five_point_, nullptr);
}

FactVerdict Verifier::verify_fact(const PixelVideo& video, const PhenomenonFact& fact) const {
    const double e = fact_score(video, fact).item();
    return {fact, e, matched(e)};
}

double Verifier::verify_commonsense(const PixelVideo& video, const std::string& prompt_text) const {
    return commonsense_score(video, prompt_text).item();
}

double Verifier::verify_semantic(const PixelVideo& video, const std::string& prompt_text) const {
    return semantic_score(video, prompt_text).item();
}

std::vector<ag::Var> Verifier::fact_scores(const PixelVideo& video, const std::vector<PhenomenonFact>& facts,
                                           std::vector<std::string>* warnings) const {
    std::vector<const PhenomenonFact*> ordered;
    for (const auto& f : facts) ordered.push_back(&f);
    std::stable_sort(ordered.begin(), ordered.end(), [](auto a, auto b) { return a->id < b->id; });

    std::vector<ag::Var> out(ordered.size());
    std::vector<std::vector<std::string>> notes(ordered.size());
    if (options_.workers == 1) {
        for (std::size_t i = 0; i < ordered.size(); ++i) {
            out[i] = score(video, prompts_.render("verify_fact", {{"fact", ordered[i]->text}}), binary_, &notes[i]);
        }
    }
    for (std::size_t start = 0; options_.workers > 1 && start < ordered.size(); start += options_.workers) {
        const std::size_t end = std::min(ordered.size(), start + options_.workers);
        std::vector<std::future<ag::Var>> inflight;
        for (std::size_t i = start; i < end; ++i) {
            const auto question = prompts_.render("verify_fact", {{"fact", ordered[i]->text}});
            inflight.push_back(std::async(std::launch::async, [this, &video, question, &note = notes[i]] {
                return score(video, question, binary_, &note);
            }));
        }
        for (std::size_t i = start; i < end; ++i) out[i] = inflight[i - start].get();
    }
    if (warnings) {
        for (auto& n : notes) warnings->insert(warnings->end(), n.begin(), n.end());
    }
    return out;
}

std::vector<FactVerdict> Verifier::verify_facts(const PixelVideo& video,
                                                const std::vector<PhenomenonFact>& facts) const {
    return evaluate(video, facts, {}).verdicts;
}

VideoEvaluation Verifier::evaluate(const PixelVideo& video, const std::vector<PhenomenonFact>& facts,
                                   const std::string& prompt_text) const {
    if (facts.empty()) throw EmptyFactList("no facts to verify");
    VideoEvaluation out;
    out.fact_scores = fact_scores(video, facts, &out.warnings);
    std::vector<PhenomenonFact> ordered = facts;
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const double e = out.fact_scores[i].item();
        out.verdicts.push_back({ordered[i], e, matched(e)});
    }
    if (!prompt_text.empty()) {
        out.commonsense = commonsense_score(video, prompt_text);
        out.semantic = semantic_score(video, prompt_text);
    }
    return out;
}

std::vector<PhenomenonFact> collect_failures(const std::vector<FactVerdict>& verdicts) {
    std::vector<PhenomenonFact> out;
    for (const auto& v : verdicts) {
        if (!v.matched) out.push_back(v.fact);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

}  // namespace phytune
