#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phytune/context_reasoner.hpp"
#include "phytune/mllm_client.hpp"
#include "phytune/prompt_library.hpp"
#include "phytune/score_estimator.hpp"

namespace phytune {

struct FactVerdict {
    PhenomenonFact fact;
    double expected = 0.0;  // E(f_i) in [0, 1]
    bool matched = false;
};

void to_json(nlohmann::json& j, const FactVerdict& v);

struct QualityScores {
    double commonsense = 0.0;
    double semantic = 0.0;
};

struct VerifierOptions {
    double match_threshold = 0.5;  // expected >= threshold counts as matched
    std::size_t workers = 4;       // concurrent fact checks per video
};

// Differentiable scores of one video; `fact_scores[i]` belongs to `verdicts[i]`.
struct VideoEvaluation {
    std::vector<FactVerdict> verdicts;
    std::vector<ag::Var> fact_scores;
    ag::Var commonsense;
    ag::Var semantic;
    std::vector<std::string> warnings;

    QualityScores quality() const { return {commonsense.item(), semantic.item()}; }
};

class Verifier {
public:
    Verifier(const MllmClient& client, PromptLibrary prompts, VerifierOptions options = {});

    ag::Var fact_score(const PixelVideo& video, const PhenomenonFact& fact) const;
    ag::Var commonsense_score(const PixelVideo& video, const std::string& prompt_text) const;
    ag::Var semantic_score(const PixelVideo& video, const std::string& prompt_text) const;

    FactVerdict verify_fact(const PixelVideo& video, const PhenomenonFact& fact) const;
    double verify_commonsense(const PixelVideo& video, const std::string& prompt_text) const;
    double verify_semantic(const PixelVideo& video, const std::string& prompt_text) const;

    // Checks all facts (concurrently, up to `workers` at a time) and returns
    // verdicts in fact-id order.
    std::vector<FactVerdict> verify_facts(const PixelVideo& video, const std::vector<PhenomenonFact>& facts) const;

    VideoEvaluation evaluate(const PixelVideo& video, const std::vector<PhenomenonFact>& facts,
                             const std::string& prompt_text) const;

    bool matched(double expected) const { return expected >= options_.match_threshold; }
    const MllmClient& client() const noexcept { return client_; }
    const VerifierOptions& options() const noexcept { return options_; }

private:
    ag::Var score(const PixelVideo& video, const std::string& question, const ScoreSpec& spec,
                  std::vector<std::string>* warnings) const;
    std::vector<ag::Var> fact_scores(const PixelVideo& video, const std::vector<PhenomenonFact>& facts,
                                     std::vector<std::string>* warnings) const;

    const MllmClient& client_;
    PromptLibrary prompts_;
    VerifierOptions options_;
    ScoreSpec binary_;
    ScoreSpec five_point_;
};

// Unmatched facts in id order.
std::vector<PhenomenonFact> collect_failures(const std::vector<FactVerdict>& verdicts);

}  // namespace phytune
