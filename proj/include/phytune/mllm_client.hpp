#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "phytune/autograd.hpp"
#include "phytune/score_estimator.hpp"
#include "phytune/video.hpp"

namespace phytune {

// Multimodal verifier: answers a question about a video with logits over its
// whole vocabulary. Questions rendered from the bundled templates start with
// `[check: fact|commonsense|semantic]`.
class MllmClient {
public:
    virtual ~MllmClient() = default;
    virtual std::string name() const = 0;
    // True when the returned logits carry gradients back to the video.
    virtual bool differentiable() const = 0;
    virtual VocabLogits score_logits(const PixelVideo& video, std::string_view question, const ScoreSpec& spec) const = 0;

    std::size_t call_count() const noexcept { return calls_.load(); }

protected:
    void count_call() const { calls_.fetch_add(1); }

private:
    mutable std::atomic<std::size_t> calls_{0};
};

// 32-token vocabulary shared by the mock verifiers.
std::shared_ptr<const Vocabulary> mock_vocabulary();

// Check kind and subject text of a rendered verification question.
struct QuestionParts {
    std::string check;
    std::string subject;
};
QuestionParts parse_question(std::string_view question);

struct DifferentiableMockOptions {
    std::uint64_t seed = 0;
    // Fact mode: logit of the "yes" tokens is gain * (channel mean - center),
    // where the channel is chosen by hashing the fact text.
    double fact_gain = 20.0;
    double fact_center = 0.55;
    // Commonsense mode: mean score 1 + 4 exp(-smoothness * mean squared
    // frame difference); tokens get a Gaussian bump of width sigma around it.
    double smoothness = 50.0;
    double sigma = 1.0;
    // Semantic mode: mean score 1 + 4 exp(-sharpness * |mean rgb - target|^2),
    // target derived from the prompt hash.
    double sharpness = 20.0;
};

// Smooth, deterministic stand-in whose scores are differentiable functions of
// simple video statistics.
class DifferentiableMockMllm : public MllmClient {
public:
    explicit DifferentiableMockMllm(DifferentiableMockOptions options = {});

    std::string name() const override { return "mock-mllm-differentiable"; }
    bool differentiable() const override { return true; }
    VocabLogits score_logits(const PixelVideo& video, std::string_view question, const ScoreSpec& spec) const override;

    // Channel a fact is judged on.
    std::size_t fact_channel(std::string_view fact_text) const;
    // Per-channel colour target of the semantic check.
    std::vector<double> semantic_target(std::string_view prompt) const;
    const DifferentiableMockOptions& options() const noexcept { return options_; }

private:
    DifferentiableMockOptions options_;
    std::shared_ptr<const Vocabulary> vocab_;
};

// Rigged verifier: the first rule whose needle occurs in the question decides
// the logits. Tokens without a logit are excluded (-inf). Not differentiable.
class ScriptedMllmClient : public MllmClient {
public:
    struct Rule {
        std::string needle;
        LogitVector logits;
    };

    ScriptedMllmClient(std::vector<Rule> rules, LogitVector fallback);

    // Every fact matched with certainty; commonsense and semantic at `score`.
    static ScriptedMllmClient all_matched(int score = 5);
    // Facts whose text contains one of `failing` get all mass on "no".
    static ScriptedMllmClient failing_facts(std::vector<std::string> failing, int score = 5);

    std::string name() const override { return "mock-mllm-scripted"; }
    bool differentiable() const override { return false; }
    VocabLogits score_logits(const PixelVideo& video, std::string_view question, const ScoreSpec& spec) const override;

private:
    std::vector<Rule> rules_;
    LogitVector fallback_;
    std::shared_ptr<const Vocabulary> vocab_;
};

// Remote verifier speaking a small JSON protocol:
//   POST {base_url}/score {question, support, video:{shape, data}}
//   -> {vocab: [tokens], logits: [numbers]}
class HttpMllmClient : public MllmClient {
public:
    HttpMllmClient(std::string base_url, std::string api_key, int timeout_seconds = 120);

    std::string name() const override { return "http-mllm"; }
    bool differentiable() const override { return false; }
    VocabLogits score_logits(const PixelVideo& video, std::string_view question, const ScoreSpec& spec) const override;

private:
    std::string base_url_;
    std::string api_key_;
    int timeout_seconds_;
};

}  // namespace phytune
