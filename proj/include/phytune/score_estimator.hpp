#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "phytune/autograd.hpp"

namespace phytune {

// Score support and the verifier tokens that vote for each score value.
// Token matching is case-insensitive; the same token may not appear in two groups.
class ScoreSpec {
public:
    static ScoreSpec create(std::map<int, std::vector<std::string>> groups);
    // {0: "0","no"}, {1: "1","yes"}
    static ScoreSpec binary();
    // 1..5 with digit and English word variants.
    static ScoreSpec five_point();

    const std::vector<int>& support() const noexcept { return support_; }
    const std::map<int, std::vector<std::string>>& groups() const noexcept { return groups_; }
    int min_score() const { return support_.front(); }
    int max_score() const { return support_.back(); }
    std::optional<int> score_of(std::string_view token) const;

    nlohmann::json to_json() const;
    static ScoreSpec from_json(const nlohmann::json& j);

private:
    std::vector<int> support_;
    std::map<int, std::vector<std::string>> groups_;
    std::map<std::string, int> lookup_;  // lowercased token -> score
};

// Token strings of a verifier vocabulary, indexed by token id.
class Vocabulary {
public:
    explicit Vocabulary(std::vector<std::string> tokens);
    std::size_t size() const noexcept { return tokens_.size(); }
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    // Every id whose token matches case-insensitively.
    std::vector<std::size_t> find_all_ci(std::string_view token) const;
    std::optional<std::size_t> find(std::string_view token) const;

private:
    std::vector<std::string> tokens_;
};

// Full-vocabulary verifier output. `logits` is a 1-D variable so that
// differentiable backends can carry gradients back to the video.
struct VocabLogits {
    std::shared_ptr<const Vocabulary> vocab;
    ag::Var logits;
};

// Logits of valid score tokens keyed by the vocabulary token string.
// Tokens absent from the map count as -inf.
using LogitVector = std::map<std::string, double>;

struct FilteredLogits {
    LogitVector logits;
    std::vector<std::string> warnings;
};

// Vocabulary positions of the score tokens and the score each one votes for.
struct TokenSelection {
    std::vector<std::size_t> vocab_index;
    std::vector<double> token_score;
    std::vector<std::string> warnings;
};

struct ScoreDistribution {
    std::map<int, double> probability;
    double expected = 0.0;
};

// Expected score of a token set: returns E and writes dE/dz into `gradient`
// (same length as `logits`). Entries equal to -inf are excluded. When
// `probability` is nonempty it receives the per-token softmax mass.
double expected_score_core(std::span<const double> logits, std::span<const double> token_score,
                           std::span<double> gradient, std::span<double> probability = {});

double expected_score(const LogitVector& logits, const ScoreSpec& spec);
ScoreDistribution score_distribution(const LogitVector& logits, const ScoreSpec& spec);

TokenSelection select_score_tokens(const Vocabulary& vocab, const ScoreSpec& spec);
FilteredLogits filter_valid_tokens(const VocabLogits& raw, const ScoreSpec& spec);

// Differentiable path: gathers the valid token logits and applies the
// expected-score estimator with its analytic gradient.
ag::Var expected_score_var(const VocabLogits& raw, const ScoreSpec& spec, std::vector<std::string>* warnings = nullptr);

}  // namespace phytune
