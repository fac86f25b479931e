#include "phytune/score_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "phytune/errors.hpp"
#include "phytune/util.hpp"

namespace phytune {

ScoreSpec ScoreSpec::create(std::map<int, std::vector<std::string>> groups) {
    if (groups.empty()) throw PreconditionError("score spec needs a nonempty support");
    ScoreSpec spec;
    for (auto& [score, tokens] : groups) {
        if (tokens.empty()) throw PreconditionError("score " + std::to_string(score) + " has no tokens");
        spec.support_.push_back(score);
        for (const auto& tok : tokens) {
            if (tok.empty()) throw PreconditionError("empty token in score group");
            const auto key = text::to_lower(tok);
            auto [it, inserted] = spec.lookup_.emplace(key, score);
            if (!inserted && it->second != score) {
                throw PreconditionError("token '" + tok + "' appears in groups " + std::to_string(it->second) +
                                        " and " + std::to_string(score));
            }
        }
    }
    spec.groups_ = std::move(groups);
    return spec;
}

ScoreSpec ScoreSpec::binary() {
    return create({{0, {"0", "no"}}, {1, {"1", "yes"}}});
}

ScoreSpec ScoreSpec::five_point() {
    return create({{1, {"1", "one"}}, {2, {"2", "two"}}, {3, {"3", "three"}}, {4, {"4", "four"}}, {5, {"5", "five"}}});
}

std::optional<int> ScoreSpec::score_of(std::string_view token) const {
    auto it = lookup_.find(text::to_lower(token));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

nlohmann::json ScoreSpec::to_json() const {
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [score, tokens] : groups_) groups[std::to_string(score)] = tokens;
    return {{"support", support_}, {"groups", groups}};
}

ScoreSpec ScoreSpec::from_json(const nlohmann::json& j) {
    try {
        std::map<int, std::vector<std::string>> groups;
        for (const auto& [key, tokens] : j.at("groups").items()) {
            groups[std::stoi(key)] = tokens.get<std::vector<std::string>>();
        }
        auto support = j.at("support").get<std::vector<int>>();
        std::sort(support.begin(), support.end());
        std::vector<int> keys;
        for (const auto& [k, _] : groups) keys.push_back(k);
        if (support != keys) throw PreconditionError("score spec groups must cover exactly the support");
        return create(std::move(groups));
    } catch (const nlohmann::json::exception& e) {
        throw JsonError(std::string("malformed score spec: ") + e.what());
    } catch (const std::invalid_argument&) {
        throw JsonError("malformed score spec: non-integer score key");
    }
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {}

std::vector<std::size_t> Vocabulary::find_all_ci(std::string_view token) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (text::iequals(tokens_[i], token)) out.push_back(i);
    }
    return out;
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i] == token) return i;
    }
    return std::nullopt;
}

double expected_score_core(std::span<const double> logits, std::span<const double> token_score,
                           std::span<double> gradient, std::span<double> probability) {
    if (logits.size() != token_score.size() || gradient.size() != logits.size() ||
        (!probability.empty() && probability.size() != logits.size())) {
        throw ShapeError("expected_score_core: length mismatch");
    }
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double z : logits) {
        if (std::isnan(z) || z == std::numeric_limits<double>::infinity()) {
            throw PreconditionError("logits must be finite or -inf");
        }
        max_logit = std::max(max_logit, z);
    }
    if (!std::isfinite(max_logit)) throw EmptySupportError("no score token carries a finite logit");

    std::vector<double> w(logits.size(), 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (std::isfinite(logits[k])) {
            w[k] = std::exp(logits[k] - max_logit);
            total += w[k];
        }
    }
    double expected = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        w[k] /= total;
        expected += w[k] * token_score[k];
        if (w[k] > 0.0) {
            lo = std::min(lo, token_score[k]);
            hi = std::max(hi, token_score[k]);
        }
    }
    // Rounding in the weighted sum can step an ulp outside the support.
    expected = std::clamp(expected, lo, hi);
    // dE/dz_k = p_k (s_k - E)
    for (std::size_t k = 0; k < logits.size(); ++k) gradient[k] = w[k] * (token_score[k] - expected);
    if (!probability.empty()) std::copy(w.begin(), w.end(), probability.begin());
    return expected;
}

namespace {

struct FlatLogits {
    std::vector<double> z;
    std::vector<double> score;
};

FlatLogits flatten(const LogitVector& logits, const ScoreSpec& spec) {
    FlatLogits out;
    for (const auto& [token, z] : logits) {
        if (auto s = spec.score_of(token)) {
            out.z.push_back(z);
            out.score.push_back(*s);
        }
    }
    if (out.z.empty()) throw EmptySupportError("no valid score token in logits");
    return out;
}

}  // namespace

double expected_score(const LogitVector& logits, const ScoreSpec& spec) {
    auto flat = flatten(logits, spec);
    std::vector<double> grad(flat.z.size());
    return expected_score_core(flat.z, flat.score, grad);
}

ScoreDistribution score_distribution(const LogitVector& logits, const ScoreSpec& spec) {
    auto flat = flatten(logits, spec);
    std::vector<double> grad(flat.z.size());
    std::vector<double> prob(flat.z.size());
    ScoreDistribution dist;
    dist.expected = expected_score_core(flat.z, flat.score, grad, prob);
    for (int s : spec.support()) dist.probability[s] = 0.0;
    for (std::size_t k = 0; k < prob.size(); ++k) dist.probability[static_cast<int>(flat.score[k])] += prob[k];
    return dist;
}

TokenSelection select_score_tokens(const Vocabulary& vocab, const ScoreSpec& spec) {
    TokenSelection sel;
    for (const auto& [score, tokens] : spec.groups()) {
        for (const auto& tok : tokens) {
            auto ids = vocab.find_all_ci(tok);
            if (ids.empty()) {
                sel.warnings.push_back("score token '" + tok + "' is not in the verifier vocabulary; dropped");
                continue;
            }
            for (auto id : ids) {
                if (std::find(sel.vocab_index.begin(), sel.vocab_index.end(), id) != sel.vocab_index.end()) continue;
                sel.vocab_index.push_back(id);
                sel.token_score.push_back(score);
            }
        }
    }
    if (sel.vocab_index.empty()) throw EmptySupportError("no score token resolves in the verifier vocabulary");
    return sel;
}

FilteredLogits filter_valid_tokens(const VocabLogits& raw, const ScoreSpec& spec) {
    if (!raw.vocab || raw.logits.size() != raw.vocab->size()) {
        throw ShapeError("logit vector does not match vocabulary size");
    }
    auto sel = select_score_tokens(*raw.vocab, spec);
    FilteredLogits out;
    out.warnings = std::move(sel.warnings);
    for (auto id : sel.vocab_index) out.logits[raw.vocab->token(id)] = raw.logits.value()[id];
    return out;
}

ag::Var expected_score_var(const VocabLogits& raw, const ScoreSpec& spec, std::vector<std::string>* warnings) {
    if (!raw.vocab || raw.logits.size() != raw.vocab->size()) {
        throw ShapeError("logit vector does not match vocabulary size");
    }
    auto sel = select_score_tokens(*raw.vocab, spec);
    if (warnings) warnings->insert(warnings->end(), sel.warnings.begin(), sel.warnings.end());
    const std::size_t n = sel.vocab_index.size();
    auto idx = std::make_shared<const std::vector<std::size_t>>(sel.vocab_index);
    auto picked = ag::gather(raw.logits, idx, {n});
    std::vector<double> grad(n);
    const double e = expected_score_core(picked.value().values(), sel.token_score, grad);
    return ag::scalar_function(picked, e, std::move(grad));
}

}  // namespace phytune
