#include "phytune/mllm_client.hpp"

#include <cmath>
#include <limits>

#include <httplib.h>

#include "phytune/errors.hpp"
#include "phytune/structured_rules.hpp"
#include "phytune/util.hpp"

namespace phytune {

std::shared_ptr<const Vocabulary> mock_vocabulary() {
    static const auto vocab = std::make_shared<const Vocabulary>(std::vector<std::string>{
        "<pad>", "<unk>", "0",   "1",   "2",     "3",     "4",     "5",   "zero",  "one",     "two",
        "three", "four",  "five", "One", "Two",  "Three", "Four",  "Five", "yes",  "no",      "Yes",
        "No",    "undetermined", "maybe", "the", "video", "banana", "score", "is", ".", "A",
    });
    return vocab;
}

QuestionParts parse_question(std::string_view question) {
    QuestionParts out;
    const auto open = question.find("[check:");
    if (open != std::string_view::npos) {
        const auto close = question.find(']', open);
        if (close != std::string_view::npos) out.check = text::trim(question.substr(open + 7, close - open - 7));
    }
    if (auto subject = extract_tag_block(question, "subject")) out.subject = *subject;
    return out;
}

namespace {

void check_video(const PixelVideo& video) {
    if (video.empty()) throw PreconditionError("video is empty");
    const auto& v = video.frames.value();
    if (v.rank() != 4 || v.dim(1) != 3) {
        throw ShapeError("video frames must be [m, 3, H, W], got " + shape_string(v.shape()));
    }
}

// base + s * coef as a full-vocabulary logit vector, differentiable in s.
ag::Var affine_logits(const ag::Var& s, const std::vector<double>& base, const std::vector<double>& coef) {
    const std::size_t n = base.size();
    auto row = ag::matmul(ag::reshape(s, {1, 1}), ag::Var::constant(Tensor({1, n}, coef)));
    return ag::add(ag::reshape(row, {n}), ag::Var::constant(Tensor({n}, base)));
}

ag::Var channel_mean(const ag::Var& frames, std::size_t channel) {
    const auto& v = frames.value();
    const std::size_t m = v.dim(0), c = v.dim(1), hw = v.dim(2) * v.dim(3);
    auto idx = std::make_shared<std::vector<std::size_t>>();
    idx->reserve(m * hw);
    for (std::size_t f = 0; f < m; ++f) {
        for (std::size_t p = 0; p < hw; ++p) idx->push_back((f * c + channel) * hw + p);
    }
    const std::size_t count = idx->size();
    return ag::mean(ag::gather(frames, std::move(idx), {count}));
}

// Mean squared difference between consecutive frames; zero for single frames.
ag::Var temporal_roughness(const ag::Var& frames) {
    const auto& v = frames.value();
    const std::size_t m = v.dim(0);
    if (m < 2) return ag::Var::constant(Tensor::scalar(0.0));
    const std::size_t per_frame = v.size() / m;
    auto later = std::make_shared<std::vector<std::size_t>>();
    auto earlier = std::make_shared<std::vector<std::size_t>>();
    for (std::size_t i = per_frame; i < v.size(); ++i) {
        later->push_back(i);
        earlier->push_back(i - per_frame);
    }
    const std::size_t count = later->size();
    auto diff = ag::sub(ag::gather(frames, std::move(later), {count}), ag::gather(frames, std::move(earlier), {count}));
    return ag::mean(ag::square(diff));
}

constexpr double kJunkLogit = 0.3;
constexpr double kUndeterminedLogit = 1.0;

}  // namespace

DifferentiableMockMllm::DifferentiableMockMllm(DifferentiableMockOptions options)
    : options_(options), vocab_(mock_vocabulary()) {
    if (options_.sigma <= 0.0) throw PreconditionError("sigma must be positive");
}

std::size_t DifferentiableMockMllm::fact_channel(std::string_view fact_text) const {
    return (fnv1a64(text::canonical(fact_text)) ^ options_.seed) % 3;
}

std::vector<double> DifferentiableMockMllm::semantic_target(std::string_view prompt) const {
    Rng rng(fnv1a64(text::canonical(prompt)) ^ options_.seed);
    std::vector<double> target(3);
    for (auto& t : target) t = 0.35 + 0.3 * rng.uniform();
    return target;
}

VocabLogits DifferentiableMockMllm::score_logits(const PixelVideo& video, std::string_view question,
                                                 const ScoreSpec& spec) const {
    count_call();
    check_video(video);
    const auto q = parse_question(question);
    const std::size_t n = vocab_->size();
    std::vector<double> base(n, kJunkLogit), coef(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (text::iequals(vocab_->token(i), "undetermined")) base[i] = kUndeterminedLogit;
    }

    if (q.check == "fact") {
        for (std::size_t i = 0; i < n; ++i) {
            const auto s = spec.score_of(vocab_->token(i));
            if (!s) continue;
            base[i] = 0.0;
            if (*s == spec.max_score()) {
                base[i] = -options_.fact_gain * options_.fact_center;
                coef[i] = options_.fact_gain;
            }
        }
        auto stat = channel_mean(video.frames, fact_channel(q.subject));
        return {vocab_, affine_logits(stat, base, coef)};
    }

    ag::Var mu;
    if (q.check == "commonsense") {
        auto rough = temporal_roughness(video.frames);
        mu = ag::add_scalar(ag::scale(ag::exp(ag::scale(rough, -options_.smoothness)), 4.0), 1.0);
    } else if (q.check == "semantic") {
        const auto target = semantic_target(q.subject);
        std::vector<ag::Var> terms;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            terms.push_back(ag::square(ag::add_scalar(channel_mean(video.frames, ch), -target[ch])));
        }
        auto dist = ag::add(ag::add(terms[0], terms[1]), terms[2]);
        mu = ag::add_scalar(ag::scale(ag::exp(ag::scale(dist, -options_.sharpness)), 4.0), 1.0);
    } else {
        throw ClientError("mock verifier cannot answer a '" + q.check + "' question");
    }
    // -(s - mu)^2 / (2 sigma^2) up to a term shared by every score token.
    const double inv_var = 1.0 / (options_.sigma * options_.sigma);
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = spec.score_of(vocab_->token(i));
        if (!s) continue;
        base[i] = -0.5 * (*s) * (*s) * inv_var;
        coef[i] = (*s) * inv_var;
    }
    return {vocab_, affine_logits(mu, base, coef)};
}

ScriptedMllmClient::ScriptedMllmClient(std::vector<Rule> rules, LogitVector fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)), vocab_(mock_vocabulary()) {}

ScriptedMllmClient ScriptedMllmClient::all_matched(int score) {
    return failing_facts({}, score);
}

ScriptedMllmClient ScriptedMllmClient::failing_facts(std::vector<std::string> failing, int score) {
    std::vector<Rule> rules;
    for (auto& f : failing) rules.push_back({"<subject>" + f, {{"no", 0.0}}});
    rules.push_back({"[check: fact]", {{"yes", 0.0}}});
    rules.push_back({"[check: commonsense]", {{std::to_string(score), 0.0}}});
    rules.push_back({"[check: semantic]", {{std::to_string(score), 0.0}}});
    return ScriptedMllmClient(std::move(rules), {});
}

VocabLogits ScriptedMllmClient::score_logits(const PixelVideo& video, std::string_view question,
                                             const ScoreSpec&) const {
    count_call();
    check_video(video);
    const LogitVector* chosen = &fallback_;
    for (const auto& r : rules_) {
        if (question.find(r.needle) != std::string_view::npos) {
            chosen = &r.logits;
            break;
        }
    }
    Tensor logits({vocab_->size()}, -std::numeric_limits<double>::infinity());
    for (const auto& [token, z] : *chosen) {
        const auto id = vocab_->find(token);
        if (!id) throw ClientError("scripted logit for unknown token '" + token + "'");
        logits[*id] = z;
    }
    return {vocab_, ag::Var::constant(std::move(logits))};
}

HttpMllmClient::HttpMllmClient(std::string base_url, std::string api_key, int timeout_seconds)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)), timeout_seconds_(timeout_seconds) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

VocabLogits HttpMllmClient::score_logits(const PixelVideo& video, std::string_view question,
                                         const ScoreSpec& spec) const {
    count_call();
    check_video(video);
    const auto scheme_end = base_url_.find("://");
    const auto path_start = base_url_.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? base_url_ : base_url_.substr(0, path_start);
    const std::string prefix = path_start == std::string::npos ? "" : base_url_.substr(path_start);

    httplib::Client cli(origin);
    cli.set_connection_timeout(timeout_seconds_, 0);
    cli.set_read_timeout(timeout_seconds_, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const auto& v = video.frames.value();
    nlohmann::json body = {{"question", question},
                           {"support", spec.to_json()},
                           {"video", {{"shape", v.shape()}, {"data", v.data()}}}};
    auto res = cli.Post(prefix + "/score", headers, body.dump(), "application/json");
    if (!res) throw ClientError("verifier request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ClientError("verifier returned HTTP " + std::to_string(res->status));
    try {
        const auto j = nlohmann::json::parse(res->body);
        auto tokens = j.at("vocab").get<std::vector<std::string>>();
        std::vector<double> logits;
        for (const auto& z : j.at("logits")) {
            logits.push_back(z.is_null() ? -std::numeric_limits<double>::infinity() : z.get<double>());
        }
        if (tokens.size() != logits.size()) throw ClientError("verifier vocab and logits differ in length");
        const std::size_t n = logits.size();
        return {std::make_shared<const Vocabulary>(std::move(tokens)),
                ag::Var::constant(Tensor({n}, std::move(logits)))};
    } catch (const nlohmann::json::exception& e) {
        throw ClientError(std::string("unexpected verifier response: ") + e.what());
    }
}

}  // namespace phytune
