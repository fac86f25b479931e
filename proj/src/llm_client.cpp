#include "phytune/llm_client.hpp"

#include <algorithm>
#include <array>
#include <sstream>

#include <httplib.h>

#include "phytune/errors.hpp"
#include "phytune/structured_rules.hpp"
#include "phytune/util.hpp"

namespace phytune {

std::future<std::string> LlmClient::complete_async(std::string prompt, DecodeParams params) const {
    return std::async(std::launch::async,
                      [this, prompt = std::move(prompt), params] { return complete(prompt, params); });
}

std::string prompt_task(std::string_view prompt) {
    const auto open = prompt.find("[task:");
    if (open == std::string_view::npos) return {};
    const auto close = prompt.find(']', open);
    if (close == std::string_view::npos) return {};
    return text::trim(prompt.substr(open + 6, close - open - 6));
}

std::string prompt_input(std::string_view prompt) {
    const auto open = prompt.rfind("<input>");
    if (open == std::string_view::npos) return {};
    const auto close = prompt.find("</input>", open);
    if (close == std::string_view::npos) return {};
    return text::trim(prompt.substr(open + 7, close - open - 7));
}

MockLlmClient::MockLlmClient(std::vector<Fixture> fixtures) {
    for (auto& f : fixtures) {
        if (f.completions.empty()) throw PreconditionError("mock fixture without completions");
        table_[fixture_key(f.task, f.input)] = std::move(f.completions);
    }
}

MockLlmClient MockLlmClient::from_json(const nlohmann::json& j) {
    std::vector<Fixture> fixtures;
    try {
        for (const auto& item : j.at("fixtures")) {
            Fixture f;
            f.task = item.at("task").get<std::string>();
            f.input = item.at("input").get<std::string>();
            if (item.contains("completions")) {
                f.completions = item.at("completions").get<std::vector<std::string>>();
            } else {
                f.completions.push_back(item.at("completion").get<std::string>());
            }
            fixtures.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw JsonError(std::string("malformed mock fixture table: ") + e.what());
    }
    return MockLlmClient(std::move(fixtures));
}

MockLlmClient MockLlmClient::from_json_file(const std::string& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw JsonError("cannot parse " + path + ": " + e.what());
    }
}

std::string MockLlmClient::fixture_key(std::string_view task, std::string_view input) {
    return hex64(fnv1a64(text::canonical(task) + "\n" + text::canonical(input)));
}

std::string MockLlmClient::complete(const std::string& prompt, const DecodeParams& params) const {
    const auto task = prompt_task(prompt);
    const auto input = prompt_input(prompt);
    if (auto it = table_.find(fixture_key(task, input)); it != table_.end()) {
        const auto& list = it->second;
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(std::max(params.attempt, 0)), list.size() - 1);
        return list[idx];
    }
    return fallthrough(task, input, fnv1a64(text::canonical(input)) ^ params.seed);
}

namespace {

constexpr std::array<std::string_view, 8> kPrinciples = {
    "Gravity", "Friction", "Conservation of Momentum", "Elasticity",
    "Inertia", "Buoyancy", "Fluid Dynamics", "Thermal Expansion",
};

bool is_stopword(std::string_view w) {
    static constexpr std::array<std::string_view, 40> stop = {
        "a",    "an",   "the",  "is",   "are",  "was",   "of",    "to",    "in",   "on",
        "at",   "and",  "with", "from", "into", "its",   "it",    "over",  "by",   "for",
        "as",   "while", "then", "onto", "off", "under", "across", "down", "up",   "out",
        "his",  "her",  "their", "this", "that", "some", "very",  "slowly", "quickly", "gently",
    };
    return w.size() < 3 || std::find(stop.begin(), stop.end(), w) != stop.end();
}

std::vector<std::string> content_words(std::string_view input) {
    std::vector<std::string> out;
    for (auto& w : text::words(input)) {
        if (!is_stopword(w)) out.push_back(std::move(w));
    }
    if (out.empty()) out.push_back("object");
    return out;
}

}  // namespace

std::string MockLlmClient::fallthrough(std::string_view task, std::string_view input, std::uint64_t seed) const {
    Rng rng(seed);
    const auto nouns = content_words(input);
    const std::string initiator = nouns.front();
    const std::string affected = nouns.back();
    const std::string principle(kPrinciples[rng.next_u64() % kPrinciples.size()]);
    const std::string secondary(kPrinciples[rng.next_u64() % kPrinciples.size()]);

    if (task == "attributes") {
        nlohmann::json attrs = nlohmann::json::array();
        attrs.push_back({{"principle", principle},
                         {"initiator", initiator},
                         {"affected", affected},
                         {"interaction", "The " + initiator + " acts on the " + affected + "."},
                         {"notes", "The " + affected + " responds visibly."}});
        if (nouns.size() > 2) {
            const auto& mid = nouns[nouns.size() / 2];
            attrs.push_back({{"principle", secondary},
                             {"initiator", mid},
                             {"affected", affected},
                             {"interaction", "The " + mid + " influences the " + affected + "."},
                             {"notes", ""}});
        }
        return "<attributes>" + attrs.dump() + "</attributes>";
    }
    if (task == "phenomena") {
        nlohmann::json facts = nlohmann::json::array();
        facts.push_back({{"text", "The " + affected + " moves in a way consistent with " + text::to_lower(principle) + "."},
                         {"tags", {principle}}});
        facts.push_back({{"text", "The " + initiator + " stays in contact with the scene throughout."},
                         {"tags", {secondary}}});
        facts.push_back({{"text", "The " + affected + " keeps a consistent shape and size."}, {"tags", nlohmann::json::array()}});
        return "<phenomena>" + facts.dump() + "</phenomena>";
    }
    if (task == "enhance") {
        std::string out = std::string(input) + " The motion unfolds smoothly under natural light.";
        std::vector<std::string> kept;
        std::istringstream in(out);
        std::string w;
        while (in >> w && kept.size() < 70) kept.push_back(w);
        std::string joined;
        for (std::size_t i = 0; i < kept.size(); ++i) joined += (i ? " " : "") + kept[i];
        return "<enhanced_prompt>" + joined + "</enhanced_prompt>";
    }
    if (task == "extract_rules") {
        RuleMap rules;
        rules["The " + affected + " moves."] = {principle};
        rules["The " + initiator + " interacts with its surroundings."] = {secondary};
        std::vector<std::string> rewrites;
        const std::string base = text::collapse_whitespace(text::trim(input));
        for (int k = 1; k <= 5; ++k) {
            rewrites.push_back(base + " (variant " + std::to_string(k) + ", emphasising " + text::to_lower(principle) + ")");
        }
        return serialize_structured_rules(rules, rewrites);
    }
    return "";
}

HttpLlmClient::HttpLlmClient(std::string base_url, std::string model, std::string api_key, int timeout_seconds)
    : base_url_(std::move(base_url)), model_(std::move(model)), api_key_(std::move(api_key)),
      timeout_seconds_(timeout_seconds) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

namespace {

// Splits "http://host:port/prefix" into origin and path prefix.
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::string HttpLlmClient::complete(const std::string& prompt, const DecodeParams& params) const {
    const auto [origin, prefix] = split_url(base_url_);
    httplib::Client cli(origin);
    cli.set_connection_timeout(timeout_seconds_, 0);
    cli.set_read_timeout(timeout_seconds_, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    nlohmann::json body = {{"model", model_},
                           {"messages", {{{"role", "user"}, {"content", prompt}}}},
                           {"temperature", params.temperature},
                           {"max_tokens", params.max_tokens},
                           {"seed", params.seed + static_cast<std::uint64_t>(params.attempt)}};
    auto res = cli.Post(prefix + "/v1/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw ClientError("LLM request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw ClientError("LLM backend returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
        const auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ClientError(std::string("unexpected LLM response: ") + e.what());
    }
}

}  // namespace phytune
