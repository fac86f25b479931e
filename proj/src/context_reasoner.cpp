#include "phytune/context_reasoner.hpp"

#include <algorithm>
#include <filesystem>

#include "phytune/errors.hpp"
#include "phytune/structured_rules.hpp"
#include "phytune/util.hpp"

namespace phytune {

UserPrompt UserPrompt::create(std::string_view text) {
    auto t = text::trim(text);
    if (t.empty()) throw PreconditionError("user prompt is empty");
    if (t.size() > kMaxPromptChars) {
        throw PreconditionError("user prompt exceeds " + std::to_string(kMaxPromptChars) + " characters");
    }
    return UserPrompt(std::move(t));
}

void to_json(nlohmann::json& j, const PhysicalAttribute& a) {
    j = {{"principle", a.principle},
         {"initiator", a.initiator},
         {"affected", a.affected},
         {"interaction", a.interaction},
         {"notes", a.notes}};
}

void from_json(const nlohmann::json& j, PhysicalAttribute& a) {
    a.principle = j.at("principle").get<std::string>();
    a.initiator = j.at("initiator").get<std::string>();
    a.affected = j.at("affected").get<std::string>();
    a.interaction = j.value("interaction", "");
    a.notes = j.value("notes", "");
}

void to_json(nlohmann::json& j, const PhenomenonFact& f) {
    j = {{"id", f.id}, {"text", f.text}, {"tags", f.tags}};
}

void from_json(const nlohmann::json& j, PhenomenonFact& f) {
    f.id = j.at("id").get<int>();
    f.text = j.at("text").get<std::string>();
    f.tags = j.value("tags", std::vector<std::string>{});
}

void to_json(nlohmann::json& j, const PhysicalContext& c) {
    j = {{"attributes", c.attributes}, {"phenomena", c.phenomena}, {"enhanced_prompt", c.enhanced_prompt}};
}

void from_json(const nlohmann::json& j, PhysicalContext& c) {
    c.attributes = j.at("attributes").get<std::vector<PhysicalAttribute>>();
    c.phenomena = j.at("phenomena").get<std::vector<PhenomenonFact>>();
    c.enhanced_prompt = j.at("enhanced_prompt").get<std::string>();
}

namespace {

nlohmann::json tagged_json(std::string_view raw, std::string_view tag) {
    std::optional<std::string> body;
    try {
        body = extract_tag_block(raw, tag);
    } catch (const TagError& e) {
        throw ParseError(e.what(), std::string(raw));
    }
    const std::string payload = body ? *body : text::trim(raw);
    try {
        return nlohmann::json::parse(payload);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("completion is not valid JSON: ") + e.what(), std::string(raw));
    }
}

std::string required_string(const nlohmann::json& obj, const char* key, std::string_view raw) {
    if (!obj.contains(key) || !obj.at(key).is_string()) {
        throw ParseError(std::string("attribute is missing '") + key + "'", std::string(raw));
    }
    auto v = text::trim(obj.at(key).get<std::string>());
    if (v.empty()) throw ParseError(std::string("attribute has an empty '") + key + "'", std::string(raw));
    return v;
}

std::string optional_string(const nlohmann::json& obj, const char* key) {
    if (obj.contains(key) && obj.at(key).is_string()) return text::trim(obj.at(key).get<std::string>());
    return {};
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

std::vector<PhysicalAttribute> parse_attributes(std::string_view raw) {
    const auto j = tagged_json(raw, "attributes");
    if (!j.is_array()) throw ParseError("attributes must be a JSON array", std::string(raw));
    std::vector<PhysicalAttribute> out;
    for (const auto& item : j) {
        if (!item.is_object()) throw ParseError("attribute entries must be objects", std::string(raw));
        PhysicalAttribute a;
        a.principle = required_string(item, "principle", raw);
        a.initiator = required_string(item, "initiator", raw);
        a.affected = required_string(item, "affected", raw);
        a.interaction = optional_string(item, "interaction");
        a.notes = optional_string(item, "notes");
        out.push_back(std::move(a));
    }
    if (out.empty()) throw ParseError("no physical attributes in completion", std::string(raw));
    return out;
}

std::vector<PhenomenonFact> parse_phenomena(std::string_view raw) {
    const auto j = tagged_json(raw, "phenomena");
    if (!j.is_array()) throw ParseError("phenomena must be a JSON array", std::string(raw));
    std::vector<PhenomenonFact> out;
    for (const auto& item : j) {
        PhenomenonFact f;
        if (item.is_string()) {
            f.text = text::trim(item.get<std::string>());
        } else if (item.is_object() && item.contains("text") && item.at("text").is_string()) {
            f.text = text::trim(item.at("text").get<std::string>());
            if (item.contains("tags")) {
                for (const auto& t : item.at("tags")) {
                    if (t.is_string()) f.tags.push_back(t.get<std::string>());
                }
            }
        } else {
            throw ParseError("phenomenon entries must be strings or {text, tags} objects", std::string(raw));
        }
        if (f.text.empty()) throw ParseError("empty phenomenon text", std::string(raw));
        f.id = static_cast<int>(out.size()) + 1;
        out.push_back(std::move(f));
    }
    if (out.empty()) throw ParseError("no phenomena in completion", std::string(raw));
    return out;
}

std::string parse_enhanced_prompt(std::string_view raw) {
    std::optional<std::string> body;
    try {
        body = extract_tag_block(raw, "enhanced_prompt");
    } catch (const TagError& e) {
        throw ParseError(e.what(), std::string(raw));
    }
    return text::collapse_whitespace(body ? *body : text::trim(raw));
}

std::vector<std::string> prompt_entities(const UserPrompt& prompt, const std::vector<PhysicalAttribute>& attributes) {
    std::vector<std::string> out;
    auto consider = [&](const std::string& entity) {
        if (entity.empty() || !text::contains_ci(prompt.text(), entity)) return;
        const bool seen = std::any_of(out.begin(), out.end(), [&](const auto& e) { return text::iequals(e, entity); });
        if (!seen) out.push_back(entity);
    };
    for (const auto& a : attributes) {
        consider(a.initiator);
        consider(a.affected);
    }
    return out;
}

std::vector<std::string> enhancement_violations(std::string_view enhanced, const std::vector<std::string>& entities) {
    std::vector<std::string> out;
    const auto words = text::word_count(enhanced);
    if (words == 0) out.push_back("enhanced prompt is empty");
    if (words > kMaxEnhancedWords) {
        out.push_back("enhanced prompt has " + std::to_string(words) + " words; the limit is " +
                      std::to_string(kMaxEnhancedWords));
    }
    for (const auto& e : entities) {
        if (!text::contains_ci(enhanced, e)) out.push_back("entity '" + e + "' is missing");
    }
    return out;
}

ContextReasoner::ContextReasoner(const LlmClient& client, PromptLibrary prompts, ReasonerOptions options)
    : client_(client), prompts_(std::move(prompts)), options_(options) {
    if (options_.max_facts == 0) throw PreconditionError("max_facts must be at least 1");
}

std::string ContextReasoner::call(const std::string& rendered, int attempt) const {
    DecodeParams params;
    params.seed = options_.seed;
    params.attempt = attempt;
    try {
        return client_.complete(rendered, params);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw ClientError(std::string("LLM backend failed: ") + e.what());
    }
}

std::vector<PhysicalAttribute> ContextReasoner::reason_attributes(const UserPrompt& prompt) const {
    const auto rendered = prompts_.render("attributes", {{"prompt", prompt.text()}});
    return parse_attributes(call(rendered, 0));
}

PhenomenaResult ContextReasoner::reason_phenomena(const UserPrompt& prompt,
                                                  const std::vector<PhysicalAttribute>& attributes) const {
    if (attributes.empty()) throw PreconditionError("phenomena reasoning needs at least one attribute");
    const auto rendered = prompts_.render("phenomena", {{"prompt", prompt.text()},
                                                        {"attributes", nlohmann::json(attributes).dump()},
                                                        {"max_facts", std::to_string(options_.max_facts)}});
    PhenomenaResult out;
    out.facts = parse_phenomena(call(rendered, 0));
    if (out.facts.size() > options_.max_facts) {
        out.warnings.push_back("received " + std::to_string(out.facts.size()) + " phenomena; kept the first " +
                               std::to_string(options_.max_facts));
        out.facts.resize(options_.max_facts);
    }
    return out;
}

std::string ContextReasoner::enhance_prompt(const UserPrompt& prompt, const PhysicalContext& partial) const {
    if (partial.attributes.empty() || partial.phenomena.empty()) {
        throw PreconditionError("enhancement needs attributes and phenomena");
    }
    const auto entities = prompt_entities(prompt, partial.attributes);
    std::vector<std::string> facts;
    for (const auto& f : partial.phenomena) facts.push_back("- " + f.text);

    std::map<std::string, std::string> vars = {{"prompt", prompt.text()},
                                               {"entities", join(entities, ", ")},
                                               {"phenomena", join(facts, "\n")},
                                               {"feedback", ""}};
    std::vector<std::string> violations;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto enhanced = parse_enhanced_prompt(call(prompts_.render("enhance", vars), attempt));
        violations = enhancement_violations(enhanced, entities);
        if (violations.empty()) return enhanced;
        vars["feedback"] = "Your previous answer was rejected: " + join(violations, "; ") + ".";
    }
    throw ValidationError("enhanced prompt rejected after retry: " + join(violations, "; "));
}

ReasoningResult ContextReasoner::reason(const UserPrompt& prompt) const {
    ReasoningResult out;
    out.context.attributes = reason_attributes(prompt);
    auto phen = reason_phenomena(prompt, out.context.attributes);
    out.context.phenomena = std::move(phen.facts);
    out.warnings = std::move(phen.warnings);
    out.context.enhanced_prompt = enhance_prompt(prompt, out.context);
    return out;
}

std::string ContextCache::key(const UserPrompt& prompt) {
    return hex64(fnv1a64(text::canonical(prompt.text())));
}

std::string ContextCache::path_for(const UserPrompt& prompt) const {
    return (std::filesystem::path(dir_) / (key(prompt) + ".json")).string();
}

std::optional<PhysicalContext> ContextCache::load(const UserPrompt& prompt) const {
    const auto path = path_for(prompt);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
        auto j = nlohmann::json::parse(read_file(path));
        return j.get<PhysicalContext>();
    } catch (const nlohmann::json::exception& e) {
        throw JsonError("corrupt context cache entry " + path + ": " + e.what());
    }
}

std::string ContextCache::store(const UserPrompt& prompt, const PhysicalContext& context) const {
    nlohmann::json j = context;
    j["prompt"] = prompt.text();
    j["key"] = key(prompt);
    const auto path = path_for(prompt);
    write_file(path, j.dump(2) + "\n");
    return path;
}

}  // namespace phytune
