#include "phytune/structured_rules.hpp"

#include <nlohmann/json.hpp>

#include "phytune/errors.hpp"
#include "phytune/util.hpp"

namespace phytune {

std::optional<std::string> extract_tag_block(std::string_view raw, std::string_view tag) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    const auto o = raw.find(open);
    const auto c = raw.find(close);
    if (o == std::string_view::npos && c == std::string_view::npos) return std::nullopt;
    if (o == std::string_view::npos || c == std::string_view::npos || c < o) {
        throw TagError("unbalanced <" + std::string(tag) + "> block");
    }
    if (raw.find(open, o + open.size()) != std::string_view::npos ||
        raw.find(close, c + close.size()) != std::string_view::npos) {
        throw TagError("repeated <" + std::string(tag) + "> block");
    }
    const auto begin = o + open.size();
    if (raw.substr(begin, c - begin).find(open) != std::string_view::npos) {
        throw TagError("nested <" + std::string(tag) + "> block");
    }
    return text::trim(raw.substr(begin, c - begin));
}

namespace {

std::string strip_doubled_braces(const std::string& body) {
    if (body.size() >= 4 && body.starts_with("{{") && body.ends_with("}}")) {
        return text::trim(std::string_view(body).substr(1, body.size() - 2));
    }
    return body;
}

RuleMap parse_rule_json(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(strip_doubled_braces(body));
    } catch (const nlohmann::json::parse_error& e) {
        throw JsonError(std::string("malformed physics rule map: ") + e.what());
    }
    if (!j.is_object()) throw JsonError("physics rules must be a JSON object");
    RuleMap rules;
    for (const auto& [observation, value] : j.items()) {
        std::vector<std::string> labels;
        if (value.is_string()) {
            labels.push_back(value.get<std::string>());
        } else if (value.is_array()) {
            for (const auto& v : value) {
                if (!v.is_string()) throw JsonError("principle labels must be strings");
                labels.push_back(v.get<std::string>());
            }
        } else {
            throw JsonError("rule '" + observation + "' must map to a label or a list of labels");
        }
        rules.emplace(observation, std::move(labels));
    }
    return rules;
}

}  // namespace

StructuredRules parse_structured_rules(std::string_view raw) {
    auto body = extract_tag_block(raw, "physics_rules");
    if (!body) throw TagError("missing <physics_rules> block");

    StructuredRules out;
    out.rules = parse_rule_json(*body);
    for (std::size_t k = 1; k <= kMaxRewrites; ++k) {
        if (auto r = extract_tag_block(raw, "rewrite" + std::to_string(k))) out.rewrites.push_back(*r);
    }
    if (out.rewrites.size() < kMaxRewrites) {
        out.missing_rewrites = true;
        out.warnings.push_back("expected " + std::to_string(kMaxRewrites) + " rewrites, found " +
                               std::to_string(out.rewrites.size()));
    }
    return out;
}

std::string serialize_structured_rules(const RuleMap& rules, const std::vector<std::string>& rewrites) {
    if (rewrites.size() > kMaxRewrites) throw PreconditionError("at most 5 rewrites");
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [observation, labels] : rules) {
        bool tagged = observation.find("physics_rules>") != std::string::npos;
        for (const auto& l : labels) tagged = tagged || l.find("physics_rules>") != std::string::npos;
        if (tagged) throw PreconditionError("rule text may not contain the physics_rules tag");
        j[observation] = labels;
    }
    std::string out = "<physics_rules>\n" + j.dump(2) + "\n</physics_rules>\n";
    for (std::size_t k = 0; k < rewrites.size(); ++k) {
        const auto tag = "rewrite" + std::to_string(k + 1);
        if (rewrites[k] != text::trim(rewrites[k]) || rewrites[k].find("</rewrite") != std::string::npos ||
            rewrites[k].find("<rewrite") != std::string::npos) {
            throw PreconditionError("rewrite " + std::to_string(k + 1) + " is not in canonical form");
        }
        out += "<" + tag + ">" + rewrites[k] + "</" + tag + ">\n";
    }
    return out;
}

}  // namespace phytune
