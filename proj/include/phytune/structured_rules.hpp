#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace phytune {

// observation -> physics principle labels
using RuleMap = std::map<std::string, std::vector<std::string>>;

inline constexpr std::size_t kMaxRewrites = 5;

struct StructuredRules {
    RuleMap rules;
    std::vector<std::string> rewrites;
    std::vector<std::string> warnings;
    bool missing_rewrites = false;
};

// Content of the single <tag>...</tag> block, trimmed. nullopt when the tag
// is absent; TagError when it is unbalanced or repeated.
std::optional<std::string> extract_tag_block(std::string_view raw, std::string_view tag);

// Parses a <physics_rules> JSON map plus <rewrite1>..<rewrite5> blocks.
// Rule values may be a label or a list of labels; a doubled outer brace
// pair ("{{ ... }}", as produced by format-escaped templates) is accepted.
StructuredRules parse_structured_rules(std::string_view raw);

// Canonical serialization; parse_structured_rules inverts it exactly.
std::string serialize_structured_rules(const RuleMap& rules, const std::vector<std::string>& rewrites);

}  // namespace phytune
