#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "phytune/llm_client.hpp"
#include "phytune/prompt_library.hpp"

namespace phytune {

inline constexpr std::size_t kMaxPromptChars = 2000;
inline constexpr std::size_t kMaxEnhancedWords = 70;

class UserPrompt {
public:
    // Trims; rejects empty text and text longer than 2,000 characters.
    static UserPrompt create(std::string_view text);
    const std::string& text() const noexcept { return text_; }

private:
    explicit UserPrompt(std::string text) : text_(std::move(text)) {}
    std::string text_;
};

struct PhysicalAttribute {
    std::string principle;
    std::string initiator;
    std::string affected;
    std::string interaction;
    std::string notes;

    bool operator==(const PhysicalAttribute&) const = default;
};

struct PhenomenonFact {
    int id = 0;
    std::string text;
    std::vector<std::string> tags;

    bool operator==(const PhenomenonFact&) const = default;
};

struct PhysicalContext {
    std::vector<PhysicalAttribute> attributes;
    std::vector<PhenomenonFact> phenomena;
    std::string enhanced_prompt;

    bool operator==(const PhysicalContext&) const = default;
};

void to_json(nlohmann::json& j, const PhysicalAttribute& a);
void from_json(const nlohmann::json& j, PhysicalAttribute& a);
void to_json(nlohmann::json& j, const PhenomenonFact& f);
void from_json(const nlohmann::json& j, PhenomenonFact& f);
void to_json(nlohmann::json& j, const PhysicalContext& c);
void from_json(const nlohmann::json& j, PhysicalContext& c);

struct ReasonerOptions {
    std::size_t max_facts = 8;
    std::uint64_t seed = 0;
};

struct PhenomenaResult {
    std::vector<PhenomenonFact> facts;
    std::vector<std::string> warnings;
};

struct ReasoningResult {
    PhysicalContext context;
    std::vector<std::string> warnings;
};

// Parsers for the tagged completions requested by the bundled templates.
std::vector<PhysicalAttribute> parse_attributes(std::string_view raw);
std::vector<PhenomenonFact> parse_phenomena(std::string_view raw);
std::string parse_enhanced_prompt(std::string_view raw);

// Entity strings (initiator/affected) that occur in the user prompt.
std::vector<std::string> prompt_entities(const UserPrompt& prompt, const std::vector<PhysicalAttribute>& attributes);
// Contract violations of an enhanced prompt; empty when it is acceptable.
std::vector<std::string> enhancement_violations(std::string_view enhanced, const std::vector<std::string>& entities);

// Chain-of-thought physical context reasoning over a text LLM.
class ContextReasoner {
public:
    ContextReasoner(const LlmClient& client, PromptLibrary prompts, ReasonerOptions options = {});

    std::vector<PhysicalAttribute> reason_attributes(const UserPrompt& prompt) const;
    PhenomenaResult reason_phenomena(const UserPrompt& prompt, const std::vector<PhysicalAttribute>& attributes) const;
    // `partial` must carry attributes and phenomena. One retry on a contract
    // violation, then ValidationError.
    std::string enhance_prompt(const UserPrompt& prompt, const PhysicalContext& partial) const;

    ReasoningResult reason(const UserPrompt& prompt) const;

    const ReasonerOptions& options() const noexcept { return options_; }

private:
    std::string call(const std::string& rendered, int attempt) const;

    const LlmClient& client_;
    PromptLibrary prompts_;
    ReasonerOptions options_;
};

// Reasoning results persisted as JSON, one file per prompt content hash.
class ContextCache {
public:
    explicit ContextCache(std::string dir) : dir_(std::move(dir)) {}

    static std::string key(const UserPrompt& prompt);
    std::string path_for(const UserPrompt& prompt) const;
    std::optional<PhysicalContext> load(const UserPrompt& prompt) const;
    std::string store(const UserPrompt& prompt, const PhysicalContext& context) const;

private:
    std::string dir_;
};

}  // namespace phytune
