#pragma once

#include <map>
#include <string>
#include <string_view>

namespace phytune {

// Plain-text prompt templates with `{name}` placeholders, one file per template.
class PromptLibrary {
public:
    PromptLibrary() = default;
    explicit PromptLibrary(std::map<std::string, std::string> templates) : templates_(std::move(templates)) {}

    // Loads every `*.txt` under `dir`, keyed by file stem.
    static PromptLibrary load(const std::string& dir);
    // Templates bundled with the source tree.
    static PromptLibrary bundled();

    bool contains(std::string_view name) const { return templates_.contains(std::string(name)); }
    const std::string& get(std::string_view name) const;

    // Substitutes `{identifier}` placeholders. A placeholder without a value
    // is a TemplateError; braces that do not enclose an identifier (JSON
    // examples, for instance) pass through unchanged.
    std::string render(std::string_view name, const std::map<std::string, std::string>& values) const;

private:
    std::map<std::string, std::string> templates_;
};

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

// Root of the bundled asset tree (prompt templates, mock fixtures, configs).
std::string asset_dir();

}  // namespace phytune
