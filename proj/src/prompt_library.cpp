#include "phytune/prompt_library.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>

#include "phytune/errors.hpp"
#include "phytune/util.hpp"

#ifndef PHYTUNE_ASSET_DIR
#define PHYTUNE_ASSET_DIR "assets"
#endif

namespace phytune {

std::string asset_dir() {
    if (const char* env = std::getenv("PHYTUNE_ASSET_DIR"); env && *env) return env;
    return PHYTUNE_ASSET_DIR;
}

PromptLibrary PromptLibrary::load(const std::string& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) throw IoError("prompt directory not found: " + dir);
    std::map<std::string, std::string> templates;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") {
            templates[entry.path().stem().string()] = read_file(entry.path().string());
        }
    }
    return PromptLibrary(std::move(templates));
}

PromptLibrary PromptLibrary::bundled() {
    return load((std::filesystem::path(asset_dir()) / "prompts").string());
}

const std::string& PromptLibrary::get(std::string_view name) const {
    auto it = templates_.find(std::string(name));
    if (it == templates_.end()) throw TemplateError("no prompt template named '" + std::string(name) + "'");
    return it->second;
}

std::string PromptLibrary::render(std::string_view name, const std::map<std::string, std::string>& values) const {
    return render_template(get(name), values);
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t j = i + 1;
            while (j < tmpl.size() && (std::islower(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '_')) ++j;
            if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) {
                const std::string key(tmpl.substr(i + 1, j - i - 1));
                auto it = values.find(key);
                if (it == values.end()) throw TemplateError("no value for placeholder {" + key + "}");
                out += it->second;
                i = j + 1;
                continue;
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

}  // namespace phytune
