#include "phytune/dataset_pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <future>
#include <sstream>

#include "phytune/errors.hpp"
#include "phytune/util.hpp"

namespace phytune {

void to_json(nlohmann::json& j, const DatasetRecord& r) {
    j = {{"video_ref", r.video_ref},         {"caption", r.caption},   {"category", r.category},
         {"physics_rules", r.physics_rules}, {"rewrites", r.rewrites}, {"realism_score", r.realism_score},
         {"needs_review", r.needs_review}};
    if (!r.review_reason.empty()) j["review_reason"] = r.review_reason;
}

void from_json(const nlohmann::json& j, DatasetRecord& r) {
    r.video_ref = j.at("video_ref").get<std::string>();
    r.caption = j.at("caption").get<std::string>();
    r.category = j.value("category", std::string());
    r.physics_rules = j.value("physics_rules", RuleMap{});
    r.rewrites = j.value("rewrites", std::vector<std::string>{});
    r.realism_score = j.value("realism_score", 1.0);
    r.needs_review = j.value("needs_review", false);
    r.review_reason = j.value("review_reason", std::string());
}

const std::vector<std::string>& KeywordRealismClassifier::markers() {
    static const std::vector<std::string> words = {"cartoon",   "animated", "animation",  "anime",
                                                   "cgi",       "game",     "gameplay",   "minecraft",
                                                   "illustration", "drawing", "clipart",  "3d render",
                                                   "pixel art", "comic"};
    return words;
}

double KeywordRealismClassifier::realism(const std::string& caption) const {
    const auto lower = " " + text::collapse_whitespace(text::to_lower(caption)) + " ";
    for (const auto& w : text::words(caption)) {
        for (const auto& m : markers()) {
            if (w == m) return 0.05;
        }
    }
    for (const auto& m : markers()) {
        if (m.find(' ') != std::string::npos && lower.find(m) != std::string::npos) return 0.05;
    }
    return 0.95;
}

double RiggedRealismClassifier::realism(const std::string& caption) const {
    if (auto it = scores_.find(caption); it != scores_.end()) return it->second;
    if (fallback_) return *fallback_;
    throw ClassifierError("no rigged realism score for caption '" + caption + "'");
}

namespace {

// Applies `fn` to every index with at most `workers` calls in flight; results
// keep input order.
template <typename T, typename F>
std::vector<T> ordered_map(std::size_t n, std::size_t workers, F fn) {
    std::vector<T> out(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    for (std::size_t start = 0; start < n; start += workers) {
        const std::size_t end = std::min(n, start + workers);
        std::vector<std::future<T>> inflight;
        for (std::size_t i = start; i < end; ++i) inflight.push_back(std::async(std::launch::async, fn, i));
        for (std::size_t i = start; i < end; ++i) out[i] = inflight[i - start].get();
    }
    return out;
}

}  // namespace

FilterResult filter_realistic(const std::vector<DatasetRecord>& records, const RealismClassifier& classifier,
                              double threshold, std::size_t workers) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw PreconditionError("threshold must lie in [0, 1]");
    const auto scores = ordered_map<double>(records.size(), workers, [&](std::size_t i) {
        double s;
        try {
            s = classifier.realism(records[i].caption);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw ClassifierError(std::string("realism classifier failed: ") + e.what());
        }
        if (!(s >= 0.0 && s <= 1.0)) throw ClassifierError("realism score outside [0, 1]");
        return s;
    });
    FilterResult out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (scores[i] >= threshold) {
            out.accepted.push_back(records[i]);
            out.accepted.back().realism_score = scores[i];
        } else {
            out.dropped.push_back({i, records[i].video_ref, records[i].caption, scores[i]});
        }
    }
    return out;
}

DatasetRecord annotate(const DatasetRecord& record, const LlmClient& client, const PromptLibrary& prompts,
                       const AnnotateOptions& options) {
    const auto caption = text::trim(record.caption);
    if (caption.empty()) throw PreconditionError("record " + record.video_ref + " has no caption");
    const auto rendered = prompts.render("extract_rules", {{"caption", caption}});

    DatasetRecord out = record;
    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        DecodeParams params;
        params.seed = options.seed;
        params.attempt = attempt;
        std::string raw;
        try {
            raw = client.complete(rendered, params);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw ClientError(std::string("LLM backend failed: ") + e.what());
        }
        try {
            auto parsed = parse_structured_rules(raw);
            if (parsed.rules.empty()) {
                last_error = "empty rule map";
                continue;
            }
            out.physics_rules = std::move(parsed.rules);
            out.rewrites = std::move(parsed.rewrites);
            out.needs_review = false;
            out.review_reason.clear();
            return out;
        } catch (const TagError& e) {
            last_error = e.what();
        } catch (const JsonError& e) {
            last_error = e.what();
        }
    }
    out.physics_rules.clear();
    out.rewrites.clear();
    out.needs_review = true;
    out.review_reason = last_error;
    return out;
}

std::vector<DatasetRecord> annotate_all(const std::vector<DatasetRecord>& records, const LlmClient& client,
                                        const PromptLibrary& prompts, const AnnotateOptions& options) {
    return ordered_map<DatasetRecord>(records.size(), options.workers,
                                      [&](std::size_t i) { return annotate(records[i], client, prompts, options); });
}

nlohmann::json to_json(const Manifest& m) {
    return {{"count", m.count}, {"needs_review", m.needs_review}, {"categories", m.categories}};
}

std::string manifest_path(const std::string& dataset_path) { return dataset_path + ".manifest.json"; }

Manifest emit(const std::vector<DatasetRecord>& records, const std::string& path) {
    Manifest m;
    std::string body;
    for (const auto& r : records) {
        if (text::trim(r.caption).empty()) throw ValidationError("record " + r.video_ref + " has no caption");
        body += nlohmann::json(r).dump() + "\n";
        ++m.count;
        ++m.categories[r.category];
        if (r.needs_review) ++m.needs_review;
    }
    try {
        write_file(path, body);
        write_file(manifest_path(path), to_json(m).dump(2) + "\n");
    } catch (const std::filesystem::filesystem_error& e) {
        throw IoError(e.what());
    }
    return m;
}

namespace {

std::vector<DatasetRecord> load_jsonl(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<DatasetRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<DatasetRecord>());
        } catch (const nlohmann::json::exception& e) {
            throw JsonError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

std::vector<DatasetRecord> load_dataset(const std::string& path) { return load_jsonl(path); }

std::vector<std::vector<std::string>> parse_csv(std::string_view input) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < input.size(); ++i) {
        const char c = input[i];
        if (quoted) {
            if (c == '"' && i + 1 < input.size() && input[i + 1] == '"') {
                field.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < input.size() && input[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field.push_back(c);
        }
    }
    if (quoted) throw ValidationError("unterminated quoted CSV field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<DatasetRecord> load_source(const std::string& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) throw IoError("input not found: " + path);
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".jsonl" || ext == ".json") return load_jsonl(path);

    const auto rows = parse_csv(read_file(path));
    if (rows.empty()) return {};
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[text::to_lower(text::trim(rows[0][i]))] = i;
    for (const char* required : {"video_ref", "caption"}) {
        if (!col.contains(required)) throw ValidationError(path + ": CSV header lacks '" + required + "'");
    }
    std::vector<DatasetRecord> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        auto cell = [&](const char* name) -> std::string {
            auto it = col.find(name);
            if (it == col.end() || it->second >= rows[r].size()) return {};
            return text::trim(rows[r][it->second]);
        };
        DatasetRecord rec;
        rec.video_ref = cell("video_ref");
        rec.caption = cell("caption");
        rec.category = cell("category");
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace phytune
