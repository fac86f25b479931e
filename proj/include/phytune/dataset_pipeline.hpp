#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phytune/llm_client.hpp"
#include "phytune/prompt_library.hpp"
#include "phytune/structured_rules.hpp"

namespace phytune {

struct DatasetRecord {
    std::string video_ref;
    std::string caption;  // training text
    std::string category;
    RuleMap physics_rules;
    std::vector<std::string> rewrites;  // auxiliary, up to 5
    double realism_score = 1.0;
    bool needs_review = false;
    std::string review_reason;

    bool operator==(const DatasetRecord&) const = default;
};

void to_json(nlohmann::json& j, const DatasetRecord& r);
void from_json(const nlohmann::json& j, DatasetRecord& r);

// Probability that a caption describes real footage.
class RealismClassifier {
public:
    virtual ~RealismClassifier() = default;
    virtual std::string name() const = 0;
    // ClassifierError on failure.
    virtual double realism(const std::string& caption) const = 0;
};

// Two-label keyword rule: "realistic footage" unless the caption mentions a
// cartoon/animation/game marker.
class KeywordRealismClassifier : public RealismClassifier {
public:
    std::string name() const override { return "keyword"; }
    double realism(const std::string& caption) const override;
    static const std::vector<std::string>& markers();
};

// Fixed score per exact caption; unknown captions get `fallback`, or a
// ClassifierError when no fallback is set.
class RiggedRealismClassifier : public RealismClassifier {
public:
    explicit RiggedRealismClassifier(std::map<std::string, double> scores, std::optional<double> fallback = {})
        : scores_(std::move(scores)), fallback_(fallback) {}
    std::string name() const override { return "rigged"; }
    double realism(const std::string& caption) const override;

private:
    std::map<std::string, double> scores_;
    std::optional<double> fallback_;
};

struct DroppedRecord {
    std::size_t index = 0;
    std::string video_ref;
    std::string caption;
    double realism_score = 0.0;
};

struct FilterResult {
    std::vector<DatasetRecord> accepted;
    std::vector<DroppedRecord> dropped;
};

// Keeps records with realism >= threshold, in input order. Accepted records
// gain their realism_score; nothing else about them changes.
FilterResult filter_realistic(const std::vector<DatasetRecord>& records, const RealismClassifier& classifier,
                              double threshold = 0.5, std::size_t workers = 1);

struct AnnotateOptions {
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

// Extracts physics rules and rewrites for the caption. Malformed output is
// retried once; a second failure (or an empty rule map) flags the record for
// review and leaves it without rules.
DatasetRecord annotate(const DatasetRecord& record, const LlmClient& client, const PromptLibrary& prompts,
                       const AnnotateOptions& options = {});
std::vector<DatasetRecord> annotate_all(const std::vector<DatasetRecord>& records, const LlmClient& client,
                                        const PromptLibrary& prompts, const AnnotateOptions& options = {});

struct Manifest {
    std::size_t count = 0;
    std::size_t needs_review = 0;
    std::map<std::string, std::size_t> categories;
};

nlohmann::json to_json(const Manifest& m);

// `path` receives the JSON-lines records, `path + ".manifest.json"` the manifest.
Manifest emit(const std::vector<DatasetRecord>& records, const std::string& path);
std::string manifest_path(const std::string& dataset_path);
std::vector<DatasetRecord> load_dataset(const std::string& path);

// Source rows (video_ref, caption, category) from CSV with a header row, or
// from JSON-lines when the extension is .jsonl/.json.
std::vector<DatasetRecord> load_source(const std::string& path);
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace phytune
