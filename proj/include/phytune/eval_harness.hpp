#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace phytune {

struct EvalRecord {
    std::string video_id;
    std::string category;
    double pc = 1.0;  // physical commonsense, [1, 5]
    double sa = 1.0;  // semantic adherence, [1, 5]
    std::optional<double> phenomena_score;
    std::optional<double> order_score;

    // RangeError when pc or sa is outside [1, 5] or a sub-score is not finite.
    void validate() const;
};

void to_json(nlohmann::json& j, const EvalRecord& r);
void from_json(const nlohmann::json& j, EvalRecord& r);

// 1 when both pc and sa are at least 4.
int overall(double pc, double sa);
int overall(const EvalRecord& record);

struct CategoryStats {
    std::string category;
    std::size_t count = 0;
    double pc = 0.0;
    double sa = 0.0;
    double overall = 0.0;
    std::optional<double> phenomena;
    std::optional<double> order;
    std::size_t phenomena_count = 0;
    std::size_t order_count = 0;
};

struct EvalSummary {
    std::vector<CategoryStats> categories;  // sorted by name
    CategoryStats weighted;                 // mean over all records
    CategoryStats unweighted;               // mean of the category means
};

// EmptyInput on no records.
EvalSummary aggregate(const std::vector<EvalRecord>& records);

// JSON-lines; blank lines are skipped.
std::vector<EvalRecord> load_eval_records(const std::string& path);

std::string summary_csv(const EvalSummary& summary);
nlohmann::json summary_json(const EvalSummary& summary);

// One SVG bar chart per metric (pc, sa, overall) under `dir`; returns the paths.
std::vector<std::string> write_summary_plots(const EvalSummary& summary, const std::string& dir);

}  // namespace phytune
