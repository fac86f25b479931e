#include "phytune/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "phytune/errors.hpp"
#include "phytune/util.hpp"

namespace phytune {

void EvalRecord::validate() const {
    auto in_range = [](double v) { return v >= 1.0 && v <= 5.0; };
    if (!in_range(pc)) throw RangeError(fmt::format("record {}: pc {} outside [1, 5]", video_id, pc));
    if (!in_range(sa)) throw RangeError(fmt::format("record {}: sa {} outside [1, 5]", video_id, sa));
    if (phenomena_score && !std::isfinite(*phenomena_score)) throw RangeError("phenomena_score must be finite");
    if (order_score && !std::isfinite(*order_score)) throw RangeError("order_score must be finite");
}

void to_json(nlohmann::json& j, const EvalRecord& r) {
    j = {{"video_id", r.video_id}, {"category", r.category}, {"pc", r.pc}, {"sa", r.sa}};
    if (r.phenomena_score) j["phenomena_score"] = *r.phenomena_score;
    if (r.order_score) j["order_score"] = *r.order_score;
}

void from_json(const nlohmann::json& j, EvalRecord& r) {
    r.video_id = j.at("video_id").get<std::string>();
    r.category = j.value("category", std::string("uncategorized"));
    r.pc = j.at("pc").get<double>();
    r.sa = j.at("sa").get<double>();
    r.phenomena_score.reset();
    r.order_score.reset();
    if (j.contains("phenomena_score") && !j.at("phenomena_score").is_null()) {
        r.phenomena_score = j.at("phenomena_score").get<double>();
    }
    if (j.contains("order_score") && !j.at("order_score").is_null()) r.order_score = j.at("order_score").get<double>();
}

int overall(double pc, double sa) {
    EvalRecord r;
    r.pc = pc;
    r.sa = sa;
    r.validate();
    return pc >= 4.0 && sa >= 4.0 ? 1 : 0;
}

int overall(const EvalRecord& record) {
    record.validate();
    return overall(record.pc, record.sa);
}

namespace {

CategoryStats mean_of(const std::string& name, const std::vector<const EvalRecord*>& records) {
    CategoryStats s;
    s.category = name;
    s.count = records.size();
    double phen = 0.0, order = 0.0;
    for (const auto* r : records) {
        s.pc += r->pc;
        s.sa += r->sa;
        s.overall += overall(*r);
        if (r->phenomena_score) {
            phen += *r->phenomena_score;
            ++s.phenomena_count;
        }
        if (r->order_score) {
            order += *r->order_score;
            ++s.order_count;
        }
    }
    const double n = static_cast<double>(s.count);
    s.pc /= n;
    s.sa /= n;
    s.overall /= n;
    if (s.phenomena_count) s.phenomena = phen / static_cast<double>(s.phenomena_count);
    if (s.order_count) s.order = order / static_cast<double>(s.order_count);
    return s;
}

CategoryStats mean_of_categories(const std::vector<CategoryStats>& cats) {
    CategoryStats s;
    s.category = "all_unweighted";
    double phen = 0.0, order = 0.0;
    std::size_t phen_n = 0, order_n = 0;
    for (const auto& c : cats) {
        s.count += c.count;
        s.pc += c.pc;
        s.sa += c.sa;
        s.overall += c.overall;
        if (c.phenomena) {
            phen += *c.phenomena;
            ++phen_n;
            s.phenomena_count += c.phenomena_count;
        }
        if (c.order) {
            order += *c.order;
            ++order_n;
            s.order_count += c.order_count;
        }
    }
    const double n = static_cast<double>(cats.size());
    s.pc /= n;
    s.sa /= n;
    s.overall /= n;
    if (phen_n) s.phenomena = phen / static_cast<double>(phen_n);
    if (order_n) s.order = order / static_cast<double>(order_n);
    return s;
}

std::string opt(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

}  // namespace

EvalSummary aggregate(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw EmptyInput("no evaluation records");
    std::map<std::string, std::vector<const EvalRecord*>> groups;
    std::vector<const EvalRecord*> all;
    for (const auto& r : records) {
        r.validate();
        groups[r.category].push_back(&r);
        all.push_back(&r);
    }
    EvalSummary out;
    for (const auto& [name, members] : groups) out.categories.push_back(mean_of(name, members));
    out.weighted = mean_of("all_weighted", all);
    out.unweighted = mean_of_categories(out.categories);
    return out;
}

std::vector<EvalRecord> load_eval_records(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<EvalRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            auto r = nlohmann::json::parse(line).get<EvalRecord>();
            r.validate();
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw JsonError(fmt::format("{}:{}: {}", path, lineno, e.what()));
        }
    }
    return out;
}

std::string summary_csv(const EvalSummary& summary) {
    std::string out = "category,count,pc,sa,overall,phenomena,order\n";
    auto row = [&](const CategoryStats& s) {
        out += fmt::format("{},{},{},{},{},{},{}\n", s.category, s.count, s.pc, s.sa, s.overall, opt(s.phenomena),
                           opt(s.order));
    };
    for (const auto& c : summary.categories) row(c);
    row(summary.weighted);
    row(summary.unweighted);
    return out;
}

nlohmann::json summary_json(const EvalSummary& summary) {
    auto stats = [](const CategoryStats& s) {
        nlohmann::json j = {{"category", s.category}, {"count", s.count}, {"pc", s.pc},
                            {"sa", s.sa},             {"overall", s.overall}};
        j["phenomena"] = s.phenomena ? nlohmann::json(*s.phenomena) : nlohmann::json();
        j["order"] = s.order ? nlohmann::json(*s.order) : nlohmann::json();
        return j;
    };
    nlohmann::json cats = nlohmann::json::array();
    for (const auto& c : summary.categories) cats.push_back(stats(c));
    return {{"categories", cats}, {"weighted", stats(summary.weighted)}, {"unweighted", stats(summary.unweighted)}};
}

namespace {

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string bar_chart(const std::string& title, const std::vector<std::pair<std::string, double>>& bars, double max) {
    const int bar_w = 60, gap = 20, left = 50, top = 40, plot_h = 200;
    const int width = left + static_cast<int>(bars.size()) * (bar_w + gap) + gap;
    const int height = top + plot_h + 60;
    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
        "font-size=\"11\">\n<text x=\"{}\" y=\"20\" font-size=\"14\">{}</text>\n"
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        width, height, left, xml_escape(title), left, top + plot_h, width - gap / 2, top + plot_h);
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double v = std::clamp(bars[i].second / max, 0.0, 1.0);
        const int h = static_cast<int>(std::lround(v * plot_h));
        const int x = left + gap + static_cast<int>(i) * (bar_w + gap);
        svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#4a7ab5\"/>\n", x,
                           top + plot_h - h, bar_w, h);
        svg += fmt::format("<text x=\"{}\" y=\"{}\">{:.3f}</text>\n", x, top + plot_h - h - 4, bars[i].second);
        svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", x, top + plot_h + 16, xml_escape(bars[i].first));
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace

std::vector<std::string> write_summary_plots(const EvalSummary& summary, const std::string& dir) {
    struct Metric {
        const char* name;
        double CategoryStats::*field;
        double max;
    };
    const Metric metrics[] = {{"pc", &CategoryStats::pc, 5.0},
                              {"sa", &CategoryStats::sa, 5.0},
                              {"overall", &CategoryStats::overall, 1.0}};
    std::vector<std::string> paths;
    for (const auto& m : metrics) {
        std::vector<std::pair<std::string, double>> bars;
        for (const auto& c : summary.categories) bars.emplace_back(c.category, c.*(m.field));
        bars.emplace_back("all", summary.weighted.*(m.field));
        const auto path = (std::filesystem::path(dir) / fmt::format("{}.svg", m.name)).string();
        write_file(path, bar_chart(fmt::format("Mean {} by category", m.name), bars, m.max));
        paths.push_back(path);
    }
    return paths;
}

}  // namespace phytune
