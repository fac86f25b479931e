#pragma once

// Spreadsheet-style oracle for evaluation summaries: raw JSON rows, column
// sums divided by counts, no shared code with the harness.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phytune/util.hpp"

namespace phytune::testing {

struct OracleRow {
    double count = 0, pc = 0, sa = 0, overall = 0;
    std::optional<double> phenomena, order;
};

struct EvalOracle {
    std::map<std::string, OracleRow> categories;
    OracleRow weighted, unweighted;
};

inline EvalOracle eval_oracle(const std::vector<nlohmann::json>& rows) {
    struct Acc {
        double n = 0, pc = 0, sa = 0, ov = 0, ph = 0, phn = 0, od = 0, odn = 0;
    };
    std::map<std::string, Acc> acc;
    Acc all;
    for (const auto& r : rows) {
        for (Acc* a : {&acc[r["category"].get<std::string>()], &all}) {
            const double pc = r["pc"], sa = r["sa"];
            a->n += 1;
            a->pc += pc;
            a->sa += sa;
            a->ov += (pc >= 4 && sa >= 4) ? 1 : 0;
            if (r.contains("phenomena_score")) {
                a->ph += r["phenomena_score"].get<double>();
                a->phn += 1;
            }
            if (r.contains("order_score")) {
                a->od += r["order_score"].get<double>();
                a->odn += 1;
            }
        }
    }
    auto finish = [](const Acc& a) {
        OracleRow o{a.n, a.pc / a.n, a.sa / a.n, a.ov / a.n, {}, {}};
        if (a.phn > 0) o.phenomena = a.ph / a.phn;
        if (a.odn > 0) o.order = a.od / a.odn;
        return o;
    };
    EvalOracle out;
    double ph = 0, phn = 0, od = 0, odn = 0;
    for (const auto& [name, a] : acc) {
        out.categories[name] = finish(a);
        const auto& o = out.categories[name];
        out.unweighted.count += o.count;
        out.unweighted.pc += o.pc / static_cast<double>(acc.size());
        out.unweighted.sa += o.sa / static_cast<double>(acc.size());
        out.unweighted.overall += o.overall / static_cast<double>(acc.size());
        if (o.phenomena) {
            ph += *o.phenomena;
            phn += 1;
        }
        if (o.order) {
            od += *o.order;
            odn += 1;
        }
    }
    if (phn > 0) out.unweighted.phenomena = ph / phn;
    if (odn > 0) out.unweighted.order = od / odn;
    out.weighted = finish(all);
    return out;
}

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::vector<nlohmann::json> rows;
    for (const auto& line : [&] {
             std::vector<std::string> lines;
             std::string cur;
             for (char c : read_file(path)) {
                 if (c == '\n') {
                     lines.push_back(cur);
                     cur.clear();
                 } else {
                     cur.push_back(c);
                 }
             }
             if (!cur.empty()) lines.push_back(cur);
             return lines;
         }()) {
        if (!text::trim(line).empty()) rows.push_back(nlohmann::json::parse(line));
    }
    return rows;
}

}  // namespace phytune::testing
