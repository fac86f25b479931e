#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "eval_oracle.hpp"
#include "phytune/errors.hpp"
#include "phytune/eval_harness.hpp"
#include "support.hpp"

using namespace phytune;
using namespace phytune::testing;

namespace {

void check_row(const CategoryStats& s, const OracleRow& o) {
    CHECK(static_cast<double>(s.count) == o.count);
    CHECK(std::abs(s.pc - o.pc) <= 1e-12);
    CHECK(std::abs(s.sa - o.sa) <= 1e-12);
    CHECK(std::abs(s.overall - o.overall) <= 1e-12);
    CHECK(s.phenomena.has_value() == o.phenomena.has_value());
    if (s.phenomena && o.phenomena) CHECK(std::abs(*s.phenomena - *o.phenomena) <= 1e-12);
    CHECK(s.order.has_value() == o.order.has_value());
    if (s.order && o.order) CHECK(std::abs(*s.order - *o.order) <= 1e-12);
}

EvalRecord rec(std::string cat, double pc, double sa) { return {"id", std::move(cat), pc, sa, {}, {}}; }

}  // namespace

TEST_CASE("overall rule fixtures") {
    CHECK(overall(4.0, 4.0) == 1);
    CHECK(overall(4.5, 3.9) == 0);
    CHECK(overall(5, 5) == 1);
    CHECK(overall(1, 5) == 0);
}

TEST_CASE("overall rule on the exhaustive half-point grid") {
    for (int i = 0; i <= 8; ++i) {
        for (int j = 0; j <= 8; ++j) {
            const double pc = 1.0 + 0.5 * i, sa = 1.0 + 0.5 * j;
            CHECK(overall(pc, sa) == ((pc >= 4.0 && sa >= 4.0) ? 1 : 0));
            if (i < 8) CHECK(overall(pc + 0.5, sa) >= overall(pc, sa));
            if (j < 8) CHECK(overall(pc, sa + 0.5) >= overall(pc, sa));
        }
    }
}

TEST_CASE("record validation") {
    CHECK_THROWS_AS(rec("a", 0.5, 3).validate(), RangeError);
    CHECK_THROWS_AS(rec("a", 3, 5.1).validate(), RangeError);
    auto r = rec("a", 3, 3);
    r.phenomena_score = std::nan("");
    CHECK_THROWS_AS(r.validate(), RangeError);
    CHECK_THROWS_AS(aggregate({}), EmptyInput);
}

TEST_CASE("small aggregates") {
    const auto one = aggregate({rec("m", 4.5, 3.5)});
    CHECK(one.weighted.pc == 4.5);
    CHECK(one.weighted.sa == 3.5);
    CHECK(one.weighted.overall == 0.0);
    const auto two = aggregate({rec("m", 4, 4), rec("m", 1, 1)});
    CHECK(two.weighted.overall == 0.5);
}

TEST_CASE("fixture aggregate matches the spreadsheet oracle") {
    const auto path = fixture("eval_records.jsonl");
    const auto records = load_eval_records(path);
    REQUIRE(records.size() == 20);
    const auto summary = aggregate(records);
    const auto oracle = eval_oracle(read_jsonl(path));
    REQUIRE(summary.categories.size() == oracle.categories.size());
    for (const auto& c : summary.categories) check_row(c, oracle.categories.at(c.category));
    check_row(summary.weighted, oracle.weighted);
    check_row(summary.unweighted, oracle.unweighted);
    CHECK(std::is_sorted(summary.categories.begin(), summary.categories.end(),
                         [](const auto& a, const auto& b) { return a.category < b.category; }));
}

TEST_CASE("aggregate is permutation invariant and bounded by its inputs") {
    Rng rng(71);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<EvalRecord> recs;
        const int n = 1 + rng.uniform_int(0, 30);
        for (int i = 0; i < n; ++i) {
            auto r = rec(std::string(1, static_cast<char>('a' + rng.uniform_int(0, 4))), 1 + 4 * rng.uniform(),
                         1 + 4 * rng.uniform());
            if (rng.uniform() < 0.5) r.phenomena_score = rng.uniform();
            recs.push_back(r);
        }
        const auto a = aggregate(recs);
        auto shuffled = recs;
        for (std::size_t i = shuffled.size(); i > 1; --i) {
            std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
        }
        const auto b = aggregate(shuffled);
        CHECK(std::abs(a.weighted.pc - b.weighted.pc) <= 1e-12);
        CHECK(std::abs(a.weighted.sa - b.weighted.sa) <= 1e-12);
        CHECK(a.weighted.overall == doctest::Approx(b.weighted.overall).epsilon(1e-12));
        double lo = 5, hi = 1;
        for (const auto& r : recs) {
            lo = std::min(lo, r.pc);
            hi = std::max(hi, r.pc);
        }
        CHECK(a.weighted.pc >= lo - 1e-12);
        CHECK(a.weighted.pc <= hi + 1e-12);
        CHECK(a.unweighted.pc >= lo - 1e-12);
        CHECK(a.unweighted.pc <= hi + 1e-12);
    }
}

TEST_CASE("csv, json and plots") {
    const auto summary = aggregate(load_eval_records(fixture("eval_records.jsonl")));
    const auto csv = summary_csv(summary);
    CHECK(csv.starts_with("category,count,pc,sa,overall,phenomena,order\n"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(summary.categories.size() + 3));
    CHECK(csv.find("all_weighted,20,") != std::string::npos);
    const auto j = summary_json(summary);
    CHECK(j["weighted"]["count"] == 20);
    CHECK(j["categories"].size() == summary.categories.size());

    const auto dir = scratch_dir("plots");
    const auto paths = write_summary_plots(summary, dir.string());
    CHECK(paths.size() == 3);
    for (const auto& p : paths) {
        CHECK(std::filesystem::exists(p));
        CHECK(read_file(p).find("<svg") != std::string::npos);
    }
}

TEST_CASE("malformed record files") {
    const auto dir = scratch_dir("eval_bad");
    write_file((dir / "bad.jsonl").string(), "{\"video_id\": \"a\", \"category\": \"x\", \"pc\": 3, \"sa\": 9}\n");
    CHECK_THROWS_AS(load_eval_records((dir / "bad.jsonl").string()), RangeError);
    write_file((dir / "broken.jsonl").string(), "{oops\n");
    CHECK_THROWS_AS(load_eval_records((dir / "broken.jsonl").string()), JsonError);
    CHECK_THROWS_AS(load_eval_records((dir / "missing.jsonl").string()), IoError);
}
