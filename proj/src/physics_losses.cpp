#include "phytune/physics_losses.hpp"

#include <cmath>

#include "phytune/errors.hpp"

namespace phytune {

void to_json(nlohmann::json& j, const LossBreakdown& b) {
    j = {{"denoise", b.denoise},         {"phenomena", b.phenomena}, {"commonsense", b.commonsense},
         {"semantic", b.semantic},       {"beta", b.beta},           {"total", b.total}};
}

void from_json(const nlohmann::json& j, LossBreakdown& b) {
    b.denoise = j.at("denoise").get<double>();
    b.phenomena = j.at("phenomena").get<double>();
    b.commonsense = j.at("commonsense").get<double>();
    b.semantic = j.at("semantic").get<double>();
    b.beta = j.at("beta").get<double>();
    b.total = j.at("total").get<double>();
}

Reduction parse_reduction(const std::string& name) {
    if (name == "sum") return Reduction::sum;
    if (name == "mean") return Reduction::mean;
    throw ConfigError("unknown reduction '" + name + "' (expected sum or mean)");
}

namespace {

void check_expected(std::span<const double> expected) {
    if (expected.empty()) throw EmptyFactList("phenomena loss needs at least one fact");
    for (double e : expected) {
        if (!(e >= 0.0 && e <= 1.0)) throw RangeError("fact score " + std::to_string(e) + " outside [0, 1]");
    }
}

void check_score(double score) {
    if (!(score >= 1.0 && score <= kScoreNormalizer)) {
        throw RangeError("quality score " + std::to_string(score) + " outside [1, 5]");
    }
}

}  // namespace

double phenomena_loss(std::span<const double> expected, Reduction reduction) {
    check_expected(expected);
    double acc = 0.0;
    for (double e : expected) acc += (e - 1.0) * (e - 1.0);
    return reduction == Reduction::mean ? acc / static_cast<double>(expected.size()) : acc;
}

double phenomena_loss(const std::vector<FactVerdict>& verdicts, Reduction reduction) {
    std::vector<double> e;
    for (const auto& v : verdicts) e.push_back(v.expected);
    return phenomena_loss(e, reduction);
}

std::vector<double> phenomena_loss_gradient(std::span<const double> expected, Reduction reduction) {
    check_expected(expected);
    const double k = reduction == Reduction::mean ? 1.0 / static_cast<double>(expected.size()) : 1.0;
    std::vector<double> g;
    for (double e : expected) g.push_back(2.0 * (e - 1.0) * k);
    return g;
}

double commonsense_loss(double score) {
    check_score(score);
    const double d = score / kScoreNormalizer - 1.0;
    return d * d;
}

double semantic_loss(double score) { return commonsense_loss(score); }

double quality_loss_gradient(double score) {
    check_score(score);
    return 2.0 * (score / kScoreNormalizer - 1.0) / kScoreNormalizer;
}

LossBreakdown total_loss(double denoise, double phenomena, double commonsense, double semantic, double beta) {
    for (double c : {denoise, phenomena, commonsense, semantic}) {
        if (std::isnan(c) || c < 0.0) throw NegativeComponent("loss components must be non-negative");
    }
    if (!(beta > 0.0)) throw PreconditionError("beta must be positive");
    LossBreakdown b{denoise, phenomena, commonsense, semantic, beta, 0.0};
    b.total = denoise + beta * (phenomena + commonsense + semantic);
    return b;
}

ag::Var phenomena_loss(std::span<const ag::Var> expected, Reduction reduction) {
    if (expected.empty()) throw EmptyFactList("phenomena loss needs at least one fact");
    ag::Var acc;
    for (const auto& e : expected) {
        auto term = ag::square(ag::add_scalar(e, -1.0));
        acc = acc.defined() ? ag::add(acc, term) : term;
    }
    return reduction == Reduction::mean ? ag::scale(acc, 1.0 / static_cast<double>(expected.size())) : acc;
}

ag::Var quality_loss(const ag::Var& score) {
    check_score(score.item());
    return ag::square(ag::add_scalar(ag::scale(score, 1.0 / kScoreNormalizer), -1.0));
}

ag::Var total_loss(const ag::Var& denoise, const ag::Var& physics_sum, double beta) {
    if (!(beta > 0.0)) throw PreconditionError("beta must be positive");
    return ag::add(denoise, ag::scale(physics_sum, beta));
}

}  // namespace phytune
