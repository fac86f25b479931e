#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phytune/autograd.hpp"
#include "phytune/verifier.hpp"

namespace phytune {

inline constexpr double kScoreNormalizer = 5.0;  // tau
inline constexpr double kDefaultBeta = 0.1;

struct LossBreakdown {
    double denoise = 0.0;
    double phenomena = 0.0;
    double commonsense = 0.0;
    double semantic = 0.0;
    double beta = kDefaultBeta;
    double total = 0.0;
};

void to_json(nlohmann::json& j, const LossBreakdown& b);
void from_json(const nlohmann::json& j, LossBreakdown& b);

enum class Reduction { sum, mean };
Reduction parse_reduction(const std::string& name);

// sum_i (E(f_i) - 1)^2, or the mean over facts.
double phenomena_loss(std::span<const double> expected, Reduction reduction = Reduction::sum);
double phenomena_loss(const std::vector<FactVerdict>& verdicts, Reduction reduction = Reduction::sum);
std::vector<double> phenomena_loss_gradient(std::span<const double> expected, Reduction reduction = Reduction::sum);

// (score / 5 - 1)^2 for a score in [1, 5].
double commonsense_loss(double score);
double semantic_loss(double score);
double quality_loss_gradient(double score);

LossBreakdown total_loss(double denoise, double phenomena, double commonsense, double semantic,
                         double beta = kDefaultBeta);

// Graph versions used by the trainer.
ag::Var phenomena_loss(std::span<const ag::Var> expected, Reduction reduction = Reduction::sum);
ag::Var quality_loss(const ag::Var& score);
ag::Var total_loss(const ag::Var& denoise, const ag::Var& physics_sum, double beta);

}  // namespace phytune
