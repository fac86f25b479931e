#include "phytune/optimizer.hpp"

#include <cmath>

#include "phytune/errors.hpp"

namespace phytune {

SgdMomentum::SgdMomentum(double learning_rate, double momentum, double clip_norm)
    : lr_(learning_rate), momentum_(momentum), clip_norm_(clip_norm) {
    if (!(learning_rate > 0.0)) throw PreconditionError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw PreconditionError("momentum must lie in [0, 1)");
    if (clip_norm < 0.0) throw PreconditionError("clip norm must be non-negative");
}

double SgdMomentum::step(const std::vector<NamedParam>& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.var.requires_grad() || !p.var.has_grad()) continue;
        for (double g : p.var.node()->grad.values()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    const double factor = (clip_norm_ > 0.0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;

    for (const auto& p : params) {
        if (!p.var.requires_grad() || !p.var.has_grad()) continue;
        ag::Var v = p.var;
        const auto& g = v.node()->grad;
        auto [it, fresh] = velocity_.try_emplace(v.node().get(), Tensor(v.shape()));
        Tensor& vel = it->second;
        Tensor& w = v.mutable_value();
        for (std::size_t i = 0; i < w.size(); ++i) {
            vel[i] = momentum_ * vel[i] + factor * g[i];
            w[i] -= lr_ * vel[i];
        }
    }
    return norm;
}

void SgdMomentum::zero_grad(const std::vector<NamedParam>& params) const {
    for (const auto& p : params) {
        ag::Var v = p.var;
        v.zero_grad();
    }
}

}  // namespace phytune
