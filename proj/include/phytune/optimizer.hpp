#pragma once

#include <map>
#include <vector>

#include "phytune/layers.hpp"

namespace phytune {

// SGD with heavy-ball momentum and optional global gradient-norm clipping.
// Parameters that received no gradient in the last backward pass are left
// untouched, velocity included.
class SgdMomentum {
public:
    SgdMomentum(double learning_rate, double momentum, double clip_norm = 0.0);

    // Returns the pre-clipping gradient norm.
    double step(const std::vector<NamedParam>& params);
    void zero_grad(const std::vector<NamedParam>& params) const;

    double learning_rate() const noexcept { return lr_; }

private:
    double lr_;
    double momentum_;
    double clip_norm_;
    std::map<const ag::Node*, Tensor> velocity_;
};

}  // namespace phytune
