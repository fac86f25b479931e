#pragma once

#include <string>
#include <vector>

#include "phytune/autograd.hpp"

namespace phytune {

// Discrete DDPM-style schedule over t in [0, T). t = 0 is the clean latent
// (alpha_bar = 1); betas grow linearly over t = 1..T-1.
class NoiseSchedule {
public:
    NoiseSchedule(int steps, const std::string& kind = "linear");

    int steps() const noexcept { return steps_; }
    const std::string& kind() const noexcept { return kind_; }
    double alpha_bar(int t) const;
    void check(int t) const;

    // sqrt(ab) x0 + sqrt(1 - ab) eps
    Tensor corrupt(const Tensor& clean, const Tensor& noise, int t) const;
    ag::Var corrupt(const ag::Var& clean, const ag::Var& noise, int t) const;
    // (x_t - sqrt(1 - ab) eps_hat) / sqrt(ab)
    Tensor estimate_clean(const Tensor& noisy, const Tensor& pred_noise, int t) const;
    ag::Var estimate_clean(const ag::Var& noisy, const ag::Var& pred_noise, int t) const;

    // Deterministic DDIM update from t to t_prev < t.
    Tensor ddim_step(const Tensor& noisy, const Tensor& pred_noise, int t, int t_prev) const;
    // Descending timesteps T-1 .. 0 with about `count` entries.
    std::vector<int> sampling_timesteps(int count) const;

private:
    int steps_;
    std::string kind_;
    std::vector<double> alpha_bar_;
};

}  // namespace phytune
