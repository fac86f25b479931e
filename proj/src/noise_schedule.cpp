#include "phytune/noise_schedule.hpp"

#include <algorithm>
#include <cmath>

#include "phytune/errors.hpp"

namespace phytune {

NoiseSchedule::NoiseSchedule(int steps, const std::string& kind) : steps_(steps), kind_(kind) {
    if (steps < 2) throw ScheduleError("a schedule needs at least two timesteps");
    if (kind != "linear") throw ScheduleError("unknown noise schedule '" + kind + "'");
    const double beta_start = 0.1 / steps;
    const double beta_end = 10.0 / steps;
    alpha_bar_.assign(static_cast<std::size_t>(steps), 1.0);
    for (int t = 1; t < steps; ++t) {
        const double frac = steps > 2 ? static_cast<double>(t - 1) / (steps - 2) : 0.0;
        const double beta = std::min(beta_start + frac * (beta_end - beta_start), 0.999);
        alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - beta);
    }
}

void NoiseSchedule::check(int t) const {
    if (t < 0 || t >= steps_) {
        throw ScheduleError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps_) + ")");
    }
}

double NoiseSchedule::alpha_bar(int t) const {
    check(t);
    return alpha_bar_[static_cast<std::size_t>(t)];
}

Tensor NoiseSchedule::corrupt(const Tensor& clean, const Tensor& noise, int t) const {
    if (!clean.same_shape(noise)) throw ShapeError("corrupt: clean and noise shapes differ");
    const double ab = alpha_bar(t);
    const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
    Tensor out(clean.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * clean[i] + s * noise[i];
    return out;
}

ag::Var NoiseSchedule::corrupt(const ag::Var& clean, const ag::Var& noise, int t) const {
    const double ab = alpha_bar(t);
    return ag::add(ag::scale(clean, std::sqrt(ab)), ag::scale(noise, std::sqrt(1.0 - ab)));
}

Tensor NoiseSchedule::estimate_clean(const Tensor& noisy, const Tensor& pred_noise, int t) const {
    if (!noisy.same_shape(pred_noise)) throw ShapeError("estimate_clean: latent and noise shapes differ");
    const double ab = alpha_bar(t);
    const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
    Tensor out(noisy.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (noisy[i] - s * pred_noise[i]) / a;
    return out;
}

ag::Var NoiseSchedule::estimate_clean(const ag::Var& noisy, const ag::Var& pred_noise, int t) const {
    if (noisy.shape() != pred_noise.shape()) throw ShapeError("estimate_clean: latent and noise shapes differ");
    const double ab = alpha_bar(t);
    if (ab == 1.0) return noisy;
    return ag::scale(ag::sub(noisy, ag::scale(pred_noise, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
}

Tensor NoiseSchedule::ddim_step(const Tensor& noisy, const Tensor& pred_noise, int t, int t_prev) const {
    if (t_prev >= t) throw ScheduleError("ddim_step must move to an earlier timestep");
    const Tensor x0 = estimate_clean(noisy, pred_noise, t);
    const double ab = alpha_bar(t_prev);
    const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
    Tensor out(noisy.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + s * pred_noise[i];
    return out;
}

std::vector<int> NoiseSchedule::sampling_timesteps(int count) const {
    count = std::clamp(count, 2, steps_);
    std::vector<int> out;
    for (int i = 0; i < count; ++i) {
        const double pos = static_cast<double>(steps_ - 1) * (count - 1 - i) / (count - 1);
        const int t = static_cast<int>(std::lround(pos));
        if (out.empty() || out.back() != t) out.push_back(t);
    }
    return out;
}

}  // namespace phytune
