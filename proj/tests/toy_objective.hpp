#pragma once

// End-to-end mock objective used by the gradient tests: denoising loss plus
// the weighted physics losses of the decoded clean estimate, as a function of
// the noisy latent x_t.

#include "phytune/physics_losses.hpp"
#include "phytune/toy_dit.hpp"
#include "phytune/verifier.hpp"
#include "support.hpp"

namespace phytune::testing {

struct ToyObjective {
    const ToyDit& model;
    const Verifier& verifier;
    VideoDecoder decoder;
    Tensor text;
    Tensor noise;
    int t;
    std::vector<PhenomenonFact> facts;
    std::string prompt;
    double beta = kDefaultBeta;

    ag::Var operator()(const ag::Var& noisy) const {
        const auto pred = model.forward(noisy, ag::Var::constant(text), t);
        const auto denoise = denoise_loss(pred, ag::Var::constant(noise));
        const auto clean = model.schedule().estimate_clean(noisy, pred, t);
        const auto video = decoder.decode_video(clean);
        const auto eval = verifier.evaluate(video, facts, prompt);
        const auto physics = ag::add(ag::add(phenomena_loss(eval.fact_scores), quality_loss(eval.commonsense)),
                                     quality_loss(eval.semantic));
        return total_loss(denoise, physics, beta);
    }
};

// Relative error between the analytic gradient of `objective` at `x` and
// central differences over `probes` randomly chosen coordinates.
inline double end_to_end_gradient_error(const ToyObjective& objective, const Tensor& x, std::size_t probes, Rng& rng,
                                        double h = 1e-5) {
    auto var = ag::Var::parameter(x);
    ag::backward(objective(var));
    const auto grad = var.grad();
    std::vector<double> analytic, numeric;
    Tensor probe = x;
    for (std::size_t n = 0; n < probes; ++n) {
        const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(x.size())));
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = objective(ag::Var::constant(probe)).item();
        probe[i] = orig - h;
        const double down = objective(ag::Var::constant(probe)).item();
        probe[i] = orig;
        analytic.push_back(grad[i]);
        numeric.push_back((up - down) / (2 * h));
    }
    return gradient_rel_error(analytic, numeric);
}

}  // namespace phytune::testing
