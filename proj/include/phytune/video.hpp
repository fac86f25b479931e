#pragma once

#include "phytune/autograd.hpp"

namespace phytune {

// Diffusion latent x_t shaped [m, c, h, w] at timestep t.
struct LatentClip {
    Tensor data;
    int timestep = 0;
};

// Decoded clip, frames shaped [m, 3, H, W] with values in [0, 1].
struct PixelVideo {
    ag::Var frames;

    std::size_t frame_count() const { return frames.value().dim(0); }
    bool empty() const { return !frames.defined() || frames.value().empty(); }
};

}  // namespace phytune
