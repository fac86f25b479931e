#pragma once

#include <vector>

#include "phytune/checkpoint.hpp"
#include "phytune/context_reasoner.hpp"
#include "phytune/layers.hpp"
#include "phytune/text_encoder.hpp"
#include "phytune/toy_dit.hpp"

namespace phytune {

// One block's refinement site: a frozen copy of the block's cross-attention
// with low-rank adapters on q/k/v/o, followed by a zero-initialized gate.
struct InjectionBlock {
    AttentionWeights clone;
    AttentionAdapters adapters;
    Linear gate;
};

class InjectionBranch {
public:
    // IncompatibleModel when the model has no cross-attention blocks.
    static InjectionBranch build(const ToyDit& model, const AdapterConfig& config);

    const AdapterConfig& config() const noexcept { return config_; }
    std::size_t block_count() const noexcept { return blocks_.size(); }
    const InjectionBlock& block(std::size_t i) const { return blocks_.at(i); }
    InjectionBlock& mutable_block(std::size_t i) { return blocks_.at(i); }
    std::size_t heads() const noexcept { return heads_; }
    const TextEncoder& fact_encoder() const noexcept { return encoder_; }

    bool enabled() const noexcept { return enabled_; }
    void set_enabled(bool on) noexcept { enabled_ = on; }

    // Adapter and gate parameters.
    std::vector<NamedParam> trainable_parameters() const;
    // Cloned attention weights.
    std::vector<NamedParam> clone_parameters() const;
    std::size_t trainable_count() const;
    // Per block: gate (dim^2 + dim) plus rank * (in + out) for each adapted projection.
    static std::size_t expected_trainable_count(const DitConfig& model, const AdapterConfig& config);

    // Failure facts joined by the separator token, embedded as [L, text_dim].
    Tensor encode_failure_facts(const std::vector<PhenomenonFact>& facts) const;
    std::vector<std::size_t> failure_token_ids(const std::vector<PhenomenonFact>& facts) const;

    ag::Var contribution(std::size_t block, const ag::Var& hidden, const ag::Var& failure) const;

    Checkpoint checkpoint() const;
    void load(const Checkpoint& ckpt);

private:
    InjectionBranch(AdapterConfig config, std::size_t heads, std::size_t text_dim, TextEncoder encoder)
        : config_(config), heads_(heads), text_dim_(text_dim), encoder_(std::move(encoder)) {}

    AdapterConfig config_;
    std::size_t heads_;
    std::size_t text_dim_;
    TextEncoder encoder_;
    std::vector<InjectionBlock> blocks_;
    bool enabled_ = true;
};

// Base forward plus each block's gated clone attention over `failure`
// [L, text_dim]. A disabled branch takes the plain forward path.
ag::Var forward_with_injection(const ToyDit& model, const InjectionBranch& branch, const ag::Var& latent,
                               const ag::Var& text, const ag::Var& failure, int t);

}  // namespace phytune
