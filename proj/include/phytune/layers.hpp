#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "phytune/autograd.hpp"
#include "phytune/util.hpp"

namespace phytune {

struct NamedParam {
    std::string name;
    ag::Var var;
};

struct AdapterConfig {
    std::size_t rank = 16;
    double alpha = 32.0;

    double scaling() const { return alpha / static_cast<double>(rank); }
    void validate() const;
};

// Low-rank delta (alpha/rank) * down * up; `up` starts at zero so a fresh
// adapter leaves its layer unchanged.
struct LoraAdapter {
    ag::Var down;  // [in, rank]
    ag::Var up;    // [rank, out]
    double scaling = 1.0;

    static LoraAdapter create(std::size_t in, std::size_t out, const AdapterConfig& cfg, Rng& rng);
    // x [R, in] -> [R, out]
    ag::Var apply(const ag::Var& x) const;
    // (alpha/rank) * down * up as a dense [in, out] matrix.
    Tensor delta() const;
};

struct Linear {
    ag::Var weight;  // [in, out]
    ag::Var bias;    // [out]

    static Linear create(std::size_t in, std::size_t out, Rng& rng, bool requires_grad = true);
    static Linear zeros(std::size_t in, std::size_t out, bool requires_grad = true);
    // Independent copy with its own storage.
    Linear clone(bool requires_grad) const;

    std::size_t in() const { return weight.value().dim(0); }
    std::size_t out() const { return weight.value().dim(1); }

    ag::Var apply(const ag::Var& x, const LoraAdapter* adapter = nullptr) const;
    // weight + adapter delta, for checking the adapted path against a dense layer.
    Tensor effective_weight(const LoraAdapter& adapter) const;
};

struct AttentionWeights {
    Linear q, k, v, o;

    AttentionWeights clone(bool requires_grad) const;
};

struct AttentionAdapters {
    LoraAdapter q, k, v, o;

    static AttentionAdapters create(const AttentionWeights& w, const AdapterConfig& cfg, Rng& rng);
    void append_parameters(const std::string& prefix, std::vector<NamedParam>& out) const;
};

// Multi-head attention of `x` [N, D] over `context` [L, Dc].
ag::Var attention(const ag::Var& x, const ag::Var& context, const AttentionWeights& w, std::size_t heads,
                  const AttentionAdapters* adapters = nullptr);

void append_linear(const std::string& prefix, const Linear& l, std::vector<NamedParam>& out);
void append_attention(const std::string& prefix, const AttentionWeights& w, std::vector<NamedParam>& out);

}  // namespace phytune
