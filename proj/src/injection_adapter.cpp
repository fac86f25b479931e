#include "phytune/injection_adapter.hpp"

#include "phytune/errors.hpp"

namespace phytune {

InjectionBranch InjectionBranch::build(const ToyDit& model, const AdapterConfig& config) {
    config.validate();
    if (model.block_count() == 0) throw IncompatibleModel("model has no cross-attention sites");
    const auto& mc = model.config();
    InjectionBranch branch(config, mc.heads, mc.text_dim, model.text_encoder());
    Rng rng(mc.seed ^ 0x696e6a656374ULL);
    for (std::size_t b = 0; b < model.block_count(); ++b) {
        InjectionBlock blk;
        blk.clone = model.block(b).cross_attn.clone(false);
        blk.adapters = AttentionAdapters::create(blk.clone, config, rng);
        blk.gate = Linear::zeros(mc.model_dim, mc.model_dim);
        branch.blocks_.push_back(std::move(blk));
    }
    return branch;
}

std::vector<NamedParam> InjectionBranch::trainable_parameters() const {
    std::vector<NamedParam> out;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const std::string prefix = "inject." + std::to_string(b);
        blocks_[b].adapters.append_parameters(prefix + ".lora", out);
        append_linear(prefix + ".gate", blocks_[b].gate, out);
    }
    return out;
}

std::vector<NamedParam> InjectionBranch::clone_parameters() const {
    std::vector<NamedParam> out;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        append_attention("inject." + std::to_string(b) + ".clone", blocks_[b].clone, out);
    }
    return out;
}

std::size_t InjectionBranch::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : trainable_parameters()) n += p.var.size();
    return n;
}

std::size_t InjectionBranch::expected_trainable_count(const DitConfig& model, const AdapterConfig& config) {
    const std::size_t d = model.model_dim, dt = model.text_dim, r = config.rank;
    const std::size_t gate = d * d + d;
    const std::size_t adapters = r * (d + d) + r * (dt + d) + r * (dt + d) + r * (d + d);
    return model.blocks * (gate + adapters);
}

std::vector<std::size_t> InjectionBranch::failure_token_ids(const std::vector<PhenomenonFact>& facts) const {
    if (facts.empty()) throw EmptyFactList("no failure facts to encode");
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < facts.size(); ++i) {
        if (i) ids.push_back(TextEncoder::kSeparator);
        const auto part = encoder_.tokenize(facts[i].text);
        ids.insert(ids.end(), part.begin(), part.end());
    }
    return ids;
}

Tensor InjectionBranch::encode_failure_facts(const std::vector<PhenomenonFact>& facts) const {
    return encoder_.embed_ids(failure_token_ids(facts));
}

ag::Var InjectionBranch::contribution(std::size_t block, const ag::Var& hidden, const ag::Var& failure) const {
    const auto& blk = blocks_.at(block);
    return blk.gate.apply(attention(hidden, failure, blk.clone, heads_, &blk.adapters));
}

Checkpoint InjectionBranch::checkpoint() const {
    Checkpoint ckpt;
    ckpt.kind = "injection";
    ckpt.meta = {{"rank", config_.rank}, {"alpha", config_.alpha}, {"blocks", blocks_.size()}};
    for (const auto& p : trainable_parameters()) ckpt.tensors.emplace(p.name, p.var.value());
    for (const auto& p : clone_parameters()) ckpt.tensors.emplace(p.name, p.var.value());
    return ckpt;
}

void InjectionBranch::load(const Checkpoint& ckpt) {
    if (ckpt.kind != "injection") throw IncompatibleModel("expected an injection checkpoint, got '" + ckpt.kind + "'");
    if (ckpt.meta.at("rank").get<std::size_t>() != config_.rank ||
        ckpt.meta.at("blocks").get<std::size_t>() != blocks_.size()) {
        throw IncompatibleModel("injection checkpoint does not match the branch layout");
    }
    auto params = trainable_parameters();
    const auto clones = clone_parameters();
    params.insert(params.end(), clones.begin(), clones.end());
    for (const auto& p : params) {
        const auto& t = ckpt.tensor(p.name);
        if (t.shape() != p.var.shape()) throw IncompatibleModel("tensor '" + p.name + "' has the wrong shape");
        ag::Var v = p.var;
        v.mutable_value() = t;
    }
}

namespace {

class BoundInjection : public CrossAttentionHook {
public:
    BoundInjection(const InjectionBranch& branch, const ag::Var& failure) : branch_(branch), failure_(failure) {}
    ag::Var contribution(std::size_t block, const ag::Var& hidden) const override {
        return branch_.contribution(block, hidden, failure_);
    }

private:
    const InjectionBranch& branch_;
    const ag::Var& failure_;
};

}  // namespace

ag::Var forward_with_injection(const ToyDit& model, const InjectionBranch& branch, const ag::Var& latent,
                               const ag::Var& text, const ag::Var& failure, int t) {
    if (!branch.enabled()) return model.forward(latent, text, t);
    if (branch.block_count() != model.block_count()) throw IncompatibleModel("branch was built for another model");
    const auto& f = failure.value();
    if (f.rank() != 2 || f.rows() == 0 || f.cols() != model.config().text_dim) {
        throw ShapeError("failure embedding must be [L, " + std::to_string(model.config().text_dim) + "], got " +
                         shape_string(failure.shape()));
    }
    BoundInjection hook(branch, failure);
    return model.forward(latent, text, t, &hook);
}

}  // namespace phytune
