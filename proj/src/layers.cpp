#include "phytune/layers.hpp"

#include <cmath>

#include "phytune/errors.hpp"

namespace phytune {

void AdapterConfig::validate() const {
    if (rank < 1) throw PreconditionError("adapter rank must be at least 1");
    if (!(alpha > 0.0)) throw PreconditionError("adapter alpha must be positive");
}

LoraAdapter LoraAdapter::create(std::size_t in, std::size_t out, const AdapterConfig& cfg, Rng& rng) {
    cfg.validate();
    LoraAdapter a;
    a.down = ag::Var::parameter(rng.normal_tensor({in, cfg.rank}, 1.0 / std::sqrt(static_cast<double>(in))));
    a.up = ag::Var::parameter(Tensor({cfg.rank, out}, 0.0));
    a.scaling = cfg.scaling();
    return a;
}

ag::Var LoraAdapter::apply(const ag::Var& x) const {
    return ag::scale(ag::matmul(ag::matmul(x, down), up), scaling);
}

Tensor LoraAdapter::delta() const {
    const auto& d = down.value();
    const auto& u = up.value();
    const std::size_t in = d.dim(0), r = d.dim(1), out = u.dim(1);
    Tensor w({in, out}, 0.0);
    for (std::size_t i = 0; i < in; ++i) {
        for (std::size_t k = 0; k < r; ++k) {
            const double dik = d.at(i, k) * scaling;
            for (std::size_t j = 0; j < out; ++j) w.at(i, j) += dik * u.at(k, j);
        }
    }
    return w;
}

Linear Linear::create(std::size_t in, std::size_t out, Rng& rng, bool requires_grad) {
    return {ag::Var::parameter(rng.normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in))), requires_grad),
            ag::Var::parameter(Tensor({out}, 0.0), requires_grad)};
}

Linear Linear::zeros(std::size_t in, std::size_t out, bool requires_grad) {
    return {ag::Var::parameter(Tensor({in, out}, 0.0), requires_grad),
            ag::Var::parameter(Tensor({out}, 0.0), requires_grad)};
}

Linear Linear::clone(bool requires_grad) const {
    return {ag::Var::parameter(weight.value(), requires_grad), ag::Var::parameter(bias.value(), requires_grad)};
}

ag::Var Linear::apply(const ag::Var& x, const LoraAdapter* adapter) const {
    auto y = ag::add_row(ag::matmul(x, weight), bias);
    if (adapter) y = ag::add(y, adapter->apply(x));
    return y;
}

Tensor Linear::effective_weight(const LoraAdapter& adapter) const {
    Tensor w = weight.value();
    const Tensor d = adapter.delta();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += d[i];
    return w;
}

AttentionWeights AttentionWeights::clone(bool requires_grad) const {
    return {q.clone(requires_grad), k.clone(requires_grad), v.clone(requires_grad), o.clone(requires_grad)};
}

AttentionAdapters AttentionAdapters::create(const AttentionWeights& w, const AdapterConfig& cfg, Rng& rng) {
    return {LoraAdapter::create(w.q.in(), w.q.out(), cfg, rng), LoraAdapter::create(w.k.in(), w.k.out(), cfg, rng),
            LoraAdapter::create(w.v.in(), w.v.out(), cfg, rng), LoraAdapter::create(w.o.in(), w.o.out(), cfg, rng)};
}

void AttentionAdapters::append_parameters(const std::string& prefix, std::vector<NamedParam>& out) const {
    const std::pair<const char*, const LoraAdapter*> sites[] = {{"q", &q}, {"k", &k}, {"v", &v}, {"o", &o}};
    for (const auto& [name, a] : sites) {
        out.push_back({prefix + "." + name + ".down", a->down});
        out.push_back({prefix + "." + name + ".up", a->up});
    }
}

ag::Var attention(const ag::Var& x, const ag::Var& context, const AttentionWeights& w, std::size_t heads,
                  const AttentionAdapters* adapters) {
    const auto q = w.q.apply(x, adapters ? &adapters->q : nullptr);
    const auto k = w.k.apply(context, adapters ? &adapters->k : nullptr);
    const auto v = w.v.apply(context, adapters ? &adapters->v : nullptr);
    const std::size_t dim = q.value().cols();
    if (heads == 0 || dim % heads != 0) throw ShapeError("attention width is not divisible by the head count");
    const std::size_t dh = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<ag::Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        auto qh = ag::slice_cols(q, h * dh, dh);
        auto kh = ag::slice_cols(k, h * dh, dh);
        auto vh = ag::slice_cols(v, h * dh, dh);
        auto p = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt));
        outs.push_back(ag::matmul(p, vh));
    }
    auto merged = heads == 1 ? outs.front() : ag::concat_cols(outs);
    return w.o.apply(merged, adapters ? &adapters->o : nullptr);
}

void append_linear(const std::string& prefix, const Linear& l, std::vector<NamedParam>& out) {
    out.push_back({prefix + ".weight", l.weight});
    out.push_back({prefix + ".bias", l.bias});
}

void append_attention(const std::string& prefix, const AttentionWeights& w, std::vector<NamedParam>& out) {
    append_linear(prefix + ".q", w.q, out);
    append_linear(prefix + ".k", w.k, out);
    append_linear(prefix + ".v", w.v, out);
    append_linear(prefix + ".o", w.o, out);
}

}  // namespace phytune
