#include "phytune/toy_dit.hpp"

#include <cmath>
#include <set>

#include "phytune/errors.hpp"

namespace phytune {

void DitConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
    if (frames == 0 || channels == 0 || height == 0 || width == 0) fail("latent dimensions must be positive");
    if (patch == 0 || height % patch != 0 || width % patch != 0) fail("patch size must divide the latent height and width");
    if (blocks < 2) fail("at least two blocks are required");
    if (heads == 0 || model_dim % heads != 0) fail("model_dim must be divisible by heads");
    if (text_dim == 0 || mlp_ratio == 0) fail("text_dim and mlp_ratio must be positive");
    if (timesteps < 2) fail("timesteps must be at least 2");
    if (video_height % height != 0 || video_width % width != 0 || video_height < height || video_width < width) {
        fail("video size must be a whole multiple of the latent size");
    }
    if (text_vocab < 3) fail("text_vocab must be at least 3");
}

void to_json(nlohmann::json& j, const DitConfig& c) {
    j = {{"frames", c.frames},         {"channels", c.channels},       {"height", c.height},
         {"width", c.width},           {"patch", c.patch},             {"blocks", c.blocks},
         {"model_dim", c.model_dim},   {"heads", c.heads},             {"text_dim", c.text_dim},
         {"mlp_ratio", c.mlp_ratio},   {"timesteps", c.timesteps},     {"schedule", c.schedule},
         {"video_height", c.video_height}, {"video_width", c.video_width}, {"text_vocab", c.text_vocab},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DitConfig& c) {
    static const std::set<std::string> known = {"frames",    "channels",  "height",     "width",
                                                "patch",     "blocks",    "model_dim",  "heads",
                                                "text_dim",  "mlp_ratio", "timesteps",  "schedule",
                                                "video_height", "video_width", "text_vocab", "seed"};
    if (!j.is_object()) throw ConfigError("model config must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown model config key '" + key + "'");
    }
    try {
        c.frames = j.value("frames", c.frames);
        c.channels = j.value("channels", c.channels);
        c.height = j.value("height", c.height);
        c.width = j.value("width", c.width);
        c.patch = j.value("patch", c.patch);
        c.blocks = j.value("blocks", c.blocks);
        c.model_dim = j.value("model_dim", c.model_dim);
        c.heads = j.value("heads", c.heads);
        c.text_dim = j.value("text_dim", c.text_dim);
        c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
        c.timesteps = j.value("timesteps", c.timesteps);
        c.schedule = j.value("schedule", c.schedule);
        c.video_height = j.value("video_height", c.video_height);
        c.video_width = j.value("video_width", c.video_width);
        c.text_vocab = j.value("text_vocab", c.text_vocab);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

Tensor sinusoid(double position, std::size_t dim) {
    Tensor out({dim});
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        out[i] = std::sin(position * freq);
        out[half + i] = std::cos(position * freq);
    }
    return out;
}

ToyDit::ToyDit(DitConfig config)
    : config_((config.validate(), std::move(config))),
      schedule_(config_.timesteps, config_.schedule),
      text_encoder_(config_.text_vocab, config_.text_dim, config_.seed) {
    Rng rng(config_.seed);
    const std::size_t D = config_.model_dim;
    embed_ = Linear::create(config_.patch_dim(), D, rng);
    time_ = Linear::create(D, D, rng);
    for (std::size_t b = 0; b < config_.blocks; ++b) {
        DitBlock blk;
        blk.self_attn = {Linear::create(D, D, rng), Linear::create(D, D, rng), Linear::create(D, D, rng),
                         Linear::create(D, D, rng)};
        blk.cross_attn = {Linear::create(D, D, rng), Linear::create(config_.text_dim, D, rng),
                          Linear::create(config_.text_dim, D, rng), Linear::create(D, D, rng)};
        blk.fc1 = Linear::create(D, D * config_.mlp_ratio, rng);
        blk.fc2 = Linear::create(D * config_.mlp_ratio, D, rng);
        blocks_.push_back(std::move(blk));
    }
    final_ = Linear::create(D, config_.patch_dim(), rng);

    const std::size_t n = config_.token_count();
    positions_ = Tensor({n, D});
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = sinusoid(static_cast<double>(i), D);
        for (std::size_t c = 0; c < D; ++c) positions_.at(i, c) = row[c];
    }

    // Token (f, py, px) holds the p x p patch of every channel, channel-major.
    const std::size_t p = config_.patch, hp = config_.height / p, wp = config_.width / p;
    const std::size_t C = config_.channels, H = config_.height, W = config_.width;
    auto patch = std::make_shared<std::vector<std::size_t>>(n * config_.patch_dim());
    auto unpatch = std::make_shared<std::vector<std::size_t>>(n * config_.patch_dim());
    std::size_t k = 0;
    for (std::size_t f = 0; f < config_.frames; ++f) {
        for (std::size_t py = 0; py < hp; ++py) {
            for (std::size_t px = 0; px < wp; ++px) {
                for (std::size_t ch = 0; ch < C; ++ch) {
                    for (std::size_t dy = 0; dy < p; ++dy) {
                        for (std::size_t dx = 0; dx < p; ++dx, ++k) {
                            const std::size_t src = ((f * C + ch) * H + py * p + dy) * W + px * p + dx;
                            (*patch)[k] = src;
                            (*unpatch)[src] = k;
                        }
                    }
                }
            }
        }
    }
    patch_index_ = std::move(patch);
    unpatch_index_ = std::move(unpatch);
}

ag::Var ToyDit::forward(const ag::Var& latent, const ag::Var& text, int t, const CrossAttentionHook* hook) const {
    if (latent.shape() != config_.latent_shape()) {
        throw ShapeError("latent shape " + shape_string(latent.shape()) + " does not match model " +
                         shape_string(config_.latent_shape()));
    }
    if (text.value().rank() != 2 || text.value().cols() != config_.text_dim || text.value().rows() == 0) {
        throw ShapeError("text embedding must be [L, " + std::to_string(config_.text_dim) + "], got " +
                         shape_string(text.shape()));
    }
    schedule_.check(t);
    const std::size_t n = config_.token_count();
    const std::size_t D = config_.model_dim;

    auto tokens = ag::gather(latent, patch_index_, {n, config_.patch_dim()});
    auto h = ag::add(embed_.apply(tokens), ag::Var::constant(positions_));
    auto temb = ag::silu(time_.apply(ag::Var::constant(sinusoid(static_cast<double>(t), D).reshaped({1, D}))));
    h = ag::add_row(h, ag::reshape(temb, {D}));

    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const auto& blk = blocks_[b];
        const BlockLora* lora = lora_ ? &(*lora_)[b] : nullptr;
        auto a = ag::layer_norm_rows(h);
        h = ag::add(h, attention(a, a, blk.self_attn, config_.heads, lora ? &lora->self_attn : nullptr));
        a = ag::layer_norm_rows(h);
        h = ag::add(h, attention(a, text, blk.cross_attn, config_.heads, lora ? &lora->cross_attn : nullptr));
        if (hook) h = ag::add(h, hook->contribution(b, a));
        a = ag::layer_norm_rows(h);
        auto mid = ag::silu(blk.fc1.apply(a, lora ? &lora->fc1 : nullptr));
        h = ag::add(h, blk.fc2.apply(mid, lora ? &lora->fc2 : nullptr));
    }
    auto out = final_.apply(ag::layer_norm_rows(h));
    return ag::gather(out, unpatch_index_, config_.latent_shape());
}

Tensor ToyDit::predict_noise(const LatentClip& latent, const Tensor& text) const {
    return forward(ag::Var::constant(latent.data), ag::Var::constant(text), latent.timestep).value();
}

std::vector<NamedParam> ToyDit::base_parameters() const {
    std::vector<NamedParam> out;
    append_linear("embed", embed_, out);
    append_linear("time", time_, out);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const std::string prefix = "blocks." + std::to_string(b);
        append_attention(prefix + ".self", blocks_[b].self_attn, out);
        append_attention(prefix + ".cross", blocks_[b].cross_attn, out);
        append_linear(prefix + ".fc1", blocks_[b].fc1, out);
        append_linear(prefix + ".fc2", blocks_[b].fc2, out);
    }
    append_linear("final", final_, out);
    return out;
}

void ToyDit::freeze_base() {
    for (auto& p : base_parameters()) p.var.set_requires_grad(false);
}

void ToyDit::attach_lora(const AdapterConfig& cfg) {
    cfg.validate();
    Rng rng(config_.seed ^ 0x6c6f7261ULL);
    std::vector<BlockLora> adapters;
    for (const auto& blk : blocks_) {
        BlockLora l;
        l.self_attn = AttentionAdapters::create(blk.self_attn, cfg, rng);
        l.cross_attn = AttentionAdapters::create(blk.cross_attn, cfg, rng);
        l.fc1 = LoraAdapter::create(blk.fc1.in(), blk.fc1.out(), cfg, rng);
        l.fc2 = LoraAdapter::create(blk.fc2.in(), blk.fc2.out(), cfg, rng);
        adapters.push_back(std::move(l));
    }
    lora_ = std::move(adapters);
    lora_config_ = cfg;
}

const AdapterConfig& ToyDit::lora_config() const {
    if (!lora_config_) throw PreconditionError("model has no adapters attached");
    return *lora_config_;
}

std::vector<NamedParam> ToyDit::lora_parameters() const {
    std::vector<NamedParam> out;
    if (!lora_) return out;
    for (std::size_t b = 0; b < lora_->size(); ++b) {
        const auto& l = (*lora_)[b];
        const std::string prefix = "lora." + std::to_string(b);
        l.self_attn.append_parameters(prefix + ".self", out);
        l.cross_attn.append_parameters(prefix + ".cross", out);
        out.push_back({prefix + ".fc1.down", l.fc1.down});
        out.push_back({prefix + ".fc1.up", l.fc1.up});
        out.push_back({prefix + ".fc2.down", l.fc2.down});
        out.push_back({prefix + ".fc2.up", l.fc2.up});
    }
    return out;
}

Checkpoint ToyDit::base_checkpoint() const {
    Checkpoint ckpt;
    ckpt.kind = "base";
    ckpt.meta = {{"config", config_}};
    for (const auto& p : base_parameters()) ckpt.tensors.emplace(p.name, p.var.value());
    return ckpt;
}

namespace {

void load_params(const std::vector<NamedParam>& params, const Checkpoint& ckpt) {
    for (const auto& p : params) {
        const auto& t = ckpt.tensor(p.name);
        if (t.shape() != p.var.shape()) {
            throw IncompatibleModel("tensor '" + p.name + "' has shape " + shape_string(t.shape()) + ", expected " +
                                    shape_string(p.var.shape()));
        }
        ag::Var v = p.var;
        v.mutable_value() = t;
    }
}

}  // namespace

ToyDit ToyDit::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "base") throw IncompatibleModel("expected a base checkpoint, got '" + ckpt.kind + "'");
    DitConfig cfg;
    try {
        cfg = ckpt.meta.at("config").get<DitConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw IncompatibleModel(std::string("checkpoint config unreadable: ") + e.what());
    }
    ToyDit model(cfg);
    load_params(model.base_parameters(), ckpt);
    return model;
}

Checkpoint ToyDit::lora_checkpoint() const {
    const auto& cfg = lora_config();
    Checkpoint ckpt;
    ckpt.kind = "lora";
    ckpt.meta = {{"rank", cfg.rank}, {"alpha", cfg.alpha}, {"config", config_}};
    for (const auto& p : lora_parameters()) ckpt.tensors.emplace(p.name, p.var.value());
    return ckpt;
}

void ToyDit::load_lora(const Checkpoint& ckpt) {
    if (ckpt.kind != "lora") throw IncompatibleModel("expected a lora checkpoint, got '" + ckpt.kind + "'");
    AdapterConfig cfg;
    cfg.rank = ckpt.meta.at("rank").get<std::size_t>();
    cfg.alpha = ckpt.meta.at("alpha").get<double>();
    if (!lora_ || lora_config_->rank != cfg.rank || lora_config_->alpha != cfg.alpha) attach_lora(cfg);
    load_params(lora_parameters(), ckpt);
}

ag::Var denoise_loss(const ag::Var& pred, const ag::Var& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("denoise_loss: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
    }
    return ag::mean(ag::square(ag::sub(pred, target)));
}

double denoise_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw ShapeError("denoise_loss: shapes differ");
    if (pred.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

VideoDecoder::VideoDecoder(const DitConfig& config) : config_(config) {
    config_.validate();
    const std::size_t C = config_.channels;
    // Fixed mixing pattern, independent of the model seed.
    Rng rng(0x646563ULL);
    mixing_ = Tensor({C, 3});
    for (std::size_t rgb = 0; rgb < 3; ++rgb) {
        double abs_sum = 0.0;
        std::vector<double> row(C);
        for (auto& v : row) {
            v = rng.normal();
            abs_sum += std::abs(v);
        }
        for (std::size_t ch = 0; ch < C; ++ch) mixing_.at(ch, rgb) = 2.0 * row[ch] / abs_sum;
    }

    const std::size_t m = config_.frames, H = config_.height, W = config_.width;
    auto cl = std::make_shared<std::vector<std::size_t>>();
    for (std::size_t f = 0; f < m; ++f) {
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                for (std::size_t ch = 0; ch < C; ++ch) cl->push_back(((f * C + ch) * H + y) * W + x);
            }
        }
    }
    channel_last_ = std::move(cl);

    // Mixed pixels are [m*H*W, 3]; output pixel (f, rgb, Y, X) reads the
    // latent position (Y / sy, X / sx).
    const std::size_t VH = config_.video_height, VW = config_.video_width;
    const std::size_t sy = VH / H, sx = VW / W;
    auto up = std::make_shared<std::vector<std::size_t>>();
    for (std::size_t f = 0; f < m; ++f) {
        for (std::size_t rgb = 0; rgb < 3; ++rgb) {
            for (std::size_t Y = 0; Y < VH; ++Y) {
                for (std::size_t X = 0; X < VW; ++X) up->push_back(((f * H + Y / sy) * W + X / sx) * 3 + rgb);
            }
        }
    }
    upsample_ = std::move(up);
}

ag::Var VideoDecoder::decode(const ag::Var& latent) const {
    if (latent.shape() != config_.latent_shape()) {
        throw ShapeError("decoder expects " + shape_string(config_.latent_shape()) + ", got " +
                         shape_string(latent.shape()));
    }
    const std::size_t positions = config_.frames * config_.height * config_.width;
    auto rows = ag::gather(latent, channel_last_, {positions, config_.channels});
    auto pixels = ag::sigmoid(ag::matmul(rows, ag::Var::constant(mixing_)));
    return ag::gather(pixels, upsample_, config_.video_shape());
}

Tensor VideoDecoder::decode(const Tensor& latent) const {
    return decode(ag::Var::constant(latent)).value();
}

}  // namespace phytune
