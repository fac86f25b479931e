#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phytune/checkpoint.hpp"
#include "phytune/layers.hpp"
#include "phytune/noise_schedule.hpp"
#include "phytune/text_encoder.hpp"
#include "phytune/video.hpp"

namespace phytune {

struct DitConfig {
    std::size_t frames = 4;    // m
    std::size_t channels = 4;  // c
    std::size_t height = 8;    // h
    std::size_t width = 8;     // w
    std::size_t patch = 2;
    std::size_t blocks = 2;
    std::size_t model_dim = 32;
    std::size_t heads = 2;
    std::size_t text_dim = 16;
    std::size_t mlp_ratio = 2;
    int timesteps = 50;
    std::string schedule = "linear";
    std::size_t video_height = 16;
    std::size_t video_width = 16;
    std::size_t text_vocab = 512;
    std::uint64_t seed = 0;

    // ConfigError on inconsistent settings.
    void validate() const;
    Shape latent_shape() const { return {frames, channels, height, width}; }
    Shape video_shape() const { return {frames, 3, video_height, video_width}; }
    std::size_t token_count() const { return frames * (height / patch) * (width / patch); }
    std::size_t patch_dim() const { return channels * patch * patch; }
};

void to_json(nlohmann::json& j, const DitConfig& c);
// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, DitConfig& c);

// Extra contribution added after each block's cross-attention residual.
// `hidden` is the normalized block input that the cross-attention saw.
class CrossAttentionHook {
public:
    virtual ~CrossAttentionHook() = default;
    virtual ag::Var contribution(std::size_t block, const ag::Var& hidden) const = 0;
};

struct DitBlock {
    AttentionWeights self_attn;
    AttentionWeights cross_attn;
    Linear fc1;
    Linear fc2;
};

// Low-rank adapters on every linear map of a block.
struct BlockLora {
    AttentionAdapters self_attn;
    AttentionAdapters cross_attn;
    LoraAdapter fc1;
    LoraAdapter fc2;
};

class ToyDit {
public:
    explicit ToyDit(DitConfig config);

    const DitConfig& config() const noexcept { return config_; }
    const NoiseSchedule& schedule() const noexcept { return schedule_; }
    const TextEncoder& text_encoder() const noexcept { return text_encoder_; }
    std::size_t block_count() const noexcept { return blocks_.size(); }
    const DitBlock& block(std::size_t i) const { return blocks_.at(i); }

    // Predicted noise for latent [m, c, h, w] and text embedding [L, text_dim].
    ag::Var forward(const ag::Var& latent, const ag::Var& text, int t, const CrossAttentionHook* hook = nullptr) const;
    Tensor predict_noise(const LatentClip& latent, const Tensor& text) const;

    std::vector<NamedParam> base_parameters() const;
    void freeze_base();

    void attach_lora(const AdapterConfig& cfg);
    bool has_lora() const noexcept { return lora_.has_value(); }
    const AdapterConfig& lora_config() const;
    std::vector<NamedParam> lora_parameters() const;

    Checkpoint base_checkpoint() const;
    static ToyDit from_checkpoint(const Checkpoint& ckpt);
    Checkpoint lora_checkpoint() const;
    // Attaches adapters if needed and loads their values.
    void load_lora(const Checkpoint& ckpt);

private:
    DitConfig config_;
    NoiseSchedule schedule_;
    TextEncoder text_encoder_;
    Linear embed_;
    Linear time_;
    std::vector<DitBlock> blocks_;
    Linear final_;
    Tensor positions_;
    std::shared_ptr<const std::vector<std::size_t>> patch_index_;
    std::shared_ptr<const std::vector<std::size_t>> unpatch_index_;
    std::optional<AdapterConfig> lora_config_;
    std::optional<std::vector<BlockLora>> lora_;
};

// Sinusoidal features of a scalar position, width `dim`.
Tensor sinusoid(double position, std::size_t dim);

// Mean squared error; ShapeError when shapes differ.
ag::Var denoise_loss(const ag::Var& pred, const ag::Var& target);
double denoise_loss(const Tensor& pred, const Tensor& target);

// Fixed latent-to-pixel map: nearest upsampling, a 3 x c channel mix whose
// rows have absolute sum 2, and a logistic squash. Zero latents decode to 0.5
// and pixel changes never exceed the largest latent change.
class VideoDecoder {
public:
    explicit VideoDecoder(const DitConfig& config);

    ag::Var decode(const ag::Var& latent) const;
    PixelVideo decode_video(const ag::Var& latent) const { return {decode(latent)}; }
    Tensor decode(const Tensor& latent) const;
    const Tensor& mixing() const noexcept { return mixing_; }

private:
    DitConfig config_;
    Tensor mixing_;  // [c, 3]
    std::shared_ptr<const std::vector<std::size_t>> channel_last_;
    std::shared_ptr<const std::vector<std::size_t>> upsample_;
};

}  // namespace phytune
