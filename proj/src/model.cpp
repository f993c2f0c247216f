#include "saaf/model.hpp"

#include "saaf/error.hpp"
#include "saaf/ops.hpp"
#include "saaf/transformer.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace saaf {

void LmConfig::validate() const {
    if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || max_seq_len <= 0 || vocab_size <= 0) {
        throw std::invalid_argument("LmConfig: all sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("LmConfig: d_model must be divisible by n_heads");
    }
}

void VisionConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || d_vision <= 0 || n_blocks < 0 || n_heads <= 0) {
        throw std::invalid_argument("VisionConfig: sizes must be positive");
    }
    if (image_size % patch_size != 0) {
        throw Error(ErrorKind::NonDivisibleDims, "image size must be a multiple of the patch size");
    }
    if (d_vision % n_heads != 0) {
        throw std::invalid_argument("VisionConfig: d_vision must be divisible by n_heads");
    }
}

void ModelConfig::validate() const {
    lm.validate();
    vision.validate();
    if (seg_dim <= 0 || lora_rank < 1 || !(lora_alpha > 0.0) || !(position_std >= 0.0)) {
        throw std::invalid_argument("ModelConfig: seg_dim, lora_rank, lora_alpha must be positive");
    }
}

const LoraAdapter* ModelBundle::find_adapter(const std::string& target) const {
    for (const auto& a : adapters) {
        if (a.target == target) {
            return &a;
        }
    }
    return nullptr;
}

ModelBundle ModelBundle::clone() const {
    ModelBundle out;
    out.config = config;
    out.adapters = adapters;
    out.init_seed = init_seed;
    out.encoder_seed = encoder_seed;
    for (const auto& [name, p] : params) {
        out.params.add(name, p.value.detach().clone(), p.trainable);
    }
    return out;
}

namespace {

constexpr double kBaseStd = 0.02;

} // namespace

ModelBundle init_model(const ModelConfig& config, std::uint64_t init_seed, std::uint64_t encoder_seed) {
    config.validate();
    ModelBundle bundle;
    bundle.config = config;
    bundle.init_seed = init_seed;
    bundle.encoder_seed = encoder_seed;
    auto& params = bundle.params;

    const LmConfig& lm = config.lm;
    const VisionConfig& vc = config.vision;
    const int d = lm.d_model;
    const int dv = vc.d_vision;

    std::mt19937_64 rng(init_seed);
    params.add("lm.embed_tokens", detail::normal_tensor({lm.vocab_size, d}, kBaseStd, rng), true);
    params.add("lm.pos_embed", detail::normal_tensor({lm.max_seq_len, d}, config.position_std, rng), false);
    for (int i = 0; i < lm.n_layers; ++i) {
        add_block_params(params, "lm.layer" + std::to_string(i), d, kBaseStd, rng, false);
    }
    params.add("lm.ln_final.gain", Tensor::full({d}, 1.0), false);
    params.add("lm.ln_final.bias", Tensor::zeros({d}), false);
    params.add("lm.lm_head", detail::normal_tensor({lm.vocab_size, d}, kBaseStd, rng), true);

    for (int i = 0; i < lm.n_layers; ++i) {
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            LoraAdapter adapter{"lm.layer" + std::to_string(i) + ".attn." + w, config.lora_rank, config.lora_alpha};
            params.add(adapter.a_name(), detail::normal_tensor({config.lora_rank, d}, 1.0 / std::sqrt(d), rng), true);
            params.add(adapter.b_name(), Tensor::zeros({d, config.lora_rank}), true);
            bundle.adapters.push_back(adapter);
        }
    }

    params.add("vision.projector.weight", detail::normal_tensor({d, dv}, 1.0 / std::sqrt(dv), rng), true);
    params.add("vision.projector.bias", Tensor::zeros({d}), true);

    params.add("seg.gamma.fc1", detail::normal_tensor({d, d}, 1.0 / std::sqrt(d), rng), true);
    params.add("seg.gamma.fc1_bias", Tensor::zeros({d}), true);
    params.add("seg.gamma.fc2", detail::normal_tensor({config.seg_dim, d}, 1.0 / std::sqrt(d), rng), true);
    params.add("seg.gamma.fc2_bias", Tensor::zeros({config.seg_dim}), true);
    params.add("seg.decoder.w_f", detail::normal_tensor({config.seg_dim, dv}, 1.0 / std::sqrt(dv), rng), true);
    params.add("seg.decoder.b_f", Tensor::zeros({config.seg_dim}), true);

    // The frozen backbone draws from its own stream so it is reproducible
    // from the encoder seed alone.
    std::mt19937_64 enc_rng(encoder_seed);
    const int patch_len = vc.patch_size * vc.patch_size * 3;
    const int cells = vc.grid() * vc.grid();
    params.add("vision.encoder.patch_embed.weight",
               detail::normal_tensor({dv, patch_len}, 1.0 / std::sqrt(patch_len), enc_rng), false);
    params.add("vision.encoder.patch_embed.bias", Tensor::zeros({dv}), false);
    params.add("vision.encoder.pos_embed", detail::normal_tensor({cells, dv}, kBaseStd, enc_rng), false);
    for (int i = 0; i < vc.n_blocks; ++i) {
        add_block_params(params, "vision.encoder.block" + std::to_string(i), dv, kBaseStd, enc_rng, false);
    }
    return bundle;
}

bool is_declared_trainable(const std::string& name) {
    auto ends_with = [&](std::string_view suffix) {
        return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    auto starts_with = [&](std::string_view prefix) { return name.rfind(prefix, 0) == 0; };
    return name == "lm.embed_tokens" || name == "lm.lm_head" || ends_with(".lora_a") || ends_with(".lora_b") ||
           starts_with("vision.projector.") || starts_with("seg.");
}

Tensor linear(const ModelBundle& bundle, const Tensor& x, const std::string& weight_name,
              const std::string& bias_name) {
    Tensor y = matmul(x, transpose(bundle.param(weight_name)));
    if (const LoraAdapter* adapter = bundle.find_adapter(weight_name)) {
        Tensor down = matmul(x, transpose(bundle.param(adapter->a_name())));
        Tensor up = matmul(down, transpose(bundle.param(adapter->b_name())));
        y = add(y, scale(up, adapter->scale()));
    }
    if (!bias_name.empty()) {
        y = add(y, bundle.param(bias_name));
    }
    return y;
}

} // namespace saaf
