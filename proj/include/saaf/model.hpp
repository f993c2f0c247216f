#pragma once

#include "saaf/optim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace saaf {

struct LmConfig {
    int n_layers = 2;
    int d_model = 64;
    int n_heads = 4;
    int max_seq_len = 256;
    int vocab_size = 101;

    void validate() const;
    bool operator==(const LmConfig&) const = default;
};

struct VisionConfig {
    int image_size = 64;
    int patch_size = 8;
    int d_vision = 64;
    int n_blocks = 2;
    int n_heads = 4;

    int grid() const { return image_size / patch_size; }
    void validate() const;
    bool operator==(const VisionConfig&) const = default;
};

struct ModelConfig {
    LmConfig lm;
    VisionConfig vision;
    int seg_dim = 32;
    int lora_rank = 4;
    double lora_alpha = 8.0;
    /// Init scale of the frozen absolute position table.
    double position_std = 0.1;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct LoraAdapter {
    std::string target;
    int rank = 4;
    double alpha = 8.0;

    double scale() const { return alpha / rank; }
    std::string a_name() const { return target + ".lora_a"; }
    std::string b_name() const { return target + ".lora_b"; }
    bool operator==(const LoraAdapter&) const = default;
};

/// Every parameter of the model plus the LoRA attachment table.
///
/// Name prefixes: `lm.` language model, `vision.encoder.` frozen backbone,
/// `vision.projector.` vision-to-LM projection, `seg.gamma.` SEG projection,
/// `seg.decoder.` mask decoder.
struct ModelBundle {
    ModelConfig config;
    ParamRegistry params;
    std::vector<LoraAdapter> adapters;
    std::uint64_t init_seed = 0;
    std::uint64_t encoder_seed = 0;

    const Tensor& param(const std::string& name) const { return params.tensor(name); }
    const LoraAdapter* find_adapter(const std::string& target) const;

    /// Deep copy; parameter storage is not shared with the original.
    ModelBundle clone() const;
};

/// Builds a fully initialized model: frozen LM base with LoRA adapters on
/// every attention projection, frozen encoder seeded by `encoder_seed`, and
/// the trainable heads. Deterministic in (config, init_seed, encoder_seed).
ModelBundle init_model(const ModelConfig& config, std::uint64_t init_seed, std::uint64_t encoder_seed);

/// Names of the parameters fine-tuning is allowed to change.
bool is_declared_trainable(const std::string& name);

/// x W^T + b for W stored [out, in]; uses the adapter on `weight_name` when
/// one is attached: x W^T + (alpha / r) (x A^T) B^T.
Tensor linear(const ModelBundle& bundle, const Tensor& x, const std::string& weight_name,
              const std::string& bias_name = {});

} // namespace saaf
