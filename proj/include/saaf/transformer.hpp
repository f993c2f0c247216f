#pragma once

#include "saaf/model.hpp"

#include <string>

namespace saaf {

/// Pre-norm transformer block: x + Attn(LN(x)), then + MLP(LN(.)).
/// Parameters live under `prefix` (`.ln1`, `.attn.wq` ... `.mlp.fc2`).
Tensor transformer_block(const ModelBundle& bundle, const std::string& prefix, const Tensor& x, int n_heads,
                         bool causal);

/// Adds one block's parameters under `prefix`, all with the given trainable flag.
template <typename Rng>
void add_block_params(ParamRegistry& params, const std::string& prefix, int width, double std, Rng& rng,
                      bool trainable);

} // namespace saaf

#include "saaf/detail/init.hpp"

namespace saaf {

template <typename Rng>
void add_block_params(ParamRegistry& params, const std::string& prefix, int width, double std, Rng& rng,
                      bool trainable) {
    const int hidden = 4 * width;
    params.add(prefix + ".ln1.gain", Tensor::full({width}, 1.0), trainable);
    params.add(prefix + ".ln1.bias", Tensor::zeros({width}), trainable);
    for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"}) {
        params.add(prefix + w, detail::normal_tensor({width, width}, std, rng), trainable);
    }
    params.add(prefix + ".ln2.gain", Tensor::full({width}, 1.0), trainable);
    params.add(prefix + ".ln2.bias", Tensor::zeros({width}), trainable);
    params.add(prefix + ".mlp.fc1", detail::normal_tensor({hidden, width}, std, rng), trainable);
    params.add(prefix + ".mlp.fc1_bias", Tensor::zeros({hidden}), trainable);
    params.add(prefix + ".mlp.fc2", detail::normal_tensor({width, hidden}, std, rng), trainable);
    params.add(prefix + ".mlp.fc2_bias", Tensor::zeros({width}), trainable);
}

} // namespace saaf
