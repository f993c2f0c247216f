#include "saaf/transformer.hpp"

#include "saaf/ops.hpp"

#include <cmath>
#include <vector>

namespace saaf {

namespace {

Tensor self_attention(const ModelBundle& bundle, const std::string& prefix, const Tensor& x, int n_heads,
                      bool causal) {
    const Index width = x.dim(1);
    const Index head_dim = width / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Tensor q = linear(bundle, x, prefix + ".wq");
    Tensor k = linear(bundle, x, prefix + ".wk");
    Tensor v = linear(bundle, x, prefix + ".wv");
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        const Index lo = h * head_dim;
        const Index hi = lo + head_dim;
        Tensor scores = scale(matmul(slice(q, 1, lo, hi), transpose(slice(k, 1, lo, hi))), inv_sqrt);
        heads.push_back(matmul(softmax_rows(scores, causal), slice(v, 1, lo, hi)));
    }
    return linear(bundle, concat(heads, 1), prefix + ".wo");
}

} // namespace

Tensor transformer_block(const ModelBundle& bundle, const std::string& prefix, const Tensor& x, int n_heads,
                         bool causal) {
    Tensor h = layer_norm(x, bundle.param(prefix + ".ln1.gain"), bundle.param(prefix + ".ln1.bias"));
    Tensor out = add(x, self_attention(bundle, prefix + ".attn", h, n_heads, causal));
    h = layer_norm(out, bundle.param(prefix + ".ln2.gain"), bundle.param(prefix + ".ln2.bias"));
    h = gelu(linear(bundle, h, prefix + ".mlp.fc1", prefix + ".mlp.fc1_bias"));
    h = linear(bundle, h, prefix + ".mlp.fc2", prefix + ".mlp.fc2_bias");
    return add(out, h);
}

} // namespace saaf
