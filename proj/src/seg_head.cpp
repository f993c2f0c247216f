#include "saaf/seg_head.hpp"

#include "saaf/error.hpp"
#include "saaf/ops.hpp"

#include <cmath>

namespace saaf {

Tensor extract_seg_embedding(const Tensor& hidden, const TokenSequence& spliced) {
    if (hidden.rank() != 2 || hidden.dim(0) != static_cast<Index>(spliced.size())) {
        throw Error(ErrorKind::ShapeMismatch, "hidden rows and token sequence lengths differ");
    }
    for (size_t i = 0; i < spliced.size(); ++i) {
        if (spliced.ids[i] == vocab::kSeg) {
            const auto row = static_cast<Index>(i);
            return slice(hidden, 0, row, row + 1);
        }
    }
    throw Error(ErrorKind::NoSegToken, "sequence contains no <SEG> token");
}

Tensor project_seg(const ModelBundle& bundle, const Tensor& raw) {
    if (raw.rank() != 2 || raw.dim(0) != 1 || raw.dim(1) != bundle.config.lm.d_model) {
        throw Error(ErrorKind::ShapeMismatch, "SEG embedding must be [1, d_model]");
    }
    Tensor h = gelu(linear(bundle, raw, "seg.gamma.fc1", "seg.gamma.fc1_bias"));
    return linear(bundle, h, "seg.gamma.fc2", "seg.gamma.fc2_bias");
}

Tensor decode_mask(const ModelBundle& bundle, const Tensor& q, const FeatureMap& f) {
    const Index ds = bundle.config.seg_dim;
    if (q.rank() != 2 || q.dim(0) != 1 || q.dim(1) != ds) {
        throw Error(ErrorKind::ShapeMismatch, "projected SEG embedding must be [1, d_s]");
    }
    if (f.features.rank() != 2 || f.features.dim(0) != f.grid_h * f.grid_w ||
        f.features.dim(1) != bundle.param("seg.decoder.w_f").dim(1)) {
        throw Error(ErrorKind::ShapeMismatch, "feature map does not match the decoder");
    }
    Tensor keys = linear(bundle, f.features, "seg.decoder.w_f", "seg.decoder.b_f");
    Tensor scores = scale(matmul(keys, transpose(q)), 1.0 / std::sqrt(static_cast<double>(ds)));
    const Index patch = bundle.config.vision.patch_size;
    return upsample_bilinear(reshape(scores, {f.grid_h, f.grid_w}), f.grid_h * patch, f.grid_w * patch);
}

BinaryMask binarize(const Tensor& logits, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw Error(ErrorKind::BadThreshold, "threshold must lie in (0, 1)");
    }
    if (logits.rank() != 2) {
        throw Error(ErrorKind::ShapeMismatch, "mask logits must be rank 2");
    }
    std::vector<std::uint8_t> bits(static_cast<size_t>(logits.numel()));
    for (Index i = 0; i < logits.numel(); ++i) {
        const double z = logits[i];
        const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        bits[static_cast<size_t>(i)] = p >= threshold ? 1 : 0;
    }
    return BinaryMask(logits.dim(0), logits.dim(1), std::move(bits));
}

} // namespace saaf
