#pragma once

#include "saaf/image.hpp"
#include "saaf/model.hpp"

namespace saaf {

/// Spatial feature grid f: `features` is [h * w, d_v], cells in row-major order.
struct FeatureMap {
    Index grid_h = 0;
    Index grid_w = 0;
    Tensor features;

    Index channels() const { return features.dim(1); }
};

/// [(H/p) * (W/p), p * p * 3] patch matrix. Row k is grid cell (k / w, k % w);
/// within a row values run over (dy, dx, channel).
Tensor patchify(const Image& image, int patch);
Image unpatchify(const Tensor& patches, Index height, Index width, int patch);

/// Frozen backbone: patch embedding, position table, bidirectional blocks.
FeatureMap encode(const ModelBundle& bundle, const Image& image);

/// Trainable per-cell affine map d_v -> d_model producing the image tokens
/// that replace <IMG> in the LM input.
Tensor project_to_lm(const ModelBundle& bundle, const FeatureMap& f);

} // namespace saaf
