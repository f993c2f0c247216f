#pragma once

#include "saaf/image.hpp"
#include "saaf/model.hpp"
#include "saaf/text_model.hpp"
#include "saaf/vision_encoder.hpp"

namespace saaf {

/// Final-layer hidden row at the first <SEG> of a sequence row-aligned with
/// `hidden` (see splice_tokens). Returns [1, d_model].
Tensor extract_seg_embedding(const Tensor& hidden, const TokenSequence& spliced);

/// Two-layer MLP d_model -> d_model -> d_s with GELU between. Returns [1, d_s].
Tensor project_seg(const ModelBundle& bundle, const Tensor& raw);

/// Per-cell score <q, W_f f[i,j] + b_f> / sqrt(d_s) over the feature grid,
/// bilinearly resized to the image size. Returns pre-sigmoid [H, W] logits.
Tensor decode_mask(const ModelBundle& bundle, const Tensor& q, const FeatureMap& f);

/// pixel = 1 iff sigmoid(logit) >= threshold.
BinaryMask binarize(const Tensor& logits, double threshold = 0.5);

} // namespace saaf
