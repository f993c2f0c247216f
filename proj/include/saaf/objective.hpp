#pragma once

#include "saaf/image.hpp"
#include "saaf/text_model.hpp"

namespace saaf {

struct LossWeights {
    double text = 0.8;  // theta_t
    double mask = 0.8;  // theta_m
    double bce = 2.0;   // theta_bce
    double dice = 0.5;  // theta_dice

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

inline constexpr double kDiceSmoothing = 1.0;

/// Mean next-token cross-entropy over supervised positions: position i
/// contributes -log softmax(logits[i - 1])[ids[i]].
Tensor text_loss(const Tensor& logits, const TokenSequence& tokens);

/// Mean per-pixel binary cross-entropy on logits, as softplus(z) - t z.
Tensor bce_loss(const Tensor& logits, const BinaryMask& target);

/// 1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps), p = sigmoid(logits).
Tensor dice_loss(const Tensor& logits, const BinaryMask& target, double eps = kDiceSmoothing);

Tensor mask_loss(const Tensor& logits, const BinaryMask& target, const LossWeights& w);

Tensor total_loss(const Tensor& text, const Tensor& mask, const LossWeights& w);

/// Class 1 is window (the referred region), class 0 wall/background.
struct IouResult {
    double iou_foreground = 0.0;
    double iou_background = 0.0;
    bool foreground_present = false;
    bool background_present = false;
    double miou = 0.0;
};

/// Per-class IoU; classes empty in both masks are left out of the mean.
IouResult miou(const BinaryMask& pred, const BinaryMask& gt);

double pixel_accuracy(const BinaryMask& pred, const BinaryMask& gt);

} // namespace saaf
