#include "saaf/objective.hpp"

#include "saaf/error.hpp"
#include "saaf/ops.hpp"

#include <cmath>

namespace saaf {

void LossWeights::validate() const {
    for (double w : {text, mask, bce, dice}) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw Error(ErrorKind::BadConfig, "loss weights must be finite and non-negative");
        }
    }
}

namespace {

void require_same_dims(const Tensor& logits, const BinaryMask& target) {
    if (logits.rank() != 2 || logits.dim(0) != target.height() || logits.dim(1) != target.width()) {
        throw Error(ErrorKind::ShapeMismatch, "mask logits and target dims differ");
    }
}

} // namespace

Tensor text_loss(const Tensor& logits, const TokenSequence& tokens) {
    if (logits.rank() != 2 || logits.dim(0) != static_cast<Index>(tokens.size())) {
        throw Error(ErrorKind::ShapeMismatch, "logit rows and token count differ");
    }
    const Index vocab_size = logits.dim(1);
    std::vector<std::pair<Index, int>> picks;
    for (size_t i = 1; i < tokens.size(); ++i) {
        if (tokens.supervise[i]) {
            picks.emplace_back(static_cast<Index>(i) - 1, tokens.ids[i]);
        }
    }
    if (picks.empty()) {
        throw Error(ErrorKind::NoSupervisedPositions, "no supervised positions after the first token");
    }
    // Selector with 1/n at (i - 1, y_i): the loss is -sum(selector * log p).
    Vector selector = Vector::Zero(logits.numel());
    const double weight = 1.0 / static_cast<double>(picks.size());
    for (auto [row, id] : picks) {
        if (id < 0 || id >= vocab_size) {
            throw Error(ErrorKind::IdOutOfRange, "target id " + std::to_string(id));
        }
        selector[row * vocab_size + id] += weight;
    }
    Tensor sel = Tensor::from(logits.shape(), std::move(selector));
    return scale(sum(mul(log_softmax_rows(logits), sel)), -1.0);
}

Tensor bce_loss(const Tensor& logits, const BinaryMask& target) {
    require_same_dims(logits, target);
    Tensor t = target.to_tensor();
    return mean(sub(softplus(logits), mul(logits, t)));
}

Tensor dice_loss(const Tensor& logits, const BinaryMask& target, double eps) {
    require_same_dims(logits, target);
    if (!(eps > 0.0)) {
        throw std::invalid_argument("dice smoothing must be positive");
    }
    Tensor t = target.to_tensor();
    Tensor p = sigmoid(logits);
    Tensor numerator = add_scalar(scale(sum(mul(p, t)), 2.0), eps);
    Tensor denominator = add_scalar(sum(p), static_cast<double>(target.count()) + eps);
    return add_scalar(scale(div(numerator, denominator), -1.0), 1.0);
}

Tensor mask_loss(const Tensor& logits, const BinaryMask& target, const LossWeights& w) {
    return add(scale(bce_loss(logits, target), w.bce), scale(dice_loss(logits, target), w.dice));
}

Tensor total_loss(const Tensor& text, const Tensor& mask, const LossWeights& w) {
    if (text.numel() != 1 || mask.numel() != 1) {
        throw Error(ErrorKind::NotScalar, "loss terms must be scalars");
    }
    if (!std::isfinite(text.item()) || !std::isfinite(mask.item())) {
        throw Error(ErrorKind::NonFinite, "loss term is not finite");
    }
    return add(scale(text, w.text), scale(mask, w.mask));
}

IouResult miou(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width()) {
        throw Error(ErrorKind::ShapeMismatch, "prediction and ground-truth dims differ");
    }
    // Confusion counts: tp = pred 1 & gt 1, tn = pred 0 & gt 0.
    Index tp = 0;
    Index tn = 0;
    Index fp = 0;
    Index fn = 0;
    const auto& p = pred.bits();
    const auto& g = gt.bits();
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] && g[i]) {
            ++tp;
        } else if (p[i]) {
            ++fp;
        } else if (g[i]) {
            ++fn;
        } else {
            ++tn;
        }
    }
    IouResult r;
    r.foreground_present = tp + fp + fn > 0;
    r.background_present = tn + fp + fn > 0;
    double total = 0.0;
    int classes = 0;
    if (r.foreground_present) {
        r.iou_foreground = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
        total += r.iou_foreground;
        ++classes;
    }
    if (r.background_present) {
        r.iou_background = static_cast<double>(tn) / static_cast<double>(tn + fp + fn);
        total += r.iou_background;
        ++classes;
    }
    r.miou = total / classes;
    return r;
}

double pixel_accuracy(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width()) {
        throw Error(ErrorKind::ShapeMismatch, "prediction and ground-truth dims differ");
    }
    Index agree = 0;
    for (size_t i = 0; i < pred.bits().size(); ++i) {
        agree += pred.bits()[i] == gt.bits()[i] ? 1 : 0;
    }
    return static_cast<double>(agree) / static_cast<double>(pred.size());
}

} // namespace saaf
