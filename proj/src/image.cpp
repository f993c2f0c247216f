#include "saaf/image.hpp"

#include "saaf/error.hpp"

#include <algorithm>

namespace saaf {

Image::Image(Index height, Index width, Vector hwc) : height_(height), width_(width), data_(std::move(hwc)) {
    if (height <= 0 || width <= 0 || data_.size() != height * width * 3) {
        throw Error(ErrorKind::ShapeMismatch, "image buffer does not match H x W x 3");
    }
    if ((data_.array() < 0.0).any() || (data_.array() > 1.0).any() || !data_.allFinite()) {
        throw Error(ErrorKind::ShapeMismatch, "image values must lie in [0, 1]");
    }
}

Image Image::filled(Index height, Index width, double value) {
    return Image(height, width, Vector::Constant(height * width * 3, value));
}

BinaryMask::BinaryMask(Index height, Index width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
    if (height <= 0 || width <= 0 || static_cast<Index>(bits_.size()) != height * width) {
        throw Error(ErrorKind::ShapeMismatch, "mask buffer does not match H x W");
    }
    if (std::any_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b > 1; })) {
        throw Error(ErrorKind::NonBinaryMaskValue, "mask values must be 0 or 1");
    }
}

BinaryMask BinaryMask::filled(Index height, Index width, bool value) {
    return BinaryMask(height, width, std::vector<std::uint8_t>(static_cast<size_t>(height * width), value ? 1 : 0));
}

Index BinaryMask::count() const { return std::count(bits_.begin(), bits_.end(), std::uint8_t{1}); }

BinaryMask BinaryMask::complement() const {
    BinaryMask out = *this;
    for (auto& b : out.bits_) {
        b = 1 - b;
    }
    return out;
}

Tensor BinaryMask::to_tensor() const {
    Vector v(size());
    for (Index i = 0; i < size(); ++i) {
        v[i] = bits_[static_cast<size_t>(i)];
    }
    return Tensor::from({height_, width_}, std::move(v));
}

} // namespace saaf
