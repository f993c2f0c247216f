#pragma once

#include "saaf/tensor.hpp"

#include <cstdint>
#include <vector>

namespace saaf {

/// H x W x 3 image with channel values in [0, 1], stored row-major HWC.
class Image {
  public:
    Image() = default;
    Image(Index height, Index width, Vector hwc);
    static Image filled(Index height, Index width, double value);

    Index height() const { return height_; }
    Index width() const { return width_; }
    const Vector& data() const { return data_; }

    double at(Index y, Index x, Index c) const { return data_[(y * width_ + x) * 3 + c]; }
    void set(Index y, Index x, Index c, double v) { data_[(y * width_ + x) * 3 + c] = v; }

    bool operator==(const Image&) const = default;

  private:
    Index height_ = 0;
    Index width_ = 0;
    Vector data_;
};

/// H x W mask with values in {0, 1}; 1 marks the referred class.
class BinaryMask {
  public:
    BinaryMask() = default;
    BinaryMask(Index height, Index width, std::vector<std::uint8_t> bits);
    static BinaryMask filled(Index height, Index width, bool value);

    Index height() const { return height_; }
    Index width() const { return width_; }
    Index size() const { return height_ * width_; }
    const std::vector<std::uint8_t>& bits() const { return bits_; }

    bool at(Index y, Index x) const { return bits_[static_cast<size_t>(y * width_ + x)] != 0; }
    void set(Index y, Index x, bool v) { bits_[static_cast<size_t>(y * width_ + x)] = v ? 1 : 0; }
    Index count() const;

    BinaryMask complement() const;
    /// As a constant [H, W] tensor of 0.0 / 1.0.
    Tensor to_tensor() const;

    bool operator==(const BinaryMask&) const = default;

  private:
    Index height_ = 0;
    Index width_ = 0;
    std::vector<std::uint8_t> bits_;
};

} // namespace saaf
