#pragma once

#include "saaf/tensor.hpp"

#include <random>

namespace saaf::detail {

template <typename Rng>
Tensor normal_tensor(Shape shape, double std, Rng& rng) {
    std::normal_distribution<double> dist(0.0, std);
    Vector v(numel_of(shape));
    for (Index i = 0; i < v.size(); ++i) {
        v[i] = dist(rng);
    }
    return Tensor::from(std::move(shape), std::move(v));
}

} // namespace saaf::detail
