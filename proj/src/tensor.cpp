#include "saaf/tensor.hpp"

#include "saaf/error.hpp"

#include <unordered_set>

namespace saaf {

Index numel_of(const Shape& shape) {
    Index n = 1;
    for (Index d : shape) {
        n *= d;
    }
    return n;
}

namespace {

void check_shape(const Shape& shape, Index size) {
    for (Index d : shape) {
        if (d <= 0) {
            throw Error(ErrorKind::ShapeMismatch, "dimensions must be positive");
        }
    }
    if (numel_of(shape) != size) {
        throw Error(ErrorKind::ShapeMismatch, "data length does not match shape");
    }
}

} // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const Index n = numel_of(shape);
    return from(std::move(shape), Vector::Constant(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, Vector values, bool requires_grad) {
    check_shape(shape, values.size());
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, bool requires_grad) {
    Vector v(static_cast<Index>(values.size()));
    Index i = 0;
    for (double x : values) {
        v[i++] = x;
    }
    return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, Vector::Constant(1, value), requires_grad);
}

Tensor Tensor::from_matrix(const RowMatrix& m, bool requires_grad) {
    Vector v = Eigen::Map<const Vector>(m.data(), m.size());
    return from({m.rows(), m.cols()}, std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

Index Tensor::dim(Index axis) const {
    if (axis < 0 || axis >= rank()) {
        throw Error(ErrorKind::ShapeMismatch, "axis out of range");
    }
    return impl_->shape[static_cast<size_t>(axis)];
}

Index Tensor::numel() const { return impl_->data.size(); }

const Vector& Tensor::data() const { return impl_->data; }

Vector& Tensor::mutable_data() { return impl_->data; }

ConstMatrixMap Tensor::matrix() const {
    if (rank() == 2) {
        return ConstMatrixMap(impl_->data.data(), shape()[0], shape()[1]);
    }
    if (rank() == 1) {
        return ConstMatrixMap(impl_->data.data(), 1, shape()[0]);
    }
    throw Error(ErrorKind::ShapeMismatch, "matrix view needs rank 1 or 2");
}

double Tensor::item() const {
    if (numel() != 1) {
        throw Error(ErrorKind::NotScalar, "item() on a tensor with more than one element");
    }
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }

bool Tensor::is_leaf() const { return impl_->node == nullptr; }

bool Tensor::has_grad() const { return impl_->grad.has_value(); }

const Vector& Tensor::grad() const {
    if (!impl_->grad) {
        throw Error(ErrorKind::MissingGradient, "tensor has no gradient");
    }
    return *impl_->grad;
}

void Tensor::zero_grad() { impl_->grad = Vector::Zero(numel()); }

void Tensor::set_grad(Vector g) {
    if (g.size() != numel()) {
        throw Error(ErrorKind::ShapeMismatch, "gradient length differs from tensor");
    }
    impl_->grad = std::move(g);
}

void Tensor::clear_grad() { impl_->grad.reset(); }

Tensor Tensor::detach() const {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
    Tensor t = detach();
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
}

Tensor Tensor::make_result(Shape shape, Vector values, std::vector<Tensor> const& inputs,
                           std::function<void(const Vector&)> propagate) {
    if (!values.allFinite()) {
        throw Error(ErrorKind::NumericOverflow, "primitive produced a non-finite value");
    }
    Tensor out = from(std::move(shape), std::move(values));
    bool any = false;
    for (const auto& in : inputs) {
        any = any || in.requires_grad();
    }
    if (any && !NoGradGuard::active()) {
        auto node = std::make_shared<detail::GradNode>();
        for (const auto& in : inputs) {
            if (in.requires_grad()) {
                node->inputs.push_back(in.impl_);
            }
        }
        node->propagate = std::move(propagate);
        out.impl_->requires_grad = true;
        out.impl_->node = std::move(node);
    }
    return out;
}

void Tensor::accumulate(const std::shared_ptr<detail::TensorImpl>& impl, const Vector& delta) {
    if (!impl->requires_grad) {
        return;
    }
    if (impl->grad) {
        *impl->grad += delta;
    } else {
        impl->grad = delta;
    }
}

void Tensor::backward() const {
    if (numel() != 1) {
        throw Error(ErrorKind::NotScalar, "backward() requires a scalar loss");
    }
    if (!impl_->requires_grad) {
        return;
    }
    if (!impl_->node) {
        accumulate(impl_, Vector::Ones(1));
        return;
    }
    if (impl_->node->consumed) {
        throw Error(ErrorKind::GraphConsumed, "graph already consumed by an earlier backward()");
    }

    // Iterative post-order DFS over interior nodes.
    // `order` owns its entries: releasing a node's inputs may drop the last
    // other reference to an interior tensor that is still to be processed.
    std::vector<std::shared_ptr<detail::TensorImpl>> order;
    std::unordered_set<detail::TensorImpl*> seen;
    std::vector<std::pair<std::shared_ptr<detail::TensorImpl>, size_t>> stack{{impl_, 0}};
    seen.insert(impl_.get());
    while (!stack.empty()) {
        auto& [cur, next] = stack.back();
        auto& inputs = cur->node->inputs;
        if (next < inputs.size()) {
            std::shared_ptr<detail::TensorImpl> child = inputs[next++];
            if (child->node && !seen.contains(child.get())) {
                if (child->node->consumed) {
                    throw Error(ErrorKind::GraphConsumed, "graph already consumed by an earlier backward()");
                }
                seen.insert(child.get());
                stack.emplace_back(std::move(child), 0);
            }
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }

    impl_->grad = Vector::Ones(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorImpl* cur = it->get();
        auto& node = *cur->node;
        if (cur->grad) {
            node.propagate(*cur->grad);
        }
        cur->grad.reset();
        node.consumed = true;
        node.propagate = nullptr;
        node.inputs.clear();
    }
}

namespace {
thread_local bool no_grad_active = false;
}

NoGradGuard::NoGradGuard() : previous_(no_grad_active) { no_grad_active = true; }
NoGradGuard::~NoGradGuard() { no_grad_active = previous_; }
bool NoGradGuard::active() { return no_grad_active; }

} // namespace saaf
