#pragma once

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <vector>

namespace saaf {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

Index numel_of(const Shape& shape);

namespace detail {

struct TensorImpl;

// One recorded primitive application. `propagate` reads the gradient flowing
// into the primitive's output and accumulates into its inputs' gradients.
struct GradNode {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void(const Vector& grad_out)> propagate;
    bool consumed = false;
};

struct TensorImpl {
    Shape shape;
    Vector data;
    bool requires_grad = false;
    std::optional<Vector> grad;
    std::shared_ptr<GradNode> node;
};

} // namespace detail

/// Dense row-major tensor of doubles with reverse-mode differentiation.
///
/// Copies share storage (handle semantics); use clone() for a deep copy.
/// A tensor produced by a primitive whose inputs require gradients records a
/// graph node; backward() consumes that graph exactly once.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, Vector values, bool requires_grad = false);
    static Tensor from(Shape shape, std::initializer_list<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from_matrix(const RowMatrix& m, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }

    const Shape& shape() const;
    Index rank() const { return static_cast<Index>(shape().size()); }
    Index dim(Index axis) const;
    Index numel() const;

    const Vector& data() const;
    /// Mutable access for in-place parameter updates. Never call on a tensor
    /// that participates in a live graph.
    Vector& mutable_data();

    ConstMatrixMap matrix() const;
    double item() const;
    double operator[](Index i) const { return data()[i]; }

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool is_leaf() const;

    bool has_grad() const;
    const Vector& grad() const;
    void zero_grad();
    void set_grad(Vector g);
    void clear_grad();

    /// Populates gradients of every requires_grad leaf reachable from this
    /// scalar. Leaf gradients accumulate across separate graphs.
    void backward() const;

    /// Same storage, no graph, no gradient requirement.
    Tensor detach() const;
    /// Fresh storage copy without graph; keeps the requires_grad flag.
    Tensor clone() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    // Used by primitive implementations.
    static Tensor make_result(Shape shape, Vector values, std::vector<Tensor> const& inputs,
                              std::function<void(const Vector&)> propagate);
    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
    static void accumulate(const std::shared_ptr<detail::TensorImpl>& impl, const Vector& delta);

  private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

    std::shared_ptr<detail::TensorImpl> impl_;
};

/// While alive, primitives on this thread record no graph; results are plain
/// constants. Used for forward-only evaluations.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool active();

  private:
    bool previous_;
};

} // namespace saaf
