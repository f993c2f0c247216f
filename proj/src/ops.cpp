#include "saaf/ops.hpp"

#include "saaf/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace saaf {

namespace {

void fail_shape(const std::string& what) { throw Error(ErrorKind::ShapeMismatch, what); }

void require_rank2(const Tensor& a, const char* op) {
    if (a.rank() != 2) {
        fail_shape(std::string(op) + " expects a rank-2 tensor");
    }
}

void grad_into(const Tensor& t, const Vector& delta) { Tensor::accumulate(t.impl(), delta); }

bool is_row_broadcast(const Tensor& a, const Tensor& b) {
    return a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1) && a.shape() != b.shape();
}

// Column sums of a [rows, cols] buffer.
Vector column_sums(const Vector& g, Index rows, Index cols) {
    return ConstMatrixMap(g.data(), rows, cols).colwise().sum().transpose();
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

template <typename Fn>
Tensor unary(const Tensor& a, Fn&& value_and_slope) {
    const Index n = a.numel();
    Vector out(n);
    if (!a.requires_grad() || NoGradGuard::active()) {
        for (Index i = 0; i < n; ++i) {
            out[i] = value_and_slope(a[i]).first;
        }
        return Tensor::make_result(a.shape(), std::move(out), {}, {});
    }
    Vector slope(n);
    for (Index i = 0; i < n; ++i) {
        auto [v, d] = value_and_slope(a[i]);
        out[i] = v;
        slope[i] = d;
    }
    return Tensor::make_result(a.shape(), std::move(out), {a}, [a, slope = std::move(slope)](const Vector& g) {
        grad_into(a, g.cwiseProduct(slope));
    });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    if (is_row_broadcast(a, b)) {
        const Index rows = a.dim(0);
        const Index cols = a.dim(1);
        RowMatrix out = a.matrix();
        out.rowwise() += b.data().transpose();
        Vector v = Eigen::Map<const Vector>(out.data(), out.size());
        return Tensor::make_result(a.shape(), std::move(v), {a, b}, [a, b, rows, cols](const Vector& g) {
            grad_into(a, g);
            grad_into(b, column_sums(g, rows, cols));
        });
    }
    if (a.shape() != b.shape()) {
        fail_shape("add: shapes differ");
    }
    return Tensor::make_result(a.shape(), a.data() + b.data(), {a, b}, [a, b](const Vector& g) {
        grad_into(a, g);
        grad_into(b, g);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        fail_shape("sub: shapes differ");
    }
    return Tensor::make_result(a.shape(), a.data() - b.data(), {a, b}, [a, b](const Vector& g) {
        grad_into(a, g);
        grad_into(b, -g);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (is_row_broadcast(a, b)) {
        const Index rows = a.dim(0);
        const Index cols = a.dim(1);
        RowMatrix out = a.matrix().array().rowwise() * b.data().transpose().array();
        Vector v = Eigen::Map<const Vector>(out.data(), out.size());
        return Tensor::make_result(a.shape(), std::move(v), {a, b}, [a, b, rows, cols](const Vector& g) {
            ConstMatrixMap gm(g.data(), rows, cols);
            if (a.requires_grad()) {
                RowMatrix ga = gm.array().rowwise() * b.data().transpose().array();
                grad_into(a, Eigen::Map<const Vector>(ga.data(), ga.size()));
            }
            if (b.requires_grad()) {
                grad_into(b, (gm.array() * a.matrix().array()).colwise().sum().transpose().matrix());
            }
        });
    }
    if (a.shape() != b.shape()) {
        fail_shape("mul: shapes differ");
    }
    return Tensor::make_result(a.shape(), a.data().cwiseProduct(b.data()), {a, b}, [a, b](const Vector& g) {
        grad_into(a, g.cwiseProduct(b.data()));
        grad_into(b, g.cwiseProduct(a.data()));
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        fail_shape("div: shapes differ");
    }
    Vector out = a.data().cwiseQuotient(b.data());
    return Tensor::make_result(a.shape(), out, {a, b}, [a, b, out](const Vector& g) {
        grad_into(a, g.cwiseQuotient(b.data()));
        grad_into(b, -g.cwiseProduct(out).cwiseQuotient(b.data()));
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        fail_shape("matmul: inner dimensions differ (" + std::to_string(a.dim(1)) + " vs " +
                   std::to_string(b.dim(0)) + ")");
    }
    const Index m = a.dim(0);
    const Index n = b.dim(1);
    Vector out(m * n);
    MatrixMap(out.data(), m, n).noalias() = a.matrix() * b.matrix();
    return Tensor::make_result({m, n}, std::move(out), {a, b}, [a, b, m, n](const Vector& g) {
        ConstMatrixMap gm(g.data(), m, n);
        if (a.requires_grad()) {
            Vector ga(a.numel());
            MatrixMap(ga.data(), a.dim(0), a.dim(1)).noalias() = gm * b.matrix().transpose();
            grad_into(a, ga);
        }
        if (b.requires_grad()) {
            Vector gb(b.numel());
            MatrixMap(gb.data(), b.dim(0), b.dim(1)).noalias() = a.matrix().transpose() * gm;
            grad_into(b, gb);
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const Index r = a.dim(0);
    const Index c = a.dim(1);
    Vector out(a.numel());
    MatrixMap(out.data(), c, r) = a.matrix().transpose();
    return Tensor::make_result({c, r}, std::move(out), {a}, [a, r, c](const Vector& g) {
        Vector ga(r * c);
        MatrixMap(ga.data(), r, c) = ConstMatrixMap(g.data(), c, r).transpose();
        grad_into(a, ga);
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel_of(shape) != a.numel()) {
        fail_shape("reshape: element count changes");
    }
    return Tensor::make_result(std::move(shape), a.data(), {a}, [a](const Vector& g) { grad_into(a, g); });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
    if (parts.empty()) {
        fail_shape("concat: no inputs");
    }
    if (axis != 0 && axis != 1) {
        fail_shape("concat: axis must be 0 or 1");
    }
    for (const auto& p : parts) {
        require_rank2(p, "concat");
    }
    const int other = 1 - axis;
    const Index fixed = parts[0].dim(other);
    Index total = 0;
    for (const auto& p : parts) {
        if (p.dim(other) != fixed) {
            fail_shape("concat: non-concatenated dimensions differ");
        }
        total += p.dim(axis);
    }
    const Index rows = axis == 0 ? total : fixed;
    const Index cols = axis == 0 ? fixed : total;
    Vector out(rows * cols);
    MatrixMap om(out.data(), rows, cols);
    Index offset = 0;
    for (const auto& p : parts) {
        if (axis == 0) {
            om.middleRows(offset, p.dim(0)) = p.matrix();
        } else {
            om.middleCols(offset, p.dim(1)) = p.matrix();
        }
        offset += p.dim(axis);
    }
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return Tensor::make_result({rows, cols}, std::move(out), inputs, [inputs, axis, rows, cols](const Vector& g) {
        ConstMatrixMap gm(g.data(), rows, cols);
        Index off = 0;
        for (const auto& p : inputs) {
            const Index extent = p.dim(axis);
            if (p.requires_grad()) {
                Vector gp(p.numel());
                MatrixMap pm(gp.data(), p.dim(0), p.dim(1));
                if (axis == 0) {
                    pm = gm.middleRows(off, extent);
                } else {
                    pm = gm.middleCols(off, extent);
                }
                grad_into(p, gp);
            }
            off += extent;
        }
    });
}

Tensor slice(const Tensor& a, int axis, Index begin, Index end) {
    require_rank2(a, "slice");
    if (axis != 0 && axis != 1) {
        fail_shape("slice: axis must be 0 or 1");
    }
    if (begin < 0 || end > a.dim(axis) || begin >= end) {
        fail_shape("slice: range out of bounds");
    }
    const Index rows = axis == 0 ? end - begin : a.dim(0);
    const Index cols = axis == 0 ? a.dim(1) : end - begin;
    Vector out(rows * cols);
    if (axis == 0) {
        MatrixMap(out.data(), rows, cols) = a.matrix().middleRows(begin, rows);
    } else {
        MatrixMap(out.data(), rows, cols) = a.matrix().middleCols(begin, cols);
    }
    return Tensor::make_result({rows, cols}, std::move(out), {a}, [a, axis, begin, rows, cols](const Vector& g) {
        Vector ga = Vector::Zero(a.numel());
        MatrixMap gm(ga.data(), a.dim(0), a.dim(1));
        if (axis == 0) {
            gm.middleRows(begin, rows) = ConstMatrixMap(g.data(), rows, cols);
        } else {
            gm.middleCols(begin, cols) = ConstMatrixMap(g.data(), rows, cols);
        }
        grad_into(a, ga);
    });
}

Tensor softmax_rows(const Tensor& a, bool causal) {
    require_rank2(a, "softmax_rows");
    const Index rows = a.dim(0);
    const Index cols = a.dim(1);
    if (causal && rows > cols) {
        fail_shape("softmax_rows: causal mask needs cols >= rows");
    }
    Vector out = Vector::Zero(a.numel());
    MatrixMap om(out.data(), rows, cols);
    const auto am = a.matrix();
    for (Index i = 0; i < rows; ++i) {
        const Index width = causal ? i + 1 : cols;
        const double peak = am.row(i).head(width).maxCoeff();
        auto row = om.row(i).head(width);
        row = (am.row(i).head(width).array() - peak).exp().matrix();
        row /= row.sum();
    }
    return Tensor::make_result(a.shape(), out, {a}, [a, out, rows, cols](const Vector& g) {
        ConstMatrixMap y(out.data(), rows, cols);
        ConstMatrixMap gm(g.data(), rows, cols);
        Vector ga(rows * cols);
        MatrixMap gam(ga.data(), rows, cols);
        const Eigen::VectorXd dots = (gm.array() * y.array()).rowwise().sum();
        gam = (y.array() * (gm.array().colwise() - dots.array())).matrix();
        grad_into(a, ga);
    });
}

Tensor log_softmax_rows(const Tensor& a) {
    require_rank2(a, "log_softmax_rows");
    const Index rows = a.dim(0);
    const Index cols = a.dim(1);
    Vector out(a.numel());
    MatrixMap om(out.data(), rows, cols);
    const auto am = a.matrix();
    for (Index i = 0; i < rows; ++i) {
        const double peak = am.row(i).maxCoeff();
        const double lse = peak + std::log((am.row(i).array() - peak).exp().sum());
        om.row(i) = (am.row(i).array() - lse).matrix();
    }
    return Tensor::make_result(a.shape(), out, {a}, [a, out, rows, cols](const Vector& g) {
        ConstMatrixMap lp(out.data(), rows, cols);
        ConstMatrixMap gm(g.data(), rows, cols);
        Vector ga(rows * cols);
        const Eigen::VectorXd totals = gm.rowwise().sum();
        MatrixMap(ga.data(), rows, cols) = (gm.array() - lp.array().exp().colwise() * totals.array()).matrix();
        grad_into(a, ga);
    });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, [](double x) {
        const double s = stable_sigmoid(x);
        return std::pair{s, s * (1.0 - s)};
    });
}

Tensor gelu(const Tensor& a) {
    return unary(a, [](double x) {
        const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return std::pair{x * cdf, cdf + x * pdf};
    });
}

Tensor softplus(const Tensor& a) {
    return unary(a, [](double x) {
        const double v = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
        return std::pair{v, stable_sigmoid(x)};
    });
}

Tensor log(const Tensor& a) {
    return unary(a, [](double x) { return std::pair{std::log(x), 1.0 / x}; });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_rank2(x, "layer_norm");
    const Index rows = x.dim(0);
    const Index cols = x.dim(1);
    if (gain.shape() != Shape{cols} || bias.shape() != Shape{cols}) {
        fail_shape("layer_norm: gain/bias must be rank-1 of the row width");
    }
    RowMatrix xhat(rows, cols);
    Vector rstd(rows);
    const auto xm = x.matrix();
    for (Index i = 0; i < rows; ++i) {
        const double mu = xm.row(i).mean();
        const auto centered = (xm.row(i).array() - mu).eval();
        const double var = centered.square().mean();
        rstd[i] = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (centered * rstd[i]).matrix();
    }
    RowMatrix y = (xhat.array().rowwise() * gain.data().transpose().array()).rowwise() + bias.data().transpose().array();
    Vector out = Eigen::Map<const Vector>(y.data(), y.size());
    return Tensor::make_result(
        x.shape(), std::move(out), {x, gain, bias}, [x, gain, bias, xhat, rstd, rows, cols](const Vector& g) {
            ConstMatrixMap gm(g.data(), rows, cols);
            if (gain.requires_grad()) {
                grad_into(gain, (gm.array() * xhat.array()).colwise().sum().transpose().matrix());
            }
            if (bias.requires_grad()) {
                grad_into(bias, column_sums(g, rows, cols));
            }
            if (x.requires_grad()) {
                const RowMatrix dxhat = gm.array().rowwise() * gain.data().transpose().array();
                const Eigen::VectorXd mean_d = dxhat.rowwise().mean();
                const Eigen::VectorXd mean_dx = (dxhat.array() * xhat.array()).rowwise().mean();
                RowMatrix dx = ((dxhat.array().colwise() - mean_d.array()) - xhat.array().colwise() * mean_dx.array())
                                   .colwise() *
                               rstd.array();
                grad_into(x, Eigen::Map<const Vector>(dx.data(), dx.size()));
            }
        });
}

Tensor sum(const Tensor& a) {
    return Tensor::make_result({1}, Vector::Constant(1, a.data().sum()), {a}, [a](const Vector& g) {
        grad_into(a, Vector::Constant(a.numel(), g[0]));
    });
}

Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.numel());
    return Tensor::make_result({1}, Vector::Constant(1, a.data().sum() / n), {a}, [a, n](const Vector& g) {
        grad_into(a, Vector::Constant(a.numel(), g[0] / n));
    });
}

Tensor scale(const Tensor& a, double s) {
    return Tensor::make_result(a.shape(), a.data() * s, {a}, [a, s](const Vector& g) { grad_into(a, g * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
    return Tensor::make_result(a.shape(), (a.data().array() + s).matrix(), {a},
                               [a](const Vector& g) { grad_into(a, g); });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    require_rank2(table, "embedding");
    const Index vocab = table.dim(0);
    const Index width = table.dim(1);
    const auto n = static_cast<Index>(ids.size());
    if (n == 0) {
        fail_shape("embedding: empty id list");
    }
    std::vector<int> idv(ids.begin(), ids.end());
    Vector out(n * width);
    MatrixMap om(out.data(), n, width);
    const auto tm = table.matrix();
    for (Index i = 0; i < n; ++i) {
        if (idv[i] < 0 || idv[i] >= vocab) {
            throw Error(ErrorKind::IdOutOfRange, "embedding id " + std::to_string(idv[i]));
        }
        om.row(i) = tm.row(idv[i]);
    }
    return Tensor::make_result({n, width}, std::move(out), {table}, [table, idv, width](const Vector& g) {
        Vector gt = Vector::Zero(table.numel());
        MatrixMap gm(gt.data(), table.dim(0), width);
        ConstMatrixMap go(g.data(), static_cast<Index>(idv.size()), width);
        for (size_t i = 0; i < idv.size(); ++i) {
            gm.row(idv[i]) += go.row(static_cast<Index>(i));
        }
        grad_into(table, gt);
    });
}

namespace {

struct Tap {
    Index lo;
    Index hi;
    double w_hi;
};

// Half-pixel source coordinate for one output index.
Tap bilinear_tap(Index dst, Index in, Index out) {
    double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<Index>(std::floor(src));
    const Index hi = std::min(lo + 1, in - 1);
    return {lo, hi, src - static_cast<double>(lo)};
}

} // namespace

Tensor upsample_bilinear(const Tensor& a, Index out_h, Index out_w) {
    require_rank2(a, "upsample_bilinear");
    if (out_h <= 0 || out_w <= 0) {
        fail_shape("upsample_bilinear: output dims must be positive");
    }
    const Index in_h = a.dim(0);
    const Index in_w = a.dim(1);
    std::vector<Tap> ty(static_cast<size_t>(out_h));
    std::vector<Tap> tx(static_cast<size_t>(out_w));
    for (Index y = 0; y < out_h; ++y) {
        ty[y] = bilinear_tap(y, in_h, out_h);
    }
    for (Index x = 0; x < out_w; ++x) {
        tx[x] = bilinear_tap(x, in_w, out_w);
    }
    const auto am = a.matrix();
    Vector out(out_h * out_w);
    MatrixMap om(out.data(), out_h, out_w);
    for (Index y = 0; y < out_h; ++y) {
        const Tap& r = ty[y];
        for (Index x = 0; x < out_w; ++x) {
            const Tap& c = tx[x];
            const double top = am(r.lo, c.lo) * (1.0 - c.w_hi) + am(r.lo, c.hi) * c.w_hi;
            const double bottom = am(r.hi, c.lo) * (1.0 - c.w_hi) + am(r.hi, c.hi) * c.w_hi;
            om(y, x) = top * (1.0 - r.w_hi) + bottom * r.w_hi;
        }
    }
    return Tensor::make_result({out_h, out_w}, std::move(out), {a}, [a, ty, tx, in_h, in_w, out_h, out_w](const Vector& g) {
        Vector ga = Vector::Zero(in_h * in_w);
        MatrixMap gm(ga.data(), in_h, in_w);
        ConstMatrixMap go(g.data(), out_h, out_w);
        for (Index y = 0; y < out_h; ++y) {
            const Tap& r = ty[y];
            for (Index x = 0; x < out_w; ++x) {
                const Tap& c = tx[x];
                const double v = go(y, x);
                gm(r.lo, c.lo) += v * (1.0 - r.w_hi) * (1.0 - c.w_hi);
                gm(r.lo, c.hi) += v * (1.0 - r.w_hi) * c.w_hi;
                gm(r.hi, c.lo) += v * r.w_hi * (1.0 - c.w_hi);
                gm(r.hi, c.hi) += v * r.w_hi * c.w_hi;
            }
        }
        grad_into(a, ga);
    });
}

} // namespace saaf
