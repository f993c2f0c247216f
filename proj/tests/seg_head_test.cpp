#include "saaf/error.hpp"
#include "saaf/model.hpp"
#include "saaf/ops.hpp"
#include "saaf/seg_head.hpp"
#include "saaf/text_model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace saaf;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Vector v(numel_of(shape));
    for (Index i = 0; i < v.size(); ++i) {
        v[i] = n(rng);
    }
    return Tensor::from(std::move(shape), std::move(v));
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::NonFinite;
}

} // namespace

TEST_CASE("extract_seg_embedding selects the first <SEG> row") {
    const Tensor hidden = random_tensor({10, 64}, 1);
    TokenSequence t = tokenize("abcdefg<SEG>x<SEG>");
    REQUIRE(t.size() == 10);
    const Tensor row = extract_seg_embedding(hidden, t);
    CHECK(row.shape() == Shape{1, 64});
    CHECK((row.matrix().row(0).array() == hidden.matrix().row(7).array()).all());

    CHECK(kind_of([&] { extract_seg_embedding(hidden, tokenize("no seg 123")); }) == ErrorKind::NoSegToken);
    CHECK(kind_of([&] { extract_seg_embedding(hidden, tokenize("<SEG>")); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("project_seg") {
    ModelBundle bundle = init_model({}, 1, 2);
    const Tensor q = project_seg(bundle, random_tensor({1, 64}, 3));
    CHECK(q.shape() == Shape{1, 32});
    CHECK(project_seg(bundle, Tensor::zeros({1, 64})).data().isZero(0.0));
    CHECK(kind_of([&] { project_seg(bundle, Tensor::zeros({1, 32})); }) == ErrorKind::ShapeMismatch);

    // Two affine layers with exact GELU between them.
    const Tensor raw = random_tensor({1, 64}, 4);
    Eigen::RowVectorXd h = raw.matrix() * bundle.param("seg.gamma.fc1").matrix().transpose();
    h += bundle.param("seg.gamma.fc1_bias").data().transpose();
    for (Index i = 0; i < h.size(); ++i) {
        h[i] = 0.5 * h[i] * std::erfc(-h[i] / std::sqrt(2.0));
    }
    const Eigen::RowVectorXd expected = h * bundle.param("seg.gamma.fc2").matrix().transpose() +
                                        bundle.param("seg.gamma.fc2_bias").data().transpose();
    CHECK((project_seg(bundle, raw).matrix() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decode_mask") {
    ModelBundle bundle = init_model({}, 1, 2);
    const FeatureMap f{8, 8, random_tensor({64, 64}, 5)};
    const Tensor q = random_tensor({1, 32}, 6);
    const Tensor logits = decode_mask(bundle, q, f);
    CHECK(logits.shape() == Shape{64, 64});

    // Cell scores by direct loops, then the library's bilinear resize.
    const auto wf = bundle.param("seg.decoder.w_f").matrix();
    const auto bf = bundle.param("seg.decoder.b_f").data();
    Vector scores(64);
    for (Index k = 0; k < 64; ++k) {
        double s = 0.0;
        for (Index j = 0; j < 32; ++j) {
            double key = bf[j];
            for (Index c = 0; c < 64; ++c) {
                key += wf(j, c) * f.features.matrix()(k, c);
            }
            s += q[j] * key;
        }
        scores[k] = s / std::sqrt(32.0);
    }
    const Tensor expected = upsample_bilinear(Tensor::from({8, 8}, scores), 64, 64);
    CHECK((logits.data() - expected.data()).cwiseAbs().maxCoeff() < 1e-12);

    ModelBundle zero = bundle.clone();
    zero.params.at("seg.decoder.w_f").value.mutable_data().setZero();
    const Tensor z = decode_mask(zero, q, f);
    CHECK(z.data().isZero(0.0));
    CHECK(binarize(z).count() == 64 * 64);

    // Sensitivity: a small change in one query coordinate moves some logit.
    Tensor q2 = q.clone();
    q2.mutable_data()[3] += 1e-3;
    CHECK((decode_mask(bundle, q2, f).data().array() != logits.data().array()).any());

    CHECK(kind_of([&] { decode_mask(bundle, Tensor::zeros({1, 16}), f); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("binarize") {
    CHECK(binarize(Tensor::zeros({4, 4})).count() == 16);
    CHECK(binarize(Tensor::full({4, 4}, -10.0)).count() == 0);
    CHECK(kind_of([] { binarize(Tensor::zeros({2, 2}), 1.5); }) == ErrorKind::BadThreshold);
    CHECK(kind_of([] { binarize(Tensor::zeros({2, 2}), 0.0); }) == ErrorKind::BadThreshold);

    // Monotone in the threshold.
    const Tensor logits = random_tensor({16, 16}, 7);
    BinaryMask previous = binarize(logits, 0.05);
    for (double tau = 0.1; tau < 1.0; tau += 0.05) {
        const BinaryMask m = binarize(logits, tau);
        for (Index y = 0; y < 16; ++y) {
            for (Index x = 0; x < 16; ++x) {
                CHECK((!m.at(y, x) || previous.at(y, x)));
            }
        }
        previous = m;
    }
}
