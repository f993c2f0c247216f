#include "saaf/error.hpp"
#include "saaf/objective.hpp"
#include "saaf/ops.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace saaf;

namespace {

BinaryMask mask_from(Index h, Index w, std::initializer_list<int> bits) {
    std::vector<std::uint8_t> v;
    for (int b : bits) {
        v.push_back(static_cast<std::uint8_t>(b));
    }
    return BinaryMask(h, w, std::move(v));
}

BinaryMask random_mask(Index h, Index w, std::mt19937_64& rng, double p) {
    std::bernoulli_distribution coin(p);
    std::vector<std::uint8_t> v(static_cast<size_t>(h * w));
    for (auto& b : v) {
        b = coin(rng) ? 1 : 0;
    }
    return BinaryMask(h, w, std::move(v));
}

Tensor saturated(const BinaryMask& m, double magnitude = 50.0) {
    Vector v(m.size());
    for (Index i = 0; i < m.size(); ++i) {
        v[i] = m.bits()[static_cast<size_t>(i)] ? magnitude : -magnitude;
    }
    return Tensor::from({m.height(), m.width()}, std::move(v));
}

// Test-only oracle: 2x2 confusion matrix counted pixel by pixel.
struct Confusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;
};

Confusion confusion(const BinaryMask& pred, const BinaryMask& gt) {
    Confusion c;
    for (Index y = 0; y < gt.height(); ++y) {
        for (Index x = 0; x < gt.width(); ++x) {
            const bool p = pred.at(y, x);
            const bool g = gt.at(y, x);
            if (p && g) {
                ++c.tp;
            } else if (p) {
                ++c.fp;
            } else if (g) {
                ++c.fn;
            } else {
                ++c.tn;
            }
        }
    }
    return c;
}

double oracle_miou(const Confusion& c) {
    double total = 0.0;
    int classes = 0;
    if (c.tp + c.fp + c.fn > 0) {
        total += static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn);
        ++classes;
    }
    if (c.tn + c.fp + c.fn > 0) {
        total += static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp + c.fn);
        ++classes;
    }
    return total / classes;
}

double oracle_pa(const Confusion& c) {
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.tp + c.tn + c.fp + c.fn);
}

} // namespace

TEST_CASE("text loss") {
    TokenSequence t = tokenize("abcd");
    t.supervise = {false, false, true, true};

    SUBCASE("uniform logits give ln(vocab)") {
        const double l = text_loss(Tensor::zeros({4, 101}), t).item();
        CHECK(std::abs(l - std::log(101.0)) < 1e-12);
        CHECK(std::abs(l - 4.61512) < 1e-5);
    }
    SUBCASE("shifted mean over supervised positions") {
        std::mt19937_64 rng(1);
        std::normal_distribution<double> n;
        Vector v(4 * 101);
        for (auto& x : v) {
            x = n(rng);
        }
        const Tensor logits = Tensor::from({4, 101}, v);
        auto nll = [&](Index row, int id) {
            const auto r = logits.matrix().row(row);
            double z = 0.0;
            for (Index j = 0; j < 101; ++j) {
                z += std::exp(r[j]);
            }
            return std::log(z) - r[id];
        };
        const double a = nll(1, t.ids[2]);
        const double b = nll(2, t.ids[3]);
        CHECK(std::abs(text_loss(logits, t).item() - (a + b) / 2) < 1e-12);
    }
    SUBCASE("confident correct logits approach zero") {
        Vector v = Vector::Zero(4 * 101);
        v[1 * 101 + t.ids[2]] = 60.0;
        v[2 * 101 + t.ids[3]] = 60.0;
        CHECK(text_loss(Tensor::from({4, 101}, v), t).item() < 1e-20);
    }
    SUBCASE("no supervised positions") {
        TokenSequence none = tokenize("abcd");
        try {
            text_loss(Tensor::zeros({4, 101}), none);
            FAIL("expected NoSupervisedPositions");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::NoSupervisedPositions);
        }
    }
}

TEST_CASE("binary cross-entropy") {
    std::mt19937_64 rng(2);
    const BinaryMask target = random_mask(8, 8, rng, 0.4);
    CHECK(std::abs(bce_loss(Tensor::zeros({8, 8}), target).item() - std::numbers::ln2) < 1e-12);
    CHECK(bce_loss(saturated(target), target).item() < 1e-20);

    std::normal_distribution<double> n(0.0, 3.0);
    Vector z(64);
    for (auto& x : z) {
        x = n(rng);
    }
    double direct = 0.0;
    for (Index i = 0; i < 64; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-z[i]));
        direct -= target.bits()[static_cast<size_t>(i)] ? std::log(p) : std::log(1.0 - p);
    }
    CHECK(std::abs(bce_loss(Tensor::from({8, 8}, z), target).item() - direct / 64) < 1e-12);

    // Stable for very large logits.
    CHECK(std::isfinite(bce_loss(Tensor::full({8, 8}, 700.0), target).item()));
    CHECK_THROWS_AS(bce_loss(Tensor::zeros({4, 4}), target), Error);
}

TEST_CASE("dice loss") {
    const BinaryMask target = mask_from(2, 2, {1, 0, 1, 0});
    CHECK(dice_loss(saturated(target), target).item() == 0.0);
    CHECK(std::abs(dice_loss(Tensor::full({2, 2}, 50.0), BinaryMask::filled(2, 2, false)).item() - 0.8) < 1e-15);
    CHECK(dice_loss(Tensor::full({2, 2}, -50.0), BinaryMask::filled(2, 2, false)).item() < 1e-20);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        const BinaryMask t = random_mask(6, 6, rng, 0.5);
        Vector z(36);
        for (auto& x : z) {
            x = n(rng);
        }
        const double d = dice_loss(Tensor::from({6, 6}, z), t).item();
        CHECK(d >= 0.0);
        CHECK(d < 1.0);
    }
}

TEST_CASE("mask and total loss compositions") {
    const BinaryMask target = mask_from(2, 2, {1, 1, 0, 0});
    const LossWeights w;
    const double m = mask_loss(Tensor::zeros({2, 2}), target, w).item();
    CHECK(std::abs(m - 1.586294) < 1e-6);
    CHECK(std::abs(m - (2.0 * std::numbers::ln2 + 0.5 * (1.0 - 3.0 / 5.0))) < 1e-15);
    CHECK(mask_loss(saturated(target), target, w).item() < 1e-10);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    Vector z(16);
    for (auto& x : z) {
        x = n(rng);
    }
    const BinaryMask t4 = random_mask(4, 4, rng, 0.5);
    const Tensor logits = Tensor::from({4, 4}, z);
    const double bce = bce_loss(logits, t4).item();
    const double dice = dice_loss(logits, t4).item();
    CHECK(mask_loss(logits, t4, w).item() == 2.0 * bce + 0.5 * dice);
    LossWeights off = w;
    off.bce = 0.0;
    off.dice = 0.0;
    CHECK(mask_loss(logits, t4, off).item() == 0.0);

    CHECK(total_loss(Tensor::scalar(1.0), Tensor::scalar(0.5), w).item() == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(std::abs(total_loss(Tensor::scalar(1.0), Tensor::scalar(0.5), w).item() - (0.8 * 1.0 + 0.8 * 0.5)) <
          1e-15);
    LossWeights no_text = w;
    no_text.text = 0.0;
    CHECK(total_loss(Tensor::scalar(3.0), Tensor::scalar(0.5), no_text).item() == 0.8 * 0.5);
    CHECK(total_loss(Tensor::scalar(0.0), Tensor::scalar(0.0), w).item() == 0.0);

    try {
        total_loss(Tensor::scalar(std::nan("")), Tensor::scalar(0.5), w);
        FAIL("expected NonFinite");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonFinite);
    }
    LossWeights negative = w;
    negative.dice = -1.0;
    CHECK_THROWS(negative.validate());
}

TEST_CASE("loss gradients flow back to the logits") {
    std::mt19937_64 rng(5);
    const BinaryMask t = random_mask(4, 4, rng, 0.5);
    std::normal_distribution<double> n;
    Vector z(16);
    for (auto& x : z) {
        x = n(rng);
    }
    Tensor logits = Tensor::from({4, 4}, z, true);
    mask_loss(logits, t, LossWeights{}).backward();
    const Vector analytic = logits.grad();
    const double h = 1e-5;
    for (Index i = 0; i < 16; ++i) {
        Vector up = z;
        Vector down = z;
        up[i] += h;
        down[i] -= h;
        const double numeric = (mask_loss(Tensor::from({4, 4}, up), t, {}).item() -
                                mask_loss(Tensor::from({4, 4}, down), t, {}).item()) /
                               (2 * h);
        CHECK(std::abs(numeric - analytic[i]) <= 1e-6 * std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6}));
    }
}

TEST_CASE("metrics on the 4x4 half/half case") {
    BinaryMask left = BinaryMask::filled(4, 4, false);
    BinaryMask top = BinaryMask::filled(4, 4, false);
    for (Index y = 0; y < 4; ++y) {
        for (Index x = 0; x < 4; ++x) {
            left.set(y, x, x < 2);
            top.set(y, x, y < 2);
        }
    }
    const IouResult r = miou(top, left);
    CHECK(std::abs(r.iou_foreground - 1.0 / 3.0) < 1e-12);
    CHECK(std::abs(r.iou_background - 1.0 / 3.0) < 1e-12);
    CHECK(std::abs(r.miou - 1.0 / 3.0) < 1e-12);
    CHECK(pixel_accuracy(top, left) == 0.5);

    CHECK(miou(left, left).miou == 1.0);
    CHECK(pixel_accuracy(left, left) == 1.0);
    CHECK(miou(left.complement(), left).miou == 0.0);
    CHECK(pixel_accuracy(left.complement(), left) == 0.0);

    // A class absent from both masks is left out of the mean.
    const BinaryMask empty = BinaryMask::filled(4, 4, false);
    const IouResult only_bg = miou(empty, empty);
    CHECK_FALSE(only_bg.foreground_present);
    CHECK(only_bg.miou == 1.0);

    CHECK_THROWS_AS(miou(BinaryMask::filled(2, 2, false), left), Error);
    CHECK_THROWS_AS(pixel_accuracy(BinaryMask::filled(2, 2, false), left), Error);
}

TEST_CASE("metrics match a brute-force confusion matrix") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> density(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const BinaryMask pred = random_mask(64, 64, rng, density(rng));
        const BinaryMask gt = random_mask(64, 64, rng, density(rng));
        const Confusion c = confusion(pred, gt);
        CHECK(miou(pred, gt).miou == oracle_miou(c));
        CHECK(pixel_accuracy(pred, gt) == oracle_pa(c));
        // Symmetric under swapping class labels in both masks.
        CHECK(std::abs(miou(pred.complement(), gt.complement()).miou - miou(pred, gt).miou) < 1e-15);
        CHECK(pixel_accuracy(pred.complement(), gt.complement()) == pixel_accuracy(pred, gt));
    }
}
