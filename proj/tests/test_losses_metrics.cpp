#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "eddynet/dataset.hpp"
#include "eddynet/grad_suite.hpp"
#include "eddynet/losses.hpp"
#include "eddynet/metrics.hpp"

using namespace eddynet;
using namespace eddynet::loss;
using namespace eddynet::metrics;

namespace {

SegmentationMask mask_of(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> v) {
    SegmentationMask m(rows, cols);
    m.values = std::move(v);
    return m;
}

Tensor4<double> pixel(double a, double b, double c) {
    return Tensor4<double>(Shape4{1, 3, 1, 1}, std::vector<double>{a, b, c});
}

SegmentationMask random_mask(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, 2);
    SegmentationMask m(r, c);
    for (auto& v : m.values) v = static_cast<std::uint8_t>(d(rng));
    return m;
}

}  // namespace

TEST(HardDice, ClosedFormFixtures) {
    const auto a = mask_of(2, 3, {1, 1, 0, 2, 2, 0});
    EXPECT_EQ(hard_dice(a, a, 1), 1.0);
    const auto p = mask_of(1, 4, {1, 1, 0, 0});
    const auto g = mask_of(1, 4, {0, 0, 1, 1});
    EXPECT_EQ(hard_dice(p, g, 1), 0.0);
    // |P| = 4, |G| = 6, |P n G| = 3
    const auto p4 = mask_of(1, 10, {1, 1, 1, 1, 0, 0, 0, 0, 0, 0});
    const auto g6 = mask_of(1, 10, {0, 1, 1, 1, 1, 1, 1, 0, 0, 0});
    EXPECT_EQ(hard_dice(p4, g6, 1), 0.6);
    EXPECT_EQ(hard_dice(p, g, 2), 1.0);  // absent from both
}

TEST(HardDice, AccuracyFixtures) {
    const auto a = mask_of(1, 4, {0, 1, 2, 0});
    EXPECT_EQ(global_accuracy(a, a), 1.0);
    EXPECT_EQ(global_accuracy(mask_of(1, 2, {1, 1}), mask_of(1, 2, {0, 0})), 0.0);
    EXPECT_EQ(global_accuracy(mask_of(1, 4, {0, 1, 2, 0}), mask_of(1, 4, {0, 1, 0, 1})), 0.5);
    EXPECT_THROW(global_accuracy(a, mask_of(2, 2, {0, 0, 0, 0})), ShapeError);
}

TEST(SoftDice, ClosedFormFixtures) {
    EXPECT_EQ(soft_dice(pixel(1, 0, 0), pixel(1, 0, 0), 0), 1.0);
    const double third = 1.0 / 3.0;
    EXPECT_NEAR(soft_dice(pixel(third, third, third), pixel(0, 1, 0), 1), 0.5, 1e-15);
}

TEST(SoftDice, EqualsHardDiceOnBinarizedProbabilities) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
        const auto p = random_mask(3, 5, rng), g = random_mask(3, 5, rng);
        const Tensor4<double> pt = data::one_hot(p).cast<double>(), gt = data::one_hot(g).cast<double>();
        for (std::uint8_t c = 0; c < 3; ++c) EXPECT_NEAR(soft_dice(pt, gt, c), hard_dice(p, g, c), 1e-12);
    }
}

TEST(DiceLoss, Fixtures) {
    const double third = 1.0 / 3.0;
    EXPECT_NEAR(dice_loss(pixel(third, third, third), pixel(0, 1, 0)).loss, 1.0 - 1.0 / 6.0, 1e-9);
    const auto t = data::one_hot(mask_of(2, 2, {0, 1, 2, 1})).cast<double>();
    EXPECT_LT(std::abs(dice_loss(t, t).loss), 1e-6);
}

TEST(CrossEntropy, Fixtures) {
    const double third = 1.0 / 3.0;
    const Tensor4<double> u(Shape4{1, 3, 1, 1}, third);
    EXPECT_NEAR(categorical_cross_entropy(u, pixel(0, 0, 1)).loss, std::log(3.0), 1e-9);
    const auto t = data::one_hot(mask_of(2, 2, {0, 1, 2, 1})).cast<double>();
    const double l = categorical_cross_entropy(t, t).loss;
    EXPECT_GE(l, 0.0);
    EXPECT_LT(l, 1e-6);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
    for (auto k : {LossKind::dice, LossKind::cce}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto r = verify::check_loss(k, seed);
            EXPECT_TRUE(r.pass) << to_string(k) << " seed " << seed << " " << r.worst;
        }
    }
}

TEST(Losses, ShapeMismatchRejected) {
    EXPECT_THROW(dice_loss(Tensor4<double>(1, 3, 2, 2), Tensor4<double>(1, 3, 2, 3)), ShapeError);
    EXPECT_EQ(parse_loss("cce"), LossKind::cce);
    EXPECT_THROW(parse_loss("mse"), std::invalid_argument);
}

TEST(LossAccumulator, PooledEqualsSingleBatch) {
    std::mt19937_64 rng(2);
    std::normal_distribution<float> d;
    Tensor logits(4, 3, 4, 4);
    for (auto& v : logits.vec()) v = d(rng);
    const Tensor p = nn::softmax_channels(logits);
    SegmentationMask m(4, 16);
    Tensor t(4, 3, 4, 4);
    std::uniform_int_distribution<std::size_t> c(0, 2);
    for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < 16; ++i) t.plane(n, c(rng))[i] = 1.0f;
    for (auto k : {LossKind::dice, LossKind::cce}) {
        LossAccumulator acc(k);
        for (std::size_t n = 0; n < 4; n += 2) {
            Tensor pp(2, 3, 4, 4), tt(2, 3, 4, 4);
            std::copy_n(p.item(n), pp.size(), pp.data());
            std::copy_n(t.item(n), tt.size(), tt.data());
            acc.add(pp, tt);
        }
        EXPECT_NEAR(acc.value(), compute_loss(k, p, t).loss, 1e-6);
    }
}

TEST(MetricReport, PerfectAndEmptyClasses) {
    const auto a = mask_of(2, 2, {0, 1, 2, 0});
    const auto r = metric_report(a, a);
    for (double d : r.dice) EXPECT_EQ(d, 1.0);
    EXPECT_EQ(r.mean_dice, 1.0);
    EXPECT_EQ(r.global_accuracy, 1.0);
    const auto bg = mask_of(2, 2, {0, 0, 0, 0});
    const auto e = metric_report(bg, bg);
    EXPECT_EQ(e.dice[0], 1.0);
    EXPECT_EQ(e.dice[1], 1.0);
    EXPECT_EQ(e.dice[2], 1.0);
    EXPECT_EQ(e.global_accuracy, 1.0);
}

TEST(MetricReport, MatchesScriptedRecount) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        const auto p = random_mask(6, 7, rng), g = random_mask(6, 7, rng);
        const auto r = metric_report(p, g);
        double correct = 0.0;
        double dice_sum = 0.0;
        for (int c = 0; c < 3; ++c) {
            double inter = 0, np = 0, ng = 0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                inter += p.values[i] == c && g.values[i] == c;
                np += p.values[i] == c;
                ng += g.values[i] == c;
            }
            const double d = (np + ng) == 0 ? 1.0 : 2 * inter / (np + ng);
            EXPECT_NEAR(r.dice[c], d, 1e-12);
            dice_sum += d;
        }
        for (std::size_t i = 0; i < p.size(); ++i) correct += p.values[i] == g.values[i];
        EXPECT_NEAR(r.global_accuracy, correct / p.size(), 1e-12);
        EXPECT_NEAR(r.mean_dice, dice_sum / 3, 1e-12);
    }
}

TEST(ClassCounts, PoolingIsAddition) {
    std::mt19937_64 rng(4);
    ClassCounts all, a, b;
    const auto p1 = random_mask(3, 3, rng), g1 = random_mask(3, 3, rng);
    const auto p2 = random_mask(3, 3, rng), g2 = random_mask(3, 3, rng);
    all.add(p1, g1);
    all.add(p2, g2);
    a.add(p1, g1);
    b.add(p2, g2);
    a.add(b);
    EXPECT_EQ(a.intersection, all.intersection);
    EXPECT_EQ(a.correct, all.correct);
    EXPECT_EQ(a.total, 18u);
}
