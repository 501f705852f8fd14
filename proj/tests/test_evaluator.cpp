#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "eddynet/evaluator.hpp"
#include "eddynet/synth.hpp"

using namespace eddynet;
using namespace eddynet::eval;

namespace {

std::vector<data::Scene> scenes(std::size_t n, std::uint64_t seed) {
    data::SynthConfig c;
    data::Rng rng(seed);
    std::vector<data::Scene> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto s = data::synth_scene(c, rng);
        out.push_back({"s" + std::to_string(i), s.grid, s.mask});
    }
    return out;
}

EvalProtocolConfig small_protocol() {
    EvalProtocolConfig c;
    c.n_sets = 6;
    c.set_size = 10;
    c.patch_size = 24;
    c.seed = 3;
    return c;
}

// Truth for even pool items, all non-eddy for odd ones.
Predictor half_right(std::span<const data::PatchPair> pool, std::vector<int>* calls) {
    return [pool, calls](std::span<const data::PatchPair> run) {
        std::vector<SegmentationMask> out;
        for (const auto& p : run) {
            const auto i = static_cast<std::size_t>(&p - pool.data());
            ++(*calls)[i];
            out.push_back(i % 2 == 0 ? p.mask : SegmentationMask(p.mask.rows, p.mask.cols));
        }
        return out;
    };
}

model::NetworkWeights small_model(int stages) {
    model::EddyNetConfig c;
    c.stages = stages;
    c.filters = 4;
    nn::Rng rng(21);
    return model::build_model(c, rng);
}

}  // namespace

TEST(Protocol, TruthScoresOneWithZeroSpread) {
    const auto sc = scenes(4, 1);
    const auto pool = build_pool(sc, 30, 24, 2);
    for (auto mode : {Aggregation::pooled, Aggregation::per_patch}) {
        const auto r = evaluate_protocol(truth_predictor(), pool, small_protocol(), mode);
        ASSERT_EQ(r.sets.size(), 6u);
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            EXPECT_EQ(r.summary.dice[c], 1.0);
            EXPECT_EQ((*r.summary.dice_std)[c], 0.0);
        }
        EXPECT_EQ(r.summary.mean_dice, 1.0);
        EXPECT_EQ(r.summary.global_accuracy, 1.0);
        EXPECT_EQ(*r.summary.global_accuracy_std, 0.0);
    }
}

TEST(Protocol, SummaryIsMeanAndPopulationStdOfSets) {
    const auto sc = scenes(5, 4);
    const auto pool = build_pool(sc, 40, 24, 5);
    std::vector<int> calls(pool.size(), 0);
    for (auto mode : {Aggregation::pooled, Aggregation::per_patch}) {
        std::fill(calls.begin(), calls.end(), 0);
        const auto r = evaluate_protocol(half_right(pool, &calls), pool, small_protocol(), mode);
        for (int k : calls) EXPECT_LE(k, 1);
        const double n = static_cast<double>(r.sets.size());
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            double m = 0.0, v = 0.0;
            for (const auto& s : r.sets) m += s.dice[c];
            m /= n;
            for (const auto& s : r.sets) v += (s.dice[c] - m) * (s.dice[c] - m);
            EXPECT_NEAR(r.summary.dice[c], m, 1e-12);
            EXPECT_NEAR((*r.summary.dice_std)[c], std::sqrt(v / n), 1e-12);
        }
        EXPECT_NEAR(r.summary.mean_dice, (r.summary.dice[0] + r.summary.dice[1] + r.summary.dice[2]) / 3.0, 1e-9);
        EXPECT_LT(r.summary.global_accuracy, 1.0);
    }
}

TEST(Protocol, PooledSetMatchesManualTally) {
    const auto sc = scenes(3, 6);
    const auto pool = build_pool(sc, 10, 24, 7);
    auto cfg = small_protocol();
    cfg.n_sets = 1;
    std::vector<int> calls(pool.size(), 0);
    // set_size equals the pool, so the only set is the whole pool.
    const auto r = evaluate_protocol(half_right(pool, &calls), pool, cfg);
    metrics::ClassCounts counts;
    for (std::size_t i = 0; i < pool.size(); ++i)
        counts.add(i % 2 == 0 ? pool[i].mask : SegmentationMask(24, 24), pool[i].mask);
    const auto ref = metrics::metric_report(counts);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        EXPECT_DOUBLE_EQ(r.summary.dice[c], ref.dice[c]);
        EXPECT_EQ((*r.summary.dice_std)[c], 0.0);
    }
    EXPECT_DOUBLE_EQ(r.summary.global_accuracy, ref.global_accuracy);
    for (int k : calls) EXPECT_EQ(k, 1);
}

TEST(Protocol, DeterministicPerSeed) {
    const auto sc = scenes(4, 8);
    const auto pool = build_pool(sc, 40, 24, 9);
    std::vector<int> calls(pool.size(), 0);
    const auto a = to_json(evaluate_protocol(half_right(pool, &calls), pool, small_protocol()));
    const auto b = to_json(evaluate_protocol(half_right(pool, &calls), pool, small_protocol()));
    EXPECT_EQ(a.dump(), b.dump());
    auto other = small_protocol();
    other.seed = 99;
    EXPECT_NE(to_json(evaluate_protocol(half_right(pool, &calls), pool, other)).dump(), a.dump());
    EXPECT_EQ(a["set_size"], 10);
    EXPECT_TRUE(a["dice"].contains("anticyclonic"));
}

TEST(Protocol, RejectsBadPools) {
    const auto sc = scenes(2, 10);
    const auto pool = build_pool(sc, 9, 24, 11);
    EXPECT_THROW(evaluate_protocol(truth_predictor(), pool, small_protocol()), std::invalid_argument);
    const auto wrong = build_pool(sc, 12, 20, 11);
    EXPECT_THROW(evaluate_protocol(truth_predictor(), wrong, small_protocol()), ShapeError);
    auto cfg = small_protocol();
    cfg.n_sets = 0;
    EXPECT_THROW(evaluate_protocol(truth_predictor(), build_pool(sc, 12, 24, 1), cfg), std::invalid_argument);
}

TEST(Protocol, NetworkPredictorRuns) {
    const auto sc = scenes(2, 12);
    const auto pool = build_pool(sc, 12, 24, 13);
    const auto w = small_model(2);
    const auto r = evaluate_protocol(w, pool, small_protocol());
    EXPECT_GE(r.summary.global_accuracy, 0.0);
    EXPECT_LE(r.summary.global_accuracy, 1.0);
    auto bad = small_protocol();
    bad.patch_size = 18;
    EXPECT_THROW(evaluate_protocol(w, build_pool(sc, 12, 18, 1), bad), ShapeError);
}

TEST(Aggregation, ParseRoundTrip) {
    for (auto a : {Aggregation::pooled, Aggregation::per_patch}) EXPECT_EQ(parse_aggregation(to_string(a)), a);
    EXPECT_THROW(parse_aggregation("mean"), std::invalid_argument);
}

TEST(Ghosts, ParseFormat) {
    const auto g = parse_ghosts("# r,c,k\n3,4,1\n\n10,2,2\r\n");
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g[0].row, 3u);
    EXPECT_EQ(g[0].col, 4u);
    EXPECT_EQ(g[1].label, kCyclonic);
    EXPECT_THROW(parse_ghosts("1,2\n"), std::invalid_argument);
    EXPECT_THROW(parse_ghosts("1,2,0\n"), std::invalid_argument);
    EXPECT_THROW(parse_ghosts("-1,2,1\n"), std::invalid_argument);
    EXPECT_THROW(parse_ghosts("1,2,1,4\n"), std::invalid_argument);
}

TEST(Ghosts, AllAnticyclonicPrediction) {
    const SegmentationMask all_one(20, 20, kAnticyclonic);
    const std::vector<GhostEddyRecord> ghosts{{1, 1, kAnticyclonic}, {5, 7, kAnticyclonic}, {9, 9, kCyclonic}};
    const auto r = ghost_check(all_one, ghosts);
    EXPECT_EQ(r.anticyclonic, 1.0);
    EXPECT_EQ(r.cyclonic, 0.0);
    EXPECT_EQ(r.anticyclonic_count, 2u);
    EXPECT_EQ(r.cyclonic_count, 1u);
    EXPECT_THROW(ghost_check(all_one, std::vector<GhostEddyRecord>{{20, 0, kCyclonic}}), std::out_of_range);
}

TEST(Ghosts, NoRecordsMeansNoRates) {
    const auto r = ghost_check(SegmentationMask(4, 4), std::vector<GhostEddyRecord>{});
    EXPECT_FALSE(r.anticyclonic.has_value());
    EXPECT_FALSE(r.cyclonic.has_value());
    const auto j = to_json(r);
    EXPECT_TRUE(j["anticyclonic"].is_null());
    EXPECT_TRUE(j["cyclonic"].is_null());
    const auto half = ghost_check(SegmentationMask(4, 4, kCyclonic), std::vector<GhostEddyRecord>{{0, 0, kCyclonic}});
    EXPECT_FALSE(half.anticyclonic.has_value());
    EXPECT_EQ(half.cyclonic, 1.0);
}

TEST(PredictGrid, MirrorPaddedAndCropped) {
    const auto w = small_model(3);
    data::SynthConfig c;
    c.grid_size = 64;
    data::Rng rng(14);
    auto s = data::synth_scene(c, rng);
    // Keep a 45 x 37 corner, which is not a multiple of 8 either way.
    SshGrid g = s.grid;
    g.values = Field2D<float>(45, 37);
    for (std::size_t r = 0; r < 45; ++r)
        for (std::size_t col = 0; col < 37; ++col) g.values.at(r, col) = s.grid.values.at(r, col);
    g.values.at(10, 10) = static_cast<float>(g.fill_value);

    const auto out = predict_grid(w, g);
    ASSERT_EQ(out.rows, 45u);
    ASSERT_EQ(out.cols, 37u);

    auto reflect = [](std::size_t i, std::size_t n) { return i < n ? i : 2 * (n - 1) - i; };
    Tensor padded(1, 1, 48, 40);
    for (std::size_t r = 0; r < 48; ++r)
        for (std::size_t col = 0; col < 40; ++col) {
            const float v = g.values.at(reflect(r, 45), reflect(col, 37));
            padded(0, 0, r, col) = g.is_fill(v) ? 0.0f : v;
        }
    const auto full = data::argmax_labels(model::predict(w, padded)).front();
    for (std::size_t r = 0; r < 45; ++r)
        for (std::size_t col = 0; col < 37; ++col) EXPECT_EQ(out.at(r, col), full.at(r, col));

    g.values = Field2D<float>(1, 1, 0.2f);
    EXPECT_EQ(predict_grid(w, g).size(), 1u);
}
