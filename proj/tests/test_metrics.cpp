#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "nfex/metrics.hpp"
#include "metric_oracles.hpp"
#include "test_support.hpp"

using namespace nfex;
using namespace nfex::oracles;

// ---------------------------------------------------------------------------

TEST(Texturedness, ConstantImageIsZero) {
    const GrayImage img(32, 32, 77.0f);
    std::mt19937_64 rng(1);
    const FeatureSet fs = binary_set({random_bits(rng), random_bits(rng)}, rng, 32, 32);
    EXPECT_EQ(texturedness(img, fs), 0.0);
    EXPECT_EQ(dissimilarity(img, fs), 0.0);
}

TEST(Texturedness, HalfSplitPatchMatchesExplicitSum) {
    // 9x9 patch: the first 40 pixels in raster order are 0, the other 41 are 255.
    GrayImage img(9, 9);
    for (int i = 0; i < 81; ++i) img.data()[i] = i < 40 ? 0.0f : 255.0f;
    FeatureSet fs;
    fs.keypoints.push_back(kp(4, 4));
    fs.descriptors.push_back({BinaryDescriptor{}, 0});
    const double mean = 41.0 * 255.0 / 81.0;
    const double ss = 40.0 * mean * mean + 41.0 * (255.0 - mean) * (255.0 - mean);
    EXPECT_NEAR(texturedness(img, fs), std::sqrt(ss), 1e-9);
    EXPECT_NEAR(texturedness(img, fs), 1147.4125, 1e-3);  // frozen from the sum above
}

TEST(Texturedness, EmptySetIsZero) {
    EXPECT_EQ(texturedness(GrayImage(10, 10, 3.0f), FeatureSet{}), 0.0);
    EXPECT_EQ(dissimilarity(GrayImage(10, 10, 3.0f), FeatureSet{}), 0.0);
}

TEST(Dissimilarity, BrightSquareOnBlack) {
    GrayImage img(21, 21, 0.0f);
    for (int y = 8; y <= 12; ++y)
        for (int x = 8; x <= 12; ++x) img(x, y) = 255.0f;
    FeatureSet fs;
    fs.keypoints.push_back(kp(10, 10));
    fs.descriptors.push_back({BinaryDescriptor{}, 0});
    EXPECT_DOUBLE_EQ(dissimilarity(img, fs), 6375.0);
}

TEST(Motion, SelfIsZeroAndDisjointIsFlagged) {
    const FeatureSet fs = extract(fixtures::smooth_texture(120, 100, 3, 120), ExtractorKind::CornerBinary, ParamSet{});
    ASSERT_FALSE(fs.empty());
    EXPECT_EQ(motion(fs, fs).value, 0.0);
    EXPECT_EQ(motion(fs, fs).flags, 0u);

    FeatureSet a, b;
    a.keypoints.push_back(kp(1, 1));
    a.descriptors.push_back({BinaryDescriptor{}, 0});
    const MetricValue none = motion(a, b);
    EXPECT_EQ(none.value, 0.0);
    EXPECT_TRUE(none.flags & metric_flags::kNoMatches);
}

TEST(Motion, PlantedShiftIsRecovered) {
    // (3, 4) shift: the planted displacement has length 5.
    const GrayImage img = fixtures::smooth_texture(200, 160, 9, 300);
    const FeatureSet a = extract(img, ExtractorKind::CornerBinary, ParamSet{});
    const FeatureSet b = extract(fixtures::translate(img, 3, 4), ExtractorKind::CornerBinary, ParamSet{});
    const MetricValue m = motion(a, b);
    ASSERT_EQ(m.flags, 0u);
    EXPECT_NEAR(m.value, 5.0, 0.5);
}

TEST(Stability, IdenticalFramesAreFullyStable) {
    std::mt19937_64 rng(4);
    const FeatureSet fs = binary_set({random_bits(rng), random_bits(rng), random_bits(rng)}, rng);
    const std::vector<FeatureSet> w(5, fs);
    EXPECT_DOUBLE_EQ(stability(w).value, 1.0);
}

TEST(Stability, SixOfEightPersist) {
    std::mt19937_64 rng(5);
    std::vector<Descriptor> latest;
    for (int i = 0; i < 8; ++i) latest.push_back(random_bits(rng));
    // W = 5 needs a match in at least 2 of the 4 previous frames.
    auto frame = [&](std::initializer_list<int> keep) {
        std::vector<Descriptor> ds;
        for (int i : keep) ds.push_back(latest[i]);
        for (int i = 0; i < 3; ++i) ds.push_back(random_bits(rng));
        return binary_set(ds, rng);
    };
    std::vector<FeatureSet> w = {frame({0, 1, 2, 3, 4, 5, 6}), frame({0, 1, 2, 3, 4, 5}), frame({7}), frame({}),
                                 binary_set(latest, rng)};
    EXPECT_DOUBLE_EQ(stability(w).value, 0.75);
}

TEST(Stability, EmptyLatestIsFlaggedAndShortWindowThrows) {
    std::mt19937_64 rng(6);
    const std::vector<FeatureSet> w = {binary_set({random_bits(rng)}, rng), FeatureSet{}};
    const MetricValue v = stability(w);
    EXPECT_EQ(v.value, 0.0);
    EXPECT_TRUE(v.flags & metric_flags::kEmpty);
    EXPECT_THROW(stability(std::span<const FeatureSet>(w.data(), 1)), std::invalid_argument);
}

TEST(SpatialDensity, Cases) {
    FeatureSet strip;
    for (int i = 0; i < 20; ++i) {
        strip.keypoints.push_back(kp(i == 19 ? 4000.0f : 200.0f * i, i % 2 ? 5.0f : 0.0f));
        strip.descriptors.push_back({BinaryDescriptor{}, 0});
    }
    EXPECT_DOUBLE_EQ(spatial_density(strip).value, 1.0);
    EXPECT_EQ(spatial_density(FeatureSet{}).value, 0.0);

    FeatureSet one;
    one.keypoints.push_back(kp(3, 3));
    one.descriptors.push_back({BinaryDescriptor{}, 0});
    EXPECT_EQ(spatial_density(one).value, 1.0);
    EXPECT_TRUE(spatial_density(one).flags & metric_flags::kPointRegion);
}

TEST(SpatialDensity, ClusteredBeatsUniform) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<float> wide(0, 300), narrow(140, 160);
    FeatureSet uniform, clustered;
    for (int i = 0; i < 50; ++i) {
        uniform.keypoints.push_back(kp(wide(rng), wide(rng)));
        clustered.keypoints.push_back(kp(narrow(rng), narrow(rng)));
        uniform.descriptors.push_back({BinaryDescriptor{}, 0});
        clustered.descriptors.push_back({BinaryDescriptor{}, 0});
    }
    EXPECT_GT(spatial_density(clustered).value, spatial_density(uniform).value);
}

TEST(Distinctiveness, Cases) {
    FeatureSet same;
    BinaryDescriptor zeros{}, ones;
    ones.fill(~std::uint64_t{0});
    same.keypoints = {kp(0, 0), kp(1, 1)};
    same.descriptors = {{zeros, 0}, {zeros, 0}};
    EXPECT_DOUBLE_EQ(distinctiveness(same).value, 0.5);

    FeatureSet far = same;
    far.descriptors[1] = {ones, 0};
    const MetricValue capped = distinctiveness(far);
    EXPECT_DOUBLE_EQ(capped.value, 1e6);
    EXPECT_TRUE(capped.flags & metric_flags::kCapped);

    FeatureSet single;
    single.keypoints = {kp(0, 0)};
    single.descriptors = {{zeros, 0}};
    EXPECT_DOUBLE_EQ(distinctiveness(single).value, 1.0);
    EXPECT_TRUE(distinctiveness(single).flags & metric_flags::kSingleFeature);
}

TEST(Repeatability, Cases) {
    std::mt19937_64 rng(10);
    std::vector<Descriptor> ds;
    for (int i = 0; i < 12; ++i) ds.push_back(random_bits(rng));
    const FeatureSet curr = binary_set(ds, rng);
    EXPECT_DOUBLE_EQ(repeatability(curr, curr).value, 1.0);

    std::vector<Descriptor> prev_ds(ds.begin(), ds.begin() + 9);
    for (int i = 0; i < 4; ++i) prev_ds.push_back(random_bits(rng));
    EXPECT_DOUBLE_EQ(repeatability(binary_set(prev_ds, rng), curr).value, 0.75);

    std::vector<Descriptor> other;
    for (int i = 0; i < 12; ++i) other.push_back(random_bits(rng));
    EXPECT_EQ(repeatability(binary_set(other, rng), curr).value, 0.0);

    const MetricValue empty = repeatability(curr, FeatureSet{});
    EXPECT_EQ(empty.value, 0.0);
    EXPECT_TRUE(empty.flags & metric_flags::kEmpty);
}

TEST(Normalize, Examples) {
    std::vector<MetricVector> v(2);
    v[0].m[0] = 1;
    v[1].m[0] = 3;
    v[0].m[1] = v[1].m[1] = 7;
    auto n = normalize(v);
    EXPECT_EQ(n[0].m[0], 0.0);
    EXPECT_EQ(n[1].m[0], 1.0);
    EXPECT_EQ(n[0].m[1], 0.5);
    EXPECT_EQ(n[1].m[1], 0.5);

    std::vector<MetricVector> three(3);
    three[0].m[2] = 2;
    three[1].m[2] = 4;
    three[2].m[2] = 6;
    n = normalize(three);
    EXPECT_EQ(n[0].m[2], 0.0);
    EXPECT_EQ(n[1].m[2], 0.5);
    EXPECT_EQ(n[2].m[2], 1.0);
}

TEST(Normalize, PreservesOrderingAndRange) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<MetricVector> v(4);
        for (auto& mv : v)
            for (double& x : mv.m) x = u(rng);
        const auto n = normalize(v);
        for (int c = 0; c < kNumMetrics; ++c) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                EXPECT_GE(n[i].m[c], 0.0);
                EXPECT_LE(n[i].m[c], 1.0);
                for (std::size_t j = 0; j < v.size(); ++j) {
                    if (v[i].m[c] < v[j].m[c]) EXPECT_LT(n[i].m[c], n[j].m[c]);
                }
            }
        }
    }
}

TEST(EvaluateAll, ShortHistoryIsFlagged) {
    std::mt19937_64 rng(13);
    const GrayImage img = fixtures::smooth_texture(64, 48, 2);
    const std::vector<FeatureSet> h = {binary_set({random_bits(rng), random_bits(rng)}, rng)};
    const MetricVector mv = evaluate_all(h, img);
    EXPECT_TRUE(mv.flags & metric_flags::kShortHistory);
    EXPECT_EQ(mv.m[2], 0.0);
    EXPECT_EQ(mv.m[3], 0.0);
    EXPECT_EQ(mv.m[6], 0.0);
    EXPECT_THROW(evaluate_all(std::span<const FeatureSet>{}, img), std::invalid_argument);
}

TEST(EvaluateAll, ConstantImageZerosAppearanceMetrics) {
    const GrayImage img(64, 48, 200.0f);
    std::mt19937_64 rng(14);
    const std::vector<FeatureSet> h = random_sequence(rng, 5, 8);
    const MetricVector mv = evaluate_all(h, img);
    EXPECT_EQ(mv.m[0], 0.0);
    EXPECT_EQ(mv.m[1], 0.0);
}

TEST(Property, MetricsMatchBruteForceOracles) {
    std::mt19937_64 rng(2024);
    for (int instance = 0; instance < 10; ++instance) {
        const GrayImage img = fixtures::noise_image(64, 48, static_cast<unsigned>(instance + 100));
        const std::vector<FeatureSet> seq = random_sequence(rng, 5, 10);
        const FeatureSet& curr = seq.back();
        const FeatureSet& prev = seq[seq.size() - 2];
        EXPECT_NEAR(texturedness(img, curr), oracle_texturedness(img, curr), 1e-9);
        EXPECT_NEAR(dissimilarity(img, curr), oracle_dissimilarity(img, curr), 1e-9);
        EXPECT_NEAR(motion(prev, curr).value, oracle_motion(prev, curr), 1e-9);
        EXPECT_NEAR(stability(seq).value, oracle_stability(seq), 1e-9);
        EXPECT_NEAR(spatial_density(curr).value, oracle_density(curr), 1e-9);
        EXPECT_NEAR(distinctiveness(curr).value, oracle_distinctiveness(curr), 1e-9);
        EXPECT_NEAR(repeatability(prev, curr).value, oracle_repeatability(prev, curr), 1e-9);

        const MetricVector mv = evaluate_all(seq, img);
        EXPECT_NEAR(mv.m[3], oracle_stability(seq), 1e-9);
        EXPECT_NEAR(mv.m[6], oracle_repeatability(prev, curr), 1e-9);

        // Histogram descriptors for the similarity mapping.
        FeatureSet hs;
        hs.extractor = ExtractorKind::BlobHistogram;
        for (int i = 0; i < 6; ++i) {
            hs.keypoints.push_back(kp(static_cast<float>(i), 2.0f * i));
            hs.descriptors.push_back(random_hist(rng));
        }
        EXPECT_NEAR(distinctiveness(hs).value, oracle_distinctiveness(hs), 1e-9);
    }
}

TEST(Property, StabilityAndRepeatabilityStayInUnitInterval) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const std::vector<FeatureSet> seq = random_sequence(rng, 5, 12);
        const double m4 = stability(seq).value;
        const double m7 = repeatability(seq[3], seq[4]).value;
        EXPECT_GE(m4, 0.0);
        EXPECT_LE(m4, 1.0);
        EXPECT_GE(m7, 0.0);
        EXPECT_LE(m7, 1.0);
        const MetricVector mv = evaluate_all(seq, fixtures::noise_image(64, 48, trial));
        for (double v : mv.m) EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(mv.m[4], 0.0);
    }
}

TEST(Property, MotionIsTranslationConsistent) {
    // Matching "succeeds" when every matched pair lies near the planted
    // shift; only then is the mean displacement pinned to it.
    int succeeded = 0, runs = 0;
    for (unsigned seed : {11u, 13u, 15u}) {
        const GrayImage img = fixtures::smooth_texture(200, 160, seed, 300);
        for (ExtractorKind kind : {ExtractorKind::CornerBinary, ExtractorKind::BlobHistogram}) {
            const FeatureSet a = extract(img, kind, ParamSet{});
            for (auto [dx, dy] : {std::pair{1, 0}, std::pair{0, 2}, std::pair{2, 2}, std::pair{-3, 1}}) {
                ++runs;
                const FeatureSet b = extract(fixtures::translate(img, dx, dy), kind, ParamSet{});
                const auto mt = match(a, b);
                const double s = std::hypot(dx, dy);
                const bool clean = !mt.empty() && std::all_of(mt.begin(), mt.end(), [&](const Match& x) {
                    const Keypoint& p = a.keypoints[x.a];
                    const Keypoint& q = b.keypoints[x.b];
                    return std::hypot(q.x - p.x - dx, q.y - p.y - dy) <= 3.0 * std::pow(1.2, p.level);
                });
                if (!clean) continue;
                ++succeeded;
                EXPECT_NEAR(motion_from_matches(a, b, mt).value, s, 0.5) << to_string(kind) << " " << dx << "," << dy;
            }
        }
    }
    EXPECT_GE(succeeded, runs / 2);
}

TEST(MetricsCsv, HeaderAndRow) {
    MetricVector mv;
    mv.frame_id = 3;
    mv.extractor = "corner";
    mv.m = {1, 2, 3, 0.5, 4, 0.25, 1};
    mv.flags = metric_flags::kShortHistory | metric_flags::kCapped;
    std::ostringstream out;
    write_metrics_csv_header(out);
    write_metrics_csv_row(out, mv);
    EXPECT_EQ(out.str(), "frame_id,extractor,m1,m2,m3,m4,m5,m6,m7,flags\n3,corner,1,2,3,0.5,4,0.25,1,short-history|capped\n");
}
