#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "nfex/eval.hpp"

using namespace nfex;

namespace {

SceneSpec small_spec(SceneKind kind, std::uint64_t seed = 1) {
    SceneSpec s;
    s.kind = kind;
    s.width = 160;
    s.height = 120;
    s.n_frames = 4;
    s.seed = seed;
    return s;
}

bool same_pixels(const GrayImage& a, const GrayImage& b) {
    if (a.width() != b.width() || a.height() != b.height()) return false;
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            if (a(x, y) != b(x, y)) return false;
    return true;
}

Trajectory line_trajectory(int n, double dt = 0.05) {
    Trajectory t;
    for (int i = 0; i < n; ++i) {
        Pose p;
        p.t = i * dt;
        p.p = {0.1 * i, 0.02 * i * i, std::sin(0.3 * i)};
        t.poses.push_back(p);
    }
    return t;
}

Trajectory transformed(const Trajectory& t, const Eigen::Matrix3d& r, const Eigen::Vector3d& shift) {
    Trajectory out = t;
    for (Pose& p : out.poses) p.p = r * p.p + shift;
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic scenes

TEST(Synth, LabelsFollowSpec) {
    SceneSpec s = small_spec(SceneKind::Checkerboard);
    s.brightness = 0.9;
    EnvConditions e = labels_for(s);
    EXPECT_EQ(e[Field::Lighting], *parse_value(Field::Lighting, "bright"));
    EXPECT_EQ(e[Field::Texture], *parse_value(Field::Texture, "high"));
    EXPECT_EQ(e[Field::Motion], *parse_value(Field::Motion, "slow"));
    EXPECT_EQ(e[Field::Reflective], *parse_value(Field::Reflective, "no"));

    s.kind = SceneKind::Noise;
    s.brightness = 0.29;
    s.blur_sigma = 1.6;
    s.reflectance_spots = 2;
    e = labels_for(s);
    EXPECT_EQ(e[Field::Lighting], *parse_value(Field::Lighting, "dark"));
    EXPECT_EQ(e[Field::Texture], *parse_value(Field::Texture, "low"));
    EXPECT_EQ(e[Field::Motion], *parse_value(Field::Motion, "fast"));
    EXPECT_EQ(e[Field::Reflective], *parse_value(Field::Reflective, "yes"));

    s.brightness = 0.3;
    s.blur_sigma = 1.5;
    e = labels_for(s);
    EXPECT_EQ(e[Field::Lighting], *parse_value(Field::Lighting, "bright"));
    EXPECT_EQ(e[Field::Motion], *parse_value(Field::Motion, "slow"));
}

TEST(Synth, RepeatedSeedIsBitIdentical) {
    for (SceneKind k : {SceneKind::Checkerboard, SceneKind::BlobField, SceneKind::GradientRamp, SceneKind::Noise}) {
        SceneSpec s = small_spec(k, 7);
        s.blur_sigma = 1.0;
        s.reflectance_spots = 3;
        const auto a = synth_sequence(s), b = synth_sequence(s);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(same_pixels(a[i].image, b[i].image)) << to_string(k);
    }
    SceneSpec s1 = small_spec(SceneKind::Noise, 1), s2 = small_spec(SceneKind::Noise, 2);
    EXPECT_FALSE(same_pixels(synth_sequence(s1)[0].image, synth_sequence(s2)[0].image));
}

TEST(Synth, PlantedShiftMatchesContent) {
    SceneSpec s = small_spec(SceneKind::Checkerboard);
    s.motion = {3.0, 4.0};
    const auto fr = synth_sequence(s);
    for (std::size_t i = 1; i < fr.size(); ++i) {
        const double dx = fr[i].shift[0] - fr[i - 1].shift[0], dy = fr[i].shift[1] - fr[i - 1].shift[1];
        EXPECT_DOUBLE_EQ(std::hypot(dx, dy), 5.0);
        // integer motion without blur: the next frame is an exact translated copy
        for (int y = 0; y + 4 < s.height; ++y)
            for (int x = 0; x + 3 < s.width; ++x) ASSERT_EQ(fr[i].image(x + 3, y + 4), fr[i - 1].image(x, y));
    }
}

TEST(Synth, ContrastAndBrightnessBoundIntensity) {
    SceneSpec s = small_spec(SceneKind::Noise);
    s.brightness = 0.5;
    s.contrast = 0.4;
    const GrayImage img = synth_sequence(s)[0].image;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            ASSERT_GE(img(x, y), std::floor(255.0 * 0.5 * 0.6) - 1);
            ASSERT_LE(img(x, y), std::ceil(255.0 * 0.5) + 1);
        }
}

TEST(Synth, SegmentsContinueCameraPath) {
    SceneSpec a = small_spec(SceneKind::Checkerboard), b = small_spec(SceneKind::BlobField);
    a.n_frames = 3;
    b.n_frames = 2;
    b.motion = {0.0, -1.0};
    const auto fr = synth_segments({a, b});
    ASSERT_EQ(fr.size(), 5u);
    EXPECT_DOUBLE_EQ(fr[3].shift[0], 6.0);
    EXPECT_DOUBLE_EQ(fr[3].shift[1], 0.0);
    EXPECT_DOUBLE_EQ(fr[4].shift[1], -1.0);
    EXPECT_EQ(fr[0].env[Field::Texture], *parse_value(Field::Texture, "high"));
    EXPECT_EQ(fr[4].env[Field::Texture], *parse_value(Field::Texture, "low"));
}

TEST(Synth, RejectsBadSpecs) {
    SceneSpec s = small_spec(SceneKind::Checkerboard);
    s.width = 63;
    EXPECT_THROW(synth_sequence(s), std::invalid_argument);
    s = small_spec(SceneKind::Checkerboard);
    s.n_frames = 0;
    EXPECT_THROW(synth_sequence(s), std::invalid_argument);
    s = small_spec(SceneKind::Checkerboard);
    s.brightness = 1.5;
    EXPECT_THROW(synth_sequence(s), std::invalid_argument);
}

TEST(SceneSpecFile, ParsesSegmentsWithInheritance) {
    const auto specs = parse_scene_specs(
        "# two segments\n"
        "kind = checkerboard\n"
        "brightness = 0.9\n"
        "size = 96\n"
        "motion = 1.5, -2\n"
        "n_frames = 3\n"
        "scene = outdoor\n"
        "---\n"
        "kind = blob-field   # darker\n"
        "brightness = 0.2\n"
        "seed = 9\n");
    ASSERT_EQ(specs.size(), 2u);
    EXPECT_EQ(specs[0].kind, SceneKind::Checkerboard);
    EXPECT_EQ(specs[0].width, 96);
    EXPECT_EQ(specs[0].height, 96);
    EXPECT_DOUBLE_EQ(specs[0].motion[0], 1.5);
    EXPECT_DOUBLE_EQ(specs[0].motion[1], -2.0);
    EXPECT_EQ(specs[1].kind, SceneKind::BlobField);
    EXPECT_DOUBLE_EQ(specs[1].brightness, 0.2);
    EXPECT_EQ(specs[1].n_frames, 3);
    EXPECT_EQ(specs[1].scene, *parse_value(Field::Scene, "outdoor"));
    EXPECT_EQ(specs[1].seed, 9u);
    EXPECT_EQ(specs[0].seed, 1u);
}

TEST(SceneSpecFile, EmptyTextGivesDefaults) {
    const auto specs = parse_scene_specs("# nothing\n\n");
    ASSERT_EQ(specs.size(), 1u);
    EXPECT_EQ(specs[0].width, 320);
}

TEST(SceneSpecFile, ErrorsNameTheLine) {
    auto message = [](const std::string& text) {
        try {
            parse_scene_specs(text);
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message("kind = checkerboard\ncolour = red\n").find("line 2"), std::string::npos);
    EXPECT_NE(message("kind = spiral\n").find("spiral"), std::string::npos);
    EXPECT_NE(message("size = 32\n").find("64"), std::string::npos);
    EXPECT_FALSE(message("motion = 3\n").empty());
    EXPECT_FALSE(message("brightness = bright\n").empty());
    EXPECT_FALSE(message("just words\n").empty());
    EXPECT_FALSE(message("seed = -4\n").empty());
    EXPECT_THROW(load_scene_specs("/nonexistent/scene.spec"), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Trajectories and ATE

TEST(Ate, IdenticalIsZeroInBothModes) {
    const Trajectory t = line_trajectory(20);
    EXPECT_EQ(ate(t, t, Alignment::None), 0.0);
    EXPECT_EQ(ate(t, t, Alignment::Rigid), 0.0);
}

TEST(Ate, ConstantOffset) {
    const Trajectory gt = line_trajectory(20);
    const Trajectory est = transformed(gt, Eigen::Matrix3d::Identity(), {1.0, 0.0, 0.0});
    EXPECT_NEAR(ate(gt, est, Alignment::None), 1.0, 1e-12);
    EXPECT_NEAR(ate(gt, est, Alignment::Rigid), 0.0, 1e-9);
}

TEST(Ate, RotationAboutOriginIsAbsorbed) {
    const Trajectory gt = line_trajectory(20);
    const Eigen::Matrix3d r = Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    const Trajectory est = transformed(gt, r, Eigen::Vector3d::Zero());
    EXPECT_GT(ate(gt, est, Alignment::None), 0.1);
    EXPECT_NEAR(ate(gt, est, Alignment::Rigid), 0.0, 1e-9);
}

TEST(Ate, RigidNeverWorseAndNoneSymmetric) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 50; ++trial) {
        const Trajectory gt = line_trajectory(3 + trial % 15);
        const Eigen::Quaterniond q = Eigen::Quaterniond(n01(rng), n01(rng), n01(rng), n01(rng)).normalized();
        Trajectory est = transformed(gt, q.toRotationMatrix(), {n01(rng), n01(rng), n01(rng)});
        for (Pose& p : est.poses) p.p += 0.05 * Eigen::Vector3d(n01(rng), n01(rng), n01(rng));
        const double none = ate(gt, est, Alignment::None);
        const double rigid = ate(gt, est, Alignment::Rigid);
        EXPECT_LE(rigid, none) << trial;
        EXPECT_DOUBLE_EQ(none, ate(est, gt, Alignment::None)) << trial;
        EXPECT_EQ(ate(est, est, Alignment::Rigid), 0.0);
    }
}

TEST(Ate, RmseOverAssociatedPairs) {
    // independent oracle: error of 0.3 on half the poses, 0 on the rest
    Trajectory gt = line_trajectory(10);
    Trajectory est = gt;
    for (std::size_t i = 0; i < est.poses.size(); i += 2) est.poses[i].p.y() += 0.3;
    EXPECT_NEAR(ate(gt, est, Alignment::None), std::sqrt(0.5 * 0.09), 1e-12);
}

TEST(Ate, AssociationWindow) {
    const Trajectory gt = line_trajectory(10);
    Trajectory est = gt;
    for (Pose& p : est.poses) p.t += 0.015;
    EXPECT_EQ(associate(gt, est).size(), 10u);
    EXPECT_EQ(ate(gt, est, Alignment::None), 0.0);
    for (Pose& p : est.poses) p.t += 0.01;  // 25 ms late, outside the window
    EXPECT_TRUE(associate(gt, est).empty());
    try {
        ate(gt, est);
        FAIL() << "expected EvaluationError";
    } catch (const EvaluationError& e) {
        EXPECT_NE(std::string(e.what()).find("found 0"), std::string::npos);
    }
    Trajectory one = line_trajectory(1);
    EXPECT_THROW(ate(one, one), EvaluationError);
}

TEST(Ate, AssociationIsOneToOne) {
    Trajectory gt, est;
    for (double t : {0.0, 0.01, 0.02}) {
        Pose p;
        p.t = t;
        gt.poses.push_back(p);
    }
    for (double t : {0.005, 0.006}) {
        Pose p;
        p.t = t;
        est.poses.push_back(p);
    }
    const auto pairs = associate(gt, est);
    ASSERT_EQ(pairs.size(), 2u);
    EXPECT_NE(pairs[0].first, pairs[1].first);
    EXPECT_NE(pairs[0].second, pairs[1].second);
}

TEST(TrajectoryFile, RoundTrip) {
    Trajectory t = line_trajectory(5);
    t.poses[2].q = Eigen::Quaterniond(Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()));
    std::stringstream ss;
    write_trajectory(ss, t);
    const Trajectory r = read_trajectory(ss);
    ASSERT_EQ(r.poses.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_NEAR(r.poses[i].t, t.poses[i].t, 1e-6);
        EXPECT_NEAR((r.poses[i].p - t.poses[i].p).norm(), 0.0, 1e-7);
        EXPECT_NEAR(r.poses[i].q.angularDistance(t.poses[i].q), 0.0, 1e-6);
    }
}

TEST(TrajectoryFile, Malformed) {
    auto parse = [](const std::string& s) {
        std::istringstream in(s);
        return read_trajectory(in);
    };
    EXPECT_EQ(parse("# header\n\n0 1 2 3 0 0 0 1  # trailing\n").poses.size(), 1u);
    EXPECT_THROW(parse("0 1 2 3 0 0 0\n"), std::runtime_error);
    EXPECT_THROW(parse("0 1 2 3 0 0 0 1 9\n"), std::runtime_error);
    EXPECT_THROW(parse("0 0 0 0 0 0 0 1\n0 0 0 0 0 0 0 1\n"), std::runtime_error);
    EXPECT_THROW(parse("0 0 0 0 0 0 0 2\n"), std::runtime_error);
    EXPECT_THROW(load_trajectory("/nonexistent/gt.txt"), std::runtime_error);
}

TEST(TrajectoryFile, GroundTruthFromSynth) {
    SceneSpec s = small_spec(SceneKind::Checkerboard);
    s.motion = {3.0, 4.0};
    const Trajectory gt = ground_truth(synth_sequence(s));
    ASSERT_EQ(gt.poses.size(), 4u);
    EXPECT_DOUBLE_EQ(gt.poses[3].t, 3 * kSecondsPerFrame);
    EXPECT_NEAR(gt.poses[3].p.x(), -0.09, 1e-12);
    EXPECT_NEAR(gt.poses[3].p.y(), -0.12, 1e-12);
    EXPECT_NEAR((gt.poses[2].p - gt.poses[1].p).norm(), 5 * kMetersPerPixel, 1e-12);
}

// ---------------------------------------------------------------------------
// Reports

TEST(MatchReport, FeatureCapHonoured) {
    SceneSpec s = small_spec(SceneKind::Checkerboard);
    s.width = 320;
    s.height = 240;
    std::vector<GrayImage> frames;
    for (const auto& f : synth_sequence(s)) frames.push_back(f.image);
    const auto rows = report_matches(frames, {{"orb-def", ExtractorKind::CornerBinary, ParamSet{}},
                                              {"sift-def", ExtractorKind::BlobHistogram, ParamSet{}}});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_LE(rows[0].avg_features, 500.0);
    EXPECT_GT(rows[0].avg_features, 0.0);
    EXPECT_LE(rows[0].avg_matches, rows[0].avg_features);
    std::ostringstream out;
    write_match_report(out, rows);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "config,features,matches");
}

TEST(MatchReport, IdenticalFramesSelfMatch) {
    const GrayImage img = synth_sequence(small_spec(SceneKind::Checkerboard))[0].image;
    const auto rows = report_matches({img, img, img}, {{"c", ExtractorKind::CornerBinary, ParamSet{}},
                                                       {"b", ExtractorKind::BlobHistogram, ParamSet{}}});
    for (const auto& r : rows) {
        EXPECT_GT(r.avg_features, 0.0) << r.name;
        EXPECT_DOUBLE_EQ(r.avg_matches, r.avg_features) << r.name;
    }
}

TEST(MatchReport, IndependentNoiseRarelyMatches) {
    std::vector<GrayImage> frames;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        SceneSpec s = small_spec(SceneKind::Noise, seed);
        s.contrast = 1.0;
        frames.push_back(synth_sequence(s)[0].image);
    }
    const auto rows = report_matches(frames, {{"c", ExtractorKind::CornerBinary, ParamSet{}}});
    ASSERT_GT(rows[0].avg_features, 50.0);
    EXPECT_LT(rows[0].avg_matches, 0.1 * rows[0].avg_features);
}

TEST(MatchReport, SingleFrameHasNoMatches) {
    const GrayImage img = synth_sequence(small_spec(SceneKind::Checkerboard))[0].image;
    const auto rows = report_matches({img}, {{"c", ExtractorKind::CornerBinary, ParamSet{}}});
    EXPECT_EQ(rows[0].avg_matches, 0.0);
    EXPECT_THROW(report_matches({}, {}), std::invalid_argument);
}

namespace {

std::vector<Decision> run_sequence(const std::vector<SynthFrame>& frames, const EngineConfig& cfg = {}) {
    EngineState st;
    std::vector<Decision> out;
    for (std::size_t i = 0; i < frames.size(); ++i) out.push_back(run_frame(frames[i].image, frames[i].env, static_cast<long>(i), cfg, st).decision);
    return out;
}

long total(const SelectionHistogram& h) {
    long s = 0;
    for (long c : h) s += c;
    return s;
}

}  // namespace

TEST(SelectionReport, DarkSequenceSelectsBlobs) {
    SceneSpec s = small_spec(SceneKind::BlobField, 1);
    s.brightness = 0.25;
    s.contrast = 1.0;
    s.blur_sigma = 1.0;
    s.n_frames = 12;
    const auto frames = synth_sequence(s);
    ASSERT_EQ(frames[0].env[Field::Lighting], *parse_value(Field::Lighting, "dark"));
    const SelectionHistogram h = report_selection(run_sequence(frames));
    EXPECT_EQ(total(h), 12);
    const long blobs = h[candidate_index({ExtractorKind::BlobHistogram, ParamMode::Dynamic})] +
                       h[candidate_index({ExtractorKind::BlobHistogram, ParamMode::Default})];
    EXPECT_GT(blobs, 0);
}

TEST(SelectionReport, CountsPartitionFrames) {
    SceneSpec a = small_spec(SceneKind::Checkerboard), b = small_spec(SceneKind::BlobField);
    a.n_frames = 3;
    b.n_frames = 3;
    b.brightness = 0.25;
    const auto decisions = run_sequence(synth_segments({a, b}));
    const SelectionHistogram h = report_selection(decisions);
    EXPECT_EQ(total(h), 6);

    const SelectionHistogram one = report_selection({decisions[0]});
    int nonzero = 0;
    for (long c : one) nonzero += c != 0;
    EXPECT_EQ(nonzero, 1);
    EXPECT_EQ(total(report_selection({})), 0);
}

TEST(SelectionReport, LogRoundTrip) {
    SceneSpec s = small_spec(SceneKind::Checkerboard);
    const auto decisions = run_sequence(synth_sequence(s));
    std::stringstream log;
    log << "# nfex test log\n";
    write_decision_csv_header(log);
    for (const Decision& d : decisions) write_decision_csv_row(log, d);
    EXPECT_EQ(read_selection_from_log(log), report_selection(decisions));

    std::ostringstream rep;
    write_selection_report(rep, report_selection(decisions));
    std::istringstream lines(rep.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) ++n;
    EXPECT_EQ(n, 1 + kNumCandidates);

    std::istringstream bad("frame,alpha\n");
    EXPECT_THROW(read_selection_from_log(bad), std::runtime_error);
    std::istringstream unknown("frame_id,alpha_star\n0,surf-dyn,1\n");
    EXPECT_THROW(read_selection_from_log(unknown), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Latency and plots

TEST(Latency, MedianAndMad) {
    EXPECT_DOUBLE_EQ(median_of({3, 1, 2}), 2.0);
    EXPECT_DOUBLE_EQ(median_of({4, 1, 2, 3}), 2.5);
    int calls = 0;
    const LatencyStat s = time_task("noop", [&] { ++calls; }, 30, 5, true);
    EXPECT_EQ(calls, 35);
    EXPECT_EQ(s.iterations, 30);
    EXPECT_EQ(s.unit, "us");
    EXPECT_GE(s.median, 0.0);
    EXPECT_GE(s.mad, 0.0);
}

TEST(Latency, ReportHasTaskRows) {
    SceneSpec s = small_spec(SceneKind::Checkerboard);
    std::vector<GrayImage> frames;
    for (const auto& f : synth_sequence(s)) frames.push_back(f.image);
    const LatencyReport rep = measure_latency(frames, labels_for(s), EngineConfig{}, 5, 1);
    std::ostringstream out;
    write_latency_report(out, rep);
    const std::string text = out.str();
    for (const char* task : {"Parameter Selection", "Frame Processing", "Extractor Selection", "Decision Arithmetic"})
        EXPECT_NE(text.find(task), std::string::npos) << task;
    EXPECT_EQ(rep.frame_processing.unit, "ms");
    EXPECT_EQ(rep.parameter_selection.unit, "us");
    EXPECT_GT(rep.frame_processing.median, 0.0);
    EXPECT_THROW(measure_latency({frames[0]}, labels_for(s), EngineConfig{}), std::invalid_argument);
}

TEST(SvgPlot, WritesOnePolylinePerSeries) {
    std::ostringstream out;
    write_svg_plot(out, "loss <train>", {{"a", {3, 2, 1}}, {"b & c", {1, NAN, 2}}}, "epoch", "mse");
    const std::string svg = out.str();
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    std::size_t n = 0;
    for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++n;
    EXPECT_EQ(n, 2u);
    EXPECT_NE(svg.find("loss &lt;train&gt;"), std::string::npos);
    EXPECT_NE(svg.find("b &amp; c"), std::string::npos);
    EXPECT_EQ(svg.find("nan"), std::string::npos);
}

TEST(Odometry, RecoversPlantedShift) {
    SceneSpec s = small_spec(SceneKind::Checkerboard);
    s.motion = {3.0, 4.0};
    s.n_frames = 5;
    const auto frames = synth_sequence(s);
    std::vector<std::optional<std::array<double, 2>>> shifts(1);
    FeatureSet prev = extract(frames[0].image, ExtractorKind::CornerBinary, ParamSet{}, 0);
    for (std::size_t i = 1; i < frames.size(); ++i) {
        FeatureSet cur = extract(frames[i].image, ExtractorKind::CornerBinary, ParamSet{}, static_cast<long>(i));
        shifts.push_back(image_translation(prev, cur));
        ASSERT_TRUE(shifts.back().has_value());
        EXPECT_NEAR((*shifts.back())[0], 3.0, 0.5);
        EXPECT_NEAR((*shifts.back())[1], 4.0, 0.5);
        prev = std::move(cur);
    }
    EXPECT_LT(ate(ground_truth(frames), odometry_trajectory(shifts), Alignment::None), 0.02);
}

TEST(Odometry, MissingShiftRepeatsLast) {
    const Trajectory t = odometry_trajectory({std::nullopt, std::array<double, 2>{1.0, 0.0}, std::nullopt});
    ASSERT_EQ(t.poses.size(), 3u);
    EXPECT_NEAR(t.poses[2].p.x(), -2 * kMetersPerPixel, 1e-15);
    EXPECT_FALSE(image_translation(FeatureSet{}, FeatureSet{}).has_value());
}
