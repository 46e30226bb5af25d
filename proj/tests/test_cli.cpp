#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "nfex/config.hpp"
#include "nfex/eval.hpp"
#include "nfex/features.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("nfex_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    Result nfex(const std::string& args) const {
        const fs::path o = dir_ / "stdout.txt", e = dir_ / "stderr.txt";
        const std::string cmd = "cd '" + dir_.string() + "' && '" NFEX_CLI_PATH "' " + args + " >'" + o.string() + "' 2>'" + e.string() + "'";
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(o);
        r.err = slurp(e);
        return r;
    }

    fs::path write(const std::string& name, const std::string& text) const {
        std::ofstream(dir_ / name) << text;
        return dir_ / name;
    }

    /// Two short segments: bright checkerboard, then dark blurred blobs.
    void synth_mixed(const std::string& out = "frames") const {
        write("mixed.spec",
              "kind = checkerboard\nbrightness = 0.9\ncontrast = 0.9\nwidth = 160\nheight = 120\nn_frames = 6\nseed = 1\n"
              "---\nkind = blob-field\nbrightness = 0.2\nblur_sigma = 2.0\nseed = 11\n");
        ASSERT_EQ(nfex("synth --spec mixed.spec --output " + out).code, 0);
    }

    fs::path dir_;
};

int count_rows(const std::string& csv) {
    std::istringstream in(csv);
    int n = 0;
    bool header = false;
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        ++n;
    }
    return n;
}

}  // namespace

TEST_F(Cli, Version) {
    const Result r = nfex("--version");
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, std::string("nfex ") + NFEX_VERSION + "\n");
}

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(nfex("").code, 2);
    EXPECT_EQ(nfex("frobnicate").code, 2);
    EXPECT_EQ(nfex("synth").code, 2);
    EXPECT_EQ(nfex("run --frames x --config missing.cfg").code, 2);
    EXPECT_EQ(nfex("synth --help").code, 0);
}

TEST_F(Cli, SynthWritesFramesConditionsAndGroundTruth) {
    write("s.spec", "kind = noise\nsize = 64\nn_frames = 3\nmotion = 3,4\n");
    const Result r = nfex("synth --spec s.spec --output a");
    ASSERT_EQ(r.code, 0) << r.err;
    for (int i = 0; i < 3; ++i) EXPECT_TRUE(fs::exists(dir_ / "a" / fmt::format("frame_{:04d}.pgm", i)));
    EXPECT_FALSE(fs::exists(dir_ / "a" / "frame_0003.pgm"));
    EXPECT_EQ(count_rows(slurp(dir_ / "a" / "conditions.csv")), 3);
    const nfex::Trajectory gt = nfex::load_trajectory((dir_ / "a" / "gt.txt").string());
    ASSERT_EQ(gt.poses.size(), 3u);
    EXPECT_NEAR((gt.poses[1].p - gt.poses[0].p).norm(), 5 * nfex::kMetersPerPixel, 1e-9);

    ASSERT_EQ(nfex("synth --spec s.spec --output b").code, 0);
    for (const char* f : {"frame_0000.pgm", "frame_0002.pgm", "conditions.csv", "gt.txt"})
        EXPECT_TRUE(slurp(dir_ / "a" / f) == slurp(dir_ / "b" / f)) << f;

    ASSERT_EQ(nfex("synth --spec s.spec --output c --seed 9").code, 0);
    EXPECT_FALSE(slurp(dir_ / "a" / "frame_0000.pgm") == slurp(dir_ / "c" / "frame_0000.pgm"));
}

TEST_F(Cli, SynthMissingOrBadSpec) {
    Result r = nfex("synth --spec nope.spec");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("nope.spec"), std::string::npos);
    write("bad.spec", "size = 10\n");
    r = nfex("synth --spec bad.spec");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("64"), std::string::npos);
}

TEST_F(Cli, OutputsStartWithProvenance) {
    synth_mixed();
    write("c.cfg", "seed = 7\nnf = 400\n");
    ASSERT_EQ(nfex("run --frames frames --config c.cfg --output r").code, 0);
    nfex::RunConfig rc;
    rc.seed = 7;
    rc.base.nf = 400;
    const std::string header = "# " + nfex::provenance(rc) + "\n";
    for (const char* f : {"decisions.csv", "metrics.csv", "trajectory.txt"}) {
        EXPECT_EQ(slurp(dir_ / "r" / f).rfind(header, 0), 0u) << f;
    }
    const std::string feat = slurp(dir_ / "r" / "features" / "frame_0000.feat");
    EXPECT_NE(feat.find("\n# " + nfex::provenance(rc) + " candidate="), std::string::npos);
    EXPECT_NE(slurp(dir_ / "frames" / "frame_0000.pgm").find("# nfex " NFEX_VERSION " seed=1 config="), std::string::npos);
}

TEST_F(Cli, FlagOverridesFileOverridesDefault) {
    synth_mixed();
    auto nf_of = [&](const std::string& out) {
        return nfex::load_features((dir_ / out / "frame_0000.feat").string()).params.nf;
    };
    ASSERT_EQ(nfex("extract frames/frame_0000.pgm --output d").code, 0);
    EXPECT_EQ(nf_of("d"), 500);
    write("c.cfg", "nf = 300\noutput = f\n");
    ASSERT_EQ(nfex("extract frames/frame_0000.pgm --config c.cfg").code, 0);
    EXPECT_EQ(nf_of("f"), 300);
    ASSERT_EQ(nfex("extract frames/frame_0000.pgm --config c.cfg --nf 200 --output g").code, 0);
    EXPECT_EQ(nf_of("g"), 200);

    write("bad.cfg", "colour = red\n");
    const Result r = nfex("extract frames/frame_0000.pgm --config bad.cfg");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("colour"), std::string::npos);
}

TEST_F(Cli, ExtractContract) {
    synth_mixed();
    Result r = nfex("extract frames --kind blob --output e1");
    ASSERT_EQ(r.code, 0) << r.err;
    ASSERT_EQ(nfex("extract frames --kind blob --output e2").code, 0);
    int files = 0;
    for (const auto& f : fs::directory_iterator(dir_ / "e1")) {
        ++files;
        EXPECT_TRUE(slurp(f.path()) == slurp(dir_ / "e2" / f.path().filename()));
        EXPECT_EQ(nfex::load_features(f.path().string()).extractor, nfex::ExtractorKind::BlobHistogram);
    }
    EXPECT_EQ(files, 12);
    EXPECT_EQ(nfex("extract frames --kind surf").code, 2);
    EXPECT_EQ(nfex("extract missing.pgm").code, 2);
    EXPECT_EQ(nfex("extract frames --nf 0").code, 2);
}

TEST_F(Cli, RunLogsOneRowPerFrame) {
    synth_mixed();
    const Result r = nfex("run --frames frames --output r");
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string log = slurp(dir_ / "r" / "decisions.csv");
    EXPECT_EQ(count_rows(log), 12);
    std::istringstream in(log);
    const nfex::SelectionHistogram h = nfex::read_selection_from_log(in);
    long total = 0, distinct = 0;
    for (long c : h) {
        total += c;
        distinct += c > 0;
    }
    EXPECT_EQ(total, 12);
    EXPECT_GE(distinct, 2);
    int feats = 0;
    for ([[maybe_unused]] const auto& f : fs::directory_iterator(dir_ / "r" / "features")) ++feats;
    EXPECT_EQ(feats, 12);
    EXPECT_TRUE(fs::exists(dir_ / "r" / "selection.svg"));
    EXPECT_TRUE(fs::exists(dir_ / "r" / "scores.svg"));
}

TEST_F(Cli, FastModeExtractsLess) {
    synth_mixed();
    auto extractions = [&](const std::string& out) {
        const std::string log = slurp(dir_ / out / "decisions.csv");
        const auto p = log.find("extractions=");
        return p == std::string::npos ? -1L : std::stol(log.substr(p + 12));
    };
    ASSERT_EQ(nfex("run --frames frames --output ex").code, 0);
    ASSERT_EQ(nfex("run --frames frames --mode fast --output fa").code, 0);
    EXPECT_EQ(extractions("ex"), 48);
    EXPECT_GT(extractions("fa"), 0);
    EXPECT_LT(extractions("fa"), extractions("ex"));
    EXPECT_EQ(count_rows(slurp(dir_ / "fa" / "decisions.csv")), 12);
    EXPECT_EQ(nfex("run --frames frames --mode turbo").code, 2);
}

TEST_F(Cli, RunIsByteIdentical) {
    synth_mixed();
    ASSERT_EQ(nfex("run --frames frames --output r1").code, 0);
    ASSERT_EQ(nfex("run --frames frames --output r2").code, 0);
    for (const auto& f : fs::recursive_directory_iterator(dir_ / "r1")) {
        if (!f.is_regular_file()) continue;
        const fs::path rel = fs::relative(f.path(), dir_ / "r1");
        EXPECT_TRUE(slurp(f.path()) == slurp(dir_ / "r2" / rel)) << rel;
    }
}

TEST_F(Cli, RunWithProgramAndTables) {
    synth_mixed();
    write("p.nfex", "when lighting=dark { select blob }\ndefault { select corner }\n");
    write("w.table", "#nfex-table v1 kind=weights\nbase m1 2\nm6 lighting=dark 3\n");
    write("a.table", "#nfex-table v1 kind=adjust\nnf lighting=dark 2\n");
    write("c.cfg", "program = p.nfex\nweight_table = w.table\nadjust_table = a.table\n");
    Result r = nfex("run --frames frames --config c.cfg --output r");
    ASSERT_EQ(r.code, 0) << r.err;
    // dark frames: nf' = 500 * 2
    EXPECT_NE(slurp(dir_ / "r" / "decisions.csv").find(",1000,"), std::string::npos);

    write("broken.nfex", "when lighting=dusk { select blob }\ndefault { select corner }\n");
    r = nfex("run --frames frames --program broken.nfex");
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(r.err.empty());
    write("broken.table", "#nfex-table v1 kind=adjust\nnf lighting=dark -2\n");
    EXPECT_EQ(nfex("run --frames frames --adjust-table broken.table").code, 2);
    EXPECT_EQ(nfex("run --frames nowhere").code, 2);
}

TEST_F(Cli, TrainThetaWritesModelAndLossCurve) {
    write("t.spec", "kind = checkerboard\nsize = 64\nn_frames = 2\n---\nkind = blob-field\nbrightness = 0.2\n");
    Result r = nfex("train --target theta --spec t.spec --save-dataset ds.csv --distill d.table --epochs 150 "
                    "--learning-rate 1e-3 --output m");
    ASSERT_EQ(r.code, 0) << r.err;
    ASSERT_TRUE(fs::exists(dir_ / "m" / "theta_model.txt"));
    ASSERT_TRUE(fs::exists(dir_ / "m" / "loss.svg"));
    std::istringstream loss(slurp(dir_ / "m" / "loss.csv"));
    std::vector<double> curve;
    for (std::string line; std::getline(loss, line);) {
        if (line.empty() || line[0] == '#' || line[0] == 'e') continue;
        curve.push_back(std::stod(line.substr(line.find(',') + 1)));
    }
    ASSERT_EQ(curve.size(), 150u);
    // downward trend: mean loss of each third below the previous third
    auto mean = [&](std::size_t a) {
        double s = 0;
        for (std::size_t i = a; i < a + 50; ++i) s += curve[i];
        return s / 50;
    };
    EXPECT_LT(mean(50), mean(0));
    EXPECT_LT(mean(100), mean(50));
    EXPECT_LT(curve.back(), 0.5 * curve.front());

    // the saved dataset trains the same model
    r = nfex("train --target theta --data ds.csv --epochs 150 --learning-rate 1e-3 --output m2");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(slurp(dir_ / "m" / "theta_model.txt") == slurp(dir_ / "m2" / "theta_model.txt"));

    // the model plugs into run as the fitness predictor
    ASSERT_EQ(nfex("synth --spec t.spec --output f").code, 0);
    r = nfex("run --frames f --model m/theta_model.txt --adjust-table d.table --output r");
    EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(Cli, TrainRejectsMalformedDataset) {
    write("bad.csv", "scene,foo,bar\nx,1,2\n");
    const Result r = nfex("train --target theta --data bad.csv");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("header"), std::string::npos);
    EXPECT_EQ(nfex("train --target theta").code, 2);
    EXPECT_EQ(nfex("train --target gamma --data bad.csv").code, 2);
}

TEST_F(Cli, TrainAlphaOnSeparableSet) {
    write("sep.spec",
          "kind = checkerboard\nbrightness = 0.9\nsize = 64\nn_frames = 12\n---\nkind = blob-field\nbrightness = 0.6\nseed = 5\n");
    ASSERT_EQ(nfex("synth --spec sep.spec --output f").code, 0);
    // label by texture: checkerboard frames -> corner, blob frames -> blob
    std::istringstream in(slurp(dir_ / "f" / "conditions.csv"));
    std::ofstream out(dir_ / "f" / "labeled.csv");
    for (std::string line; std::getline(in, line);) {
        if (line[0] == '#') continue;
        if (line.rfind("frame,", 0) == 0) out << line << ",label\n";
        else out << line << (line.find(",high") != std::string::npos ? ",corner-dyn\n" : ",blob-dyn\n");
    }
    out.close();
    const Result r = nfex("train --target alpha --data f/labeled.csv --epochs 50 --output m");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto p = r.out.find("accuracy ");
    ASSERT_NE(p, std::string::npos);
    EXPECT_GE(std::stod(r.out.substr(p + 9)), 0.95);
    EXPECT_EQ(slurp(dir_ / "m" / "alpha_model.txt").rfind("#nfex-model v1 kind=hybrid\n", 0), 0u);

    EXPECT_EQ(nfex("train --target alpha --data f/conditions.csv").code, 2);  // no labels
}

TEST_F(Cli, EvalReports) {
    synth_mixed();
    Result r = nfex("eval --ate frames/gt.txt frames/gt.txt");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "ATE 0.000000\n");
    EXPECT_EQ(nfex("eval --ate frames/gt.txt frames/gt.txt --align none").out, "ATE 0.000000\n");

    ASSERT_EQ(nfex("run --frames frames --output r").code, 0);
    r = nfex("eval --ate frames/gt.txt r/trajectory.txt --align none");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_LT(std::stod(r.out.substr(4)), 0.1);

    r = nfex("eval --selection r/decisions.csv --out rep");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_rows(r.out), 4);
    long total = 0;
    std::istringstream sel(r.out);
    for (std::string line; std::getline(sel, line);) {
        if (line.rfind("candidate", 0) == 0) continue;
        total += std::stol(line.substr(line.find(',') + 1));
    }
    EXPECT_EQ(total, 12);
    EXPECT_TRUE(fs::exists(dir_ / "rep" / "selection.csv"));

    r = nfex("eval --matches frames");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_rows(r.out), 4);

    r = nfex("eval --latency --latency-frames frames --iterations 3");
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* task : {"Parameter Selection", "Frame Processing", "Extractor Selection"})
        EXPECT_NE(r.out.find(task), std::string::npos) << task;

    EXPECT_EQ(nfex("eval").code, 2);
    EXPECT_EQ(nfex("eval --ate frames/gt.txt missing.txt").code, 2);
    EXPECT_EQ(nfex("eval --ate frames/gt.txt frames/gt.txt --align sim3").code, 2);
    write("one.txt", "0 0 0 0 0 0 0 1\n");
    r = nfex("eval --ate one.txt one.txt");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("found 1"), std::string::npos);
}
