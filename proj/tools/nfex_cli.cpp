// nfex: synthetic data, training, adaptive extraction and evaluation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "nfex/config.hpp"
#include "nfex/dataset.hpp"
#include "nfex/eval.hpp"
#include "nfex/features.hpp"
#include "nfex/fitness.hpp"
#include "nfex/neural.hpp"
#include "nfex/synth.hpp"

namespace fs = std::filesystem;
using namespace nfex;

namespace {

/// Config file plus the flags that override its keys.
struct Settings {
    std::string config_path;
    std::map<std::string, std::string> overrides;

    void add_keys(CLI::App* app, const std::vector<std::string>& keys) {
        app->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
        for (const std::string& key : keys) {
            std::string flag = "--" + key;
            std::replace(flag.begin(), flag.end(), '_', '-');
            app->add_option_function<std::string>(flag, [this, key](const std::string& v) { overrides[key] = v; },
                                                  "overrides config key '" + key + "'");
        }
    }

    bool overridden(const std::string& key) const { return overrides.count(key) > 0; }

    RunConfig resolve() const {
        RunConfig rc;
        if (!config_path.empty()) {
            rc = load_config(config_path);
            // file paths inside a config are relative to the config itself
            const fs::path dir = fs::path(config_path).parent_path();
            for (const char* key : {"program", "graph", "model", "adjust_table", "weight_table"}) {
                const std::string v = rc.get(key);
                if (!v.empty() && fs::path(v).is_relative() && !overridden(key)) rc.set(key, (dir / v).lexically_normal().string());
            }
        }
        for (const auto& [k, v] : overrides) rc.set(k, v);
        rc.validate();
        return rc;
    }
};

/// Errors while reading user inputs are usage errors.
template <class F>
auto load_input(F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw std::runtime_error("cannot create directory " + p.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

std::string frame_name(long i) { return fmt::format("frame_{:04d}", i); }

struct LabeledFrames {
    std::vector<GrayImage> images;
    std::vector<EnvConditions> env;
    ConditionsTable table;
};

/// Frames listed by a conditions file (default: <dir>/conditions.csv).
LabeledFrames load_frames(const std::string& dir, const std::string& conditions) {
    return load_input([&] {
        const fs::path cpath = conditions.empty() ? fs::path(dir) / "conditions.csv" : fs::path(conditions);
        std::ifstream in(cpath);
        if (!in) throw ConfigError("cannot open conditions file " + cpath.string());
        LabeledFrames lf;
        lf.table = read_conditions_csv(in);
        if (lf.table.rows.empty()) throw ConfigError("conditions file lists no frames: " + cpath.string());
        const fs::path base = dir.empty() ? cpath.parent_path() : fs::path(dir);
        for (const FrameLabel& r : lf.table.rows) {
            const fs::path img = fs::path(r.image).is_absolute() ? fs::path(r.image) : base / r.image;
            lf.images.push_back(read_pnm(img.string()));
            lf.env.push_back(r.env);
        }
        return lf;
    });
}

std::vector<fs::path> list_images(const std::vector<std::string>& inputs) {
    std::vector<fs::path> out;
    for (const std::string& s : inputs) {
        const fs::path p(s);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p)) {
                const std::string ext = e.path().extension().string();
                if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) found.push_back(e.path());
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else if (fs::is_regular_file(p)) {
            out.push_back(p);
        } else {
            throw ConfigError("no such image or directory: " + s);
        }
    }
    if (out.empty()) throw ConfigError("no input images");
    return out;
}

void write_svg(const fs::path& p, const std::string& title, const std::vector<Series>& series, const std::string& xl,
               const std::string& yl) {
    auto out = open_out(p);
    write_svg_plot(out, title, series, xl, yl);
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    Settings s;
    std::string spec;
};

int cmd_synth(const SynthArgs& a) {
    const RunConfig rc = a.s.resolve();
    std::vector<SceneSpec> specs = load_input([&] {
        if (!fs::is_regular_file(a.spec)) throw ConfigError("scene spec not found: " + a.spec);
        return load_scene_specs(a.spec);
    });
    if (a.s.overridden("seed")) {
        for (std::size_t i = 0; i < specs.size(); ++i) specs[i].seed = rc.seed + i;
    }
    const std::vector<SynthFrame> frames = synth_segments(specs);
    const fs::path dir(rc.output);
    ensure_dir(dir);
    const std::string prov = provenance(rc);
    std::vector<FrameLabel> labels;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const std::string name = frame_name(static_cast<long>(i)) + ".pgm";
        write_pgm((dir / name).string(), frames[i].image, prov + " " + to_string(frames[i].env));
        labels.push_back({static_cast<long>(i), name, frames[i].env});
    }
    {
        auto out = open_out(dir / "conditions.csv");
        write_conditions_csv(out, labels, prov);
    }
    {
        auto out = open_out(dir / "gt.txt");
        out << "# " << prov << "\n# timestamp tx ty tz qx qy qz qw\n";
        write_trajectory(out, ground_truth(frames));
    }
    fmt::print("wrote {} frames ({} segments) to {}\n", frames.size(), specs.size(), dir.string());
    return 0;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractArgs {
    Settings s;
    std::vector<std::string> inputs;
    std::string kind = "corner";
};

int cmd_extract(const ExtractArgs& a) {
    const RunConfig rc = a.s.resolve();
    const auto kind = parse_extractor(a.kind);
    if (!kind) throw ConfigError("unknown extractor kind '" + a.kind + "' (corner or blob)");
    const auto paths = list_images(a.inputs);
    const fs::path dir(rc.output);
    ensure_dir(dir);
    const std::string prov = provenance(rc);
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const GrayImage img = load_input([&] { return read_pnm(paths[i].string()); });
        const FeatureSet fs = extract(img, *kind, rc.base, static_cast<long>(i));
        const fs::path out = dir / (paths[i].stem().string() + ".feat");
        save_features(out.string(), fs, prov + " source=" + paths[i].filename().string());
        fmt::print("{} {} features\n", paths[i].filename().string(), fs.size());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    Settings s;
    std::string target;
    std::string data;
    std::string spec;
    std::string save_dataset;
    std::string labels;
    std::string distill;
    std::string model_out;
    int image_size = 64;
};

nn::TrainConfig train_config(const RunConfig& rc) {
    nn::TrainConfig tc;
    tc.batch_size = static_cast<std::size_t>(rc.batch);
    tc.learning_rate = rc.learning_rate;
    tc.epochs = rc.epochs;
    tc.seed = rc.seed;
    return tc;
}

void write_loss(const fs::path& dir, const std::string& prov, const std::vector<double>& curve, const std::string& title) {
    {
        auto out = open_out(dir / "loss.csv");
        out << "# " << prov << "\nepoch,loss\n";
        for (std::size_t e = 0; e < curve.size(); ++e) out << e + 1 << ',' << fmt::format("{:.9g}", curve[e]) << '\n';
    }
    write_svg(dir / "loss.svg", title, {{"training loss", curve}}, "epoch", "loss");
}

int train_theta(const TrainArgs& a, const RunConfig& rc) {
    std::vector<ThetaRow> rows;
    if (!a.data.empty() == !a.spec.empty()) throw ConfigError("theta training needs exactly one of --data or --spec");
    if (!a.data.empty()) {
        rows = load_input([&] {
            std::ifstream in(a.data);
            if (!in) throw ConfigError("cannot open dataset " + a.data);
            return read_theta_dataset(in);
        });
    } else {
        const auto specs = load_input([&] {
            if (!fs::is_regular_file(a.spec)) throw ConfigError("scene spec not found: " + a.spec);
            return load_scene_specs(a.spec);
        });
        std::vector<SceneFrames> scenes;
        for (std::size_t i = 0; i < specs.size(); ++i) {
            SceneFrames sc;
            sc.name = fmt::format("scene{}", i);
            sc.env = labels_for(specs[i]);
            for (const SynthFrame& f : synth_sequence(specs[i])) sc.frames.push_back(f.image);
            scenes.push_back(std::move(sc));
        }
        rows = generate_theta_dataset(scenes);
    }
    if (rows.empty()) throw ConfigError("dataset has no rows");
    const std::string prov = provenance(rc);
    if (!a.save_dataset.empty()) {
        auto out = open_out(a.save_dataset);
        write_theta_dataset(out, rows, prov);
    }
    const nn::Matrix x = theta_features(rows);
    const std::vector<double> y = theta_targets(rows);
    nn::ThetaModel model;
    model.scaler = nn::Scaler::fit(x);
    model.mlp = nn::Mlp(model.scaler.output_width(), {32, 16}, rc.seed);
    const nn::TrainConfig tc = train_config(rc);
    if (rows.size() < tc.batch_size) throw ConfigError(fmt::format("dataset has {} rows, fewer than the batch size {}", rows.size(), tc.batch_size));
    const nn::TrainResult res = nn::train_mlp(model.mlp, model.scaler.apply(x), y, tc);

    const fs::path dir(rc.output);
    ensure_dir(dir);
    const fs::path model_path = a.model_out.empty() ? dir / "theta_model.txt" : fs::path(a.model_out);
    nn::save_model(model_path.string(), model, prov);
    write_loss(dir, prov, res.loss_curve, "theta regression loss");
    if (!a.distill.empty()) {
        const AdjustmentTable t = nn::distill_adjustment_table(
            [&model](const ParamSet& p, const EnvConditions& e) { return model.predict(p, e); }, rc.base,
            parse_conditions("motion=slow,reflective=no"));
        auto out = open_out(a.distill);
        write_adjustment_table(out, t);
    }
    fmt::print("rows {}\nepochs {}\nfinal_loss {:.9g}\nmodel {}\n", rows.size(), res.epochs_run,
               res.loss_curve.empty() ? 0.0 : res.loss_curve.back(), model_path.string());
    return 0;
}

int train_alpha(const TrainArgs& a, const RunConfig& rc) {
    if (a.data.empty()) throw ConfigError("alpha training needs --data (a conditions CSV)");
    if (a.image_size < 4 || a.image_size % 4 != 0) throw ConfigError("--image-size must be a multiple of 4");
    const fs::path cpath(a.data);
    const LabeledFrames lf = load_frames(cpath.parent_path().string(), a.data);
    std::vector<int> labels;
    const auto col = std::find(lf.table.extra_names.begin(), lf.table.extra_names.end(), "label");
    if (!a.labels.empty()) {
        labels = load_input([&] {
            std::ifstream in(a.labels);
            if (!in) throw ConfigError("cannot open decision log " + a.labels);
            std::vector<int> out;
            std::string line;
            bool header = false;
            while (std::getline(in, line)) {
                if (line.empty() || line[0] == '#') continue;
                if (!header) {
                    if (line.rfind("frame_id,alpha_star", 0) != 0) throw ConfigError("decision log: unexpected header");
                    header = true;
                    continue;
                }
                const auto p = line.find(','), q = line.find(',', p + 1);
                const auto c = parse_candidate(line.substr(p + 1, q - p - 1));
                if (!c) throw ConfigError("decision log: unknown candidate in row: " + line);
                out.push_back(candidate_index(*c));
            }
            return out;
        });
    } else if (col != lf.table.extra_names.end()) {
        const std::size_t k = static_cast<std::size_t>(col - lf.table.extra_names.begin());
        for (const auto& ex : lf.table.extra) {
            const auto c = parse_candidate(ex[k]);
            if (!c) throw ConfigError("unknown label '" + ex[k] + "'");
            labels.push_back(candidate_index(*c));
        }
    } else {
        throw ConfigError("alpha training needs a 'label' column or --labels <decision log>");
    }
    if (labels.size() != lf.images.size()) {
        throw ConfigError(fmt::format("{} labels for {} frames", labels.size(), lf.images.size()));
    }

    nn::Matrix numeric(lf.images.size(), kConditionOneHotWidth);
    for (std::size_t i = 0; i < lf.env.size(); ++i) {
        const auto oh = one_hot(lf.env[i]);
        std::copy(oh.begin(), oh.end(), numeric.row(i));
    }
    const nn::Scaler scaler = nn::Scaler::fit(numeric);
    const nn::Matrix scaled = scaler.apply(numeric);
    std::vector<nn::ClassifierSample> data;
    for (std::size_t i = 0; i < lf.images.size(); ++i) {
        nn::ClassifierSample smp;
        smp.image = nn::prepare_image(lf.images[i], a.image_size);
        smp.numeric.assign(scaled.row(i), scaled.row(i) + scaled.cols);
        smp.label = labels[i];
        data.push_back(std::move(smp));
    }
    const nn::TrainConfig tc = train_config(rc);
    if (data.size() < tc.batch_size) throw ConfigError(fmt::format("dataset has {} rows, fewer than the batch size {}", data.size(), tc.batch_size));
    nn::HybridClassifier clf(static_cast<std::size_t>(a.image_size), scaler.output_width(), kNumCandidates, {12, 8}, rc.seed);
    const nn::ClassifierResult res = nn::train_classifier(clf, data, tc);

    const fs::path dir(rc.output);
    ensure_dir(dir);
    const std::string prov = provenance(rc);
    const fs::path model_path = a.model_out.empty() ? dir / "alpha_model.txt" : fs::path(a.model_out);
    {
        auto out = open_out(model_path);
        nn::write_model(out, clf, scaler, prov);
    }
    write_loss(dir, prov, res.train.loss_curve, "extractor classifier loss");
    fmt::print("rows {}\nepochs {}\nfinal_loss {:.9g}\naccuracy {:.4f}\nmodel {}\n", data.size(), res.train.epochs_run,
               res.train.loss_curve.empty() ? 0.0 : res.train.loss_curve.back(), res.accuracy, model_path.string());
    return 0;
}

int cmd_train(const TrainArgs& a) {
    const RunConfig rc = a.s.resolve();
    if (a.target == "theta") return train_theta(a, rc);
    return train_alpha(a, rc);
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
    Settings s;
    std::string frames;
    std::string conditions;
};

int cmd_run(const RunArgs& a) {
    const RunConfig rc = a.s.resolve();
    const EngineConfig cfg = build_engine(rc);
    const LabeledFrames lf = load_frames(a.frames, a.conditions);
    const fs::path dir(rc.output);
    ensure_dir(dir / "features");
    const std::string prov = provenance(rc);

    auto log = open_out(dir / "decisions.csv");
    auto metrics = open_out(dir / "metrics.csv");
    log << "# " << prov << '\n';
    write_decision_csv_header(log);
    metrics << "# " << prov << '\n' << "frame_id,candidate,m1,m2,m3,m4,m5,m6,m7,flags,score,fitness\n";

    EngineState state;
    std::vector<Decision> decisions;
    std::vector<std::optional<std::array<double, 2>>> shifts;
    std::vector<Series> score_series(kNumCandidates);
    Series winner{"selected candidate index", {}};
    for (int i = 0; i < kNumCandidates; ++i) score_series[i].name = to_string(kCandidateOrder[i]);

    for (std::size_t f = 0; f < lf.images.size(); ++f) {
        const long id = lf.table.rows[f].frame;
        const FrameResult r = run_frame(lf.images[f], lf.env[f], id, cfg, state);
        const Decision& d = r.decision;
        write_decision_csv_row(log, d);
        for (int i = 0; i < kNumCandidates; ++i) {
            score_series[i].y.push_back(d.scores[i].value_or(std::numeric_limits<double>::quiet_NaN()));
            if (!d.metrics[i]) continue;
            const MetricVector& mv = *d.metrics[i];
            metrics << id << ',' << to_string(kCandidateOrder[i]);
            for (double v : mv.m) metrics << fmt::format(",{:.9g}", v);
            metrics << ',' << metric_flags::to_string(mv.flags) << fmt::format(",{:.9g},{:.9g}\n", *d.scores[i], d.fitness[i].value_or(0.0));
        }
        const int win = candidate_index(d.alpha_star);
        winner.y.push_back(win);
        save_features((dir / "features" / (frame_name(id) + ".feat")).string(), r.features,
                      prov + " candidate=" + to_string(d.alpha_star));

        // translation estimate from the winner's previous frame, when it has one
        std::optional<std::array<double, 2>> shift;
        const auto& h = state.history[win];
        if (f > 0 && h.size() >= 2 && h[h.size() - 2].frame_id == lf.table.rows[f - 1].frame) {
            shift = image_translation(h[h.size() - 2], h.back());
        }
        shifts.push_back(shift);
        decisions.push_back(d);
    }
    log << fmt::format("# frames={} extractions={}\n", decisions.size(), state.extractions);

    {
        auto out = open_out(dir / "trajectory.txt");
        out << "# " << prov << "\n# timestamp tx ty tz qx qy qz qw (translation-only odometry)\n";
        write_trajectory(out, odometry_trajectory(shifts));
    }
    write_svg(dir / "scores.svg", "candidate scores per frame", score_series, "frame", "score");
    write_svg(dir / "selection.svg", "selected candidate per frame", {winner}, "frame", "candidate index");

    const SelectionHistogram hist = report_selection(decisions);
    fmt::print("frames {}\nextractions {}\n", decisions.size(), state.extractions);
    write_selection_report(std::cout, hist);
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    Settings s;
    std::vector<std::string> ate;
    std::string align = "rigid";
    std::string matches;
    std::string selection;
    bool latency = false;
    std::string latency_frames;
    int iterations = 30;
    std::string out;
};

/// Prints `text` and, when an output folder is given, saves it with a header.
void emit(const EvalArgs& a, const RunConfig& rc, const std::string& file, const std::string& text) {
    std::cout << text;
    if (a.out.empty()) return;
    ensure_dir(a.out);
    auto out = open_out(fs::path(a.out) / file);
    out << "# " << provenance(rc) << '\n' << text;
}

int cmd_eval(const EvalArgs& a) {
    const RunConfig rc = a.s.resolve();
    if (a.ate.empty() && a.matches.empty() && a.selection.empty() && !a.latency) {
        throw ConfigError("eval needs one of --ate, --matches, --selection, --latency");
    }
    if (!a.ate.empty()) {
        if (a.align != "rigid" && a.align != "none") throw ConfigError("--align must be rigid or none");
        const Trajectory gt = load_input([&] { return load_trajectory(a.ate[0]); });
        const Trajectory est = load_input([&] { return load_trajectory(a.ate[1]); });
        const double e = ate(gt, est, a.align == "rigid" ? Alignment::Rigid : Alignment::None);
        emit(a, rc, "ate.txt", fmt::format("ATE {:.6f}\n", e));
    }
    if (!a.matches.empty()) {
        const LabeledFrames lf = load_frames(a.matches, "");
        const EngineConfig cfg = build_engine(rc);
        const EnvConditions env = lf.env.front();
        const ParamSet dyn = tune_theta(cfg.base, env, cfg.table, evaluate(cfg.program, env).factors);
        std::vector<ExtractorConfig> configs;
        for (const Candidate& c : kCandidateOrder) {
            configs.push_back({to_string(c), c.kind, c.mode == ParamMode::Dynamic ? dyn : cfg.base});
        }
        std::ostringstream ss;
        write_match_report(ss, report_matches(lf.images, configs));
        emit(a, rc, "matches.csv", ss.str());
    }
    if (!a.selection.empty()) {
        const SelectionHistogram h = load_input([&] {
            std::ifstream in(a.selection);
            if (!in) throw ConfigError("cannot open decision log " + a.selection);
            return read_selection_from_log(in);
        });
        std::ostringstream ss;
        write_selection_report(ss, h);
        emit(a, rc, "selection.csv", ss.str());
    }
    if (a.latency) {
        if (a.iterations < 1) throw ConfigError("--iterations must be >= 1");
        std::vector<GrayImage> frames;
        EnvConditions env;
        if (!a.latency_frames.empty()) {
            const LabeledFrames lf = load_frames(a.latency_frames, "");
            frames = lf.images;
            env = lf.env.front();
        } else {
            SceneSpec s;
            s.width = 640;
            s.height = 480;
            s.n_frames = 4;
            s.seed = rc.seed;
            for (const SynthFrame& f : synth_sequence(s)) frames.push_back(f.image);
            env = labels_for(s);
        }
        if (frames.size() < 2) throw ConfigError("latency needs at least two frames");
        const LatencyReport rep = measure_latency(frames, env, build_engine(rc), a.iterations);
        std::ostringstream ss;
        write_latency_report(ss, rep);
        emit(a, rc, "latency.csv", ss.str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nfex: condition-aware feature extraction for SLAM front-ends"};
    app.set_version_flag("--version", std::string("nfex ") + std::string(kVersion));
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "render synthetic frames, condition labels and ground truth");
    s->add_option("--spec", synth.spec, "scene spec file")->required();
    synth.s.add_keys(s, {"seed", "output"});

    ExtractArgs ex;
    auto* e = app.add_subcommand("extract", "extract features from images");
    e->add_option("inputs", ex.inputs, "images or folders of .pgm/.ppm")->required();
    e->add_option("--kind", ex.kind, "corner or blob");
    ex.s.add_keys(e, {"nf", "sf", "nl", "st", "seed", "output"});

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train the parameter-quality model or the extractor classifier");
    t->add_option("--target", tr.target, "theta or alpha")->required()->check(CLI::IsMember({"theta", "alpha"}));
    t->add_option("--data", tr.data, "theta: dataset CSV; alpha: conditions CSV of the frames");
    t->add_option("--spec", tr.spec, "theta: scene spec to generate the dataset from");
    t->add_option("--save-dataset", tr.save_dataset, "theta: write the generated dataset here");
    t->add_option("--labels", tr.labels, "alpha: decision log whose selections are the labels");
    t->add_option("--distill", tr.distill, "theta: write the distilled adjustment table here");
    t->add_option("--model-out", tr.model_out, "model file (default <output>/<target>_model.txt)");
    t->add_option("--image-size", tr.image_size, "alpha: classifier input size");
    tr.s.add_keys(t, {"nf", "sf", "nl", "st", "epochs", "batch", "learning_rate", "seed", "output"});

    RunArgs run;
    auto* r = app.add_subcommand("run", "select an extractor per frame and log the decisions");
    r->add_option("--frames", run.frames, "folder with the frames and conditions.csv")->required();
    r->add_option("--conditions", run.conditions, "conditions CSV (default <frames>/conditions.csv)");
    run.s.add_keys(r, {"program", "graph", "model", "adjust_table", "weight_table", "nf", "sf", "nl", "st", "mode",
                       "stability_window", "seed", "output"});

    EvalArgs ev;
    auto* v = app.add_subcommand("eval", "trajectory error, match, selection and latency reports");
    v->add_option("--ate", ev.ate, "ground truth and estimated trajectory files")->expected(2);
    v->add_option("--align", ev.align, "rigid or none");
    v->add_option("--matches", ev.matches, "folder of frames with conditions.csv");
    v->add_option("--selection", ev.selection, "decision log");
    v->add_flag("--latency", ev.latency, "time the decision steps");
    v->add_option("--latency-frames", ev.latency_frames, "frames for --latency (default synthetic 640x480)");
    v->add_option("--iterations", ev.iterations, "timed iterations for --latency");
    v->add_option("--out", ev.out, "also write the reports to this folder");
    ev.s.add_keys(v, {"program", "graph", "adjust_table", "weight_table", "nf", "sf", "nl", "st", "seed"});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? 0 : 2;
    }

    try {
        if (s->parsed()) return cmd_synth(synth);
        if (e->parsed()) return cmd_extract(ex);
        if (t->parsed()) return cmd_train(tr);
        if (r->parsed()) return cmd_run(run);
        if (v->parsed()) return cmd_eval(ev);
    } catch (const std::invalid_argument& err) {
        std::cerr << "nfex: error: " << err.what() << '\n';
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "nfex: failed: " << err.what() << '\n';
        return 1;
    }
    return 2;
}
