#pragma once

// Trajectory error, match and selection reports, latency measurement.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "nfex/extractors.hpp"
#include "nfex/fitness.hpp"
#include "nfex/metrics.hpp"
#include "nfex/synth.hpp"

namespace nfex {

// ---------------------------------------------------------------------------
// Trajectories

struct Pose {
    double t = 0.0;
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
};

struct Trajectory {
    std::vector<Pose> poses;

    void validate() const {
        for (std::size_t i = 0; i < poses.size(); ++i) {
            if (i && !(poses[i].t > poses[i - 1].t)) {
                throw std::invalid_argument(fmt::format("trajectory timestamps must increase (pose {})", i));
            }
            if (std::abs(poses[i].q.norm() - 1.0) > 1e-6) {
                throw std::invalid_argument(fmt::format("trajectory quaternion {} is not unit length", i));
            }
        }
    }
};

/// `timestamp tx ty tz qx qy qz qw` per line; '#' starts a comment.
inline Trajectory read_trajectory(std::istream& in) {
    Trajectory tr;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::array<double, 8> v{};
        std::size_t n = 0;
        for (double x; n < v.size() && ls >> x;) v[n++] = x;
        if (n == 0 && ls.eof()) continue;
        std::string extra;
        if (n != v.size() || (ls >> extra)) throw std::runtime_error(fmt::format("trajectory line {}: expected 8 numbers", lineno));
        Pose p;
        p.t = v[0];
        p.p = {v[1], v[2], v[3]};
        p.q = Eigen::Quaterniond(v[7], v[4], v[5], v[6]);
        tr.poses.push_back(p);
    }
    try {
        tr.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(e.what());
    }
    return tr;
}

inline Trajectory load_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trajectory " + path);
    return read_trajectory(in);
}

inline void write_trajectory(std::ostream& out, const Trajectory& tr) {
    for (const Pose& p : tr.poses) {
        out << fmt::format("{:.6f} {:.9g} {:.9g} {:.9g} {:.9g} {:.9g} {:.9g} {:.9g}\n", p.t, p.p.x(), p.p.y(), p.p.z(),
                           p.q.x(), p.q.y(), p.q.z(), p.q.w());
    }
}

/// Camera path of a synthetic sequence: content moving by +shift px means
/// the camera moved by -shift, at kMetersPerPixel and kSecondsPerFrame.
inline Trajectory ground_truth(const std::vector<SynthFrame>& frames) {
    Trajectory tr;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        Pose p;
        p.t = static_cast<double>(i) * kSecondsPerFrame;
        p.p = {0.0 - frames[i].shift[0] * kMetersPerPixel, 0.0 - frames[i].shift[1] * kMetersPerPixel, 0.0};
        tr.poses.push_back(p);
    }
    return tr;
}

/// Median displacement (dx, dy) in px of the mutual matches from `prev` to
/// `curr`. Empty unless at least `min_matches` matches exist and at least
/// half of them lie within `agree_px` of the median.
inline std::optional<std::array<double, 2>> image_translation(const FeatureSet& prev, const FeatureSet& curr,
                                                              std::size_t min_matches = 5, double agree_px = 1.5) {
    if (prev.extractor != curr.extractor) return std::nullopt;
    const auto m = match(prev, curr);
    if (m.empty() || m.size() < min_matches) return std::nullopt;
    std::vector<double> dx, dy;
    for (const Match& k : m) {
        dx.push_back(curr.keypoints[k.b].x - prev.keypoints[k.a].x);
        dy.push_back(curr.keypoints[k.b].y - prev.keypoints[k.a].y);
    }
    auto med = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    const std::vector<double> rx = dx, ry = dy;
    const std::array<double, 2> t{med(dx), med(dy)};
    std::size_t agree = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) agree += std::hypot(rx[i] - t[0], ry[i] - t[1]) <= agree_px;
    if (2 * agree < rx.size()) return std::nullopt;
    return t;
}

/// Translation-only camera path from per-frame image shifts (entry 0 is
/// ignored). A frame with no estimate repeats the previous shift.
inline Trajectory odometry_trajectory(const std::vector<std::optional<std::array<double, 2>>>& shifts) {
    Trajectory tr;
    std::array<double, 2> pos{0.0, 0.0}, last{0.0, 0.0};
    for (std::size_t i = 0; i < shifts.size(); ++i) {
        if (i > 0) {
            if (shifts[i]) last = *shifts[i];
            pos[0] += last[0];
            pos[1] += last[1];
        }
        Pose p;
        p.t = static_cast<double>(i) * kSecondsPerFrame;
        p.p = {-pos[0] * kMetersPerPixel, -pos[1] * kMetersPerPixel, 0.0};
        tr.poses.push_back(p);
    }
    return tr;
}

enum class Alignment { None, Rigid };

inline constexpr double kAssociationWindow = 0.02;  // seconds

class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unique pairs (gt index, est index) with |dt| within the window, taken
/// greedily by increasing |dt|; the order key is symmetric in gt and est.
inline std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& gt, const Trajectory& est,
                                                                  double window = kAssociationWindow) {
    struct Cand {
        double dt, sum;
        std::size_t i, j;
    };
    std::vector<Cand> cands;
    std::size_t lo = 0;
    for (std::size_t i = 0; i < gt.poses.size(); ++i) {
        const double t = gt.poses[i].t;
        while (lo < est.poses.size() && est.poses[lo].t < t - window) ++lo;
        for (std::size_t j = lo; j < est.poses.size() && est.poses[j].t <= t + window; ++j) {
            cands.push_back({std::abs(est.poses[j].t - t), est.poses[j].t + t, i, j});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.dt != b.dt) return a.dt < b.dt;
        return a.sum < b.sum;
    });
    std::vector<char> used_g(gt.poses.size(), 0), used_e(est.poses.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const Cand& c : cands) {
        if (used_g[c.i] || used_e[c.j]) continue;
        used_g[c.i] = used_e[c.j] = 1;
        out.emplace_back(c.i, c.j);
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct RigidTransform {
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

/// Least-squares rotation + translation taking `src` onto `dst` (no scale).
inline RigidTransform fit_rigid(const std::vector<Eigen::Vector3d>& dst, const std::vector<Eigen::Vector3d>& src) {
    const double n = static_cast<double>(dst.size());
    Eigen::Vector3d md = Eigen::Vector3d::Zero(), ms = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        md += dst[i];
        ms += src[i];
    }
    md /= n;
    ms /= n;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < dst.size(); ++i) cov += (dst[i] - md) * (src[i] - ms).transpose();
    cov /= n;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
    RigidTransform tf;
    tf.r = svd.matrixU() * s * svd.matrixV().transpose();
    tf.t = md - tf.r * ms;
    return tf;
}

inline double rmse(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b, const RigidTransform* tf) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Eigen::Vector3d e = tf ? Eigen::Vector3d(tf->r * b[i] + tf->t) : b[i];
        s += (a[i] - e).squaredNorm();
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

/// Absolute trajectory error (RMSE of associated positions), optionally
/// after rigid alignment of `est` onto `gt`. The identity is itself a rigid
/// transform, so the aligned error is the smaller of the two candidates;
/// this keeps SVD rounding from reporting a worse fit than no alignment.
inline double ate(const Trajectory& gt, const Trajectory& est, Alignment align = Alignment::Rigid) {
    const auto pairs = associate(gt, est);
    if (pairs.size() < 2) {
        throw EvaluationError(fmt::format("ATE needs at least 2 associated poses, found {} (gt {}, est {})", pairs.size(),
                                          gt.poses.size(), est.poses.size()));
    }
    std::vector<Eigen::Vector3d> g, e;
    for (const auto& [i, j] : pairs) {
        g.push_back(gt.poses[i].p);
        e.push_back(est.poses[j].p);
    }
    const double raw = rmse(g, e, nullptr);
    if (align == Alignment::None) return raw;
    const RigidTransform tf = fit_rigid(g, e);
    return std::min(raw, rmse(g, e, &tf));
}

// ---------------------------------------------------------------------------
// Reports

struct ExtractorConfig {
    std::string name;
    ExtractorKind kind = ExtractorKind::CornerBinary;
    ParamSet params;
};

struct MatchReportRow {
    std::string name;
    double avg_features = 0.0;
    double avg_matches = 0.0;  // consecutive-frame mutual matches
};

inline std::vector<MatchReportRow> report_matches(const std::vector<GrayImage>& frames, const std::vector<ExtractorConfig>& configs) {
    if (frames.empty()) throw std::invalid_argument("match report needs at least one frame");
    std::vector<MatchReportRow> rows;
    for (const ExtractorConfig& c : configs) {
        MatchReportRow r;
        r.name = c.name;
        FeatureSet prev;
        double feats = 0.0, matches = 0.0;
        for (std::size_t f = 0; f < frames.size(); ++f) {
            FeatureSet cur = extract(frames[f], c.kind, c.params, static_cast<long>(f));
            feats += static_cast<double>(cur.size());
            if (f > 0) matches += static_cast<double>(match(prev, cur).size());
            prev = std::move(cur);
        }
        r.avg_features = feats / static_cast<double>(frames.size());
        r.avg_matches = frames.size() > 1 ? matches / static_cast<double>(frames.size() - 1) : 0.0;
        rows.push_back(r);
    }
    return rows;
}

inline void write_match_report(std::ostream& out, const std::vector<MatchReportRow>& rows) {
    out << "config,features,matches\n";
    for (const auto& r : rows) out << fmt::format("{},{:.3f},{:.3f}\n", r.name, r.avg_features, r.avg_matches);
}

using SelectionHistogram = std::array<long, kNumCandidates>;

inline SelectionHistogram report_selection(const std::vector<Decision>& decisions) {
    SelectionHistogram h{};
    for (const Decision& d : decisions) ++h[candidate_index(d.alpha_star)];
    return h;
}

inline void write_selection_report(std::ostream& out, const SelectionHistogram& h) {
    long total = 0;
    for (long c : h) total += c;
    out << "candidate,frames,fraction\n";
    for (int i = 0; i < kNumCandidates; ++i) {
        out << fmt::format("{},{},{:.4f}\n", to_string(kCandidateOrder[i]), h[i],
                           total ? static_cast<double>(h[i]) / static_cast<double>(total) : 0.0);
    }
}

/// Reads `alpha_star` from a decision log (comment lines allowed).
inline SelectionHistogram read_selection_from_log(std::istream& in) {
    SelectionHistogram h{};
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line.rfind("frame_id,alpha_star", 0) != 0) throw std::runtime_error("decision log: unexpected header");
            header = true;
            continue;
        }
        const auto a = line.find(',');
        const auto b = line.find(',', a + 1);
        if (a == std::string::npos || b == std::string::npos) throw std::runtime_error("decision log: short row");
        const auto c = parse_candidate(line.substr(a + 1, b - a - 1));
        if (!c) throw std::runtime_error("decision log: unknown candidate in row: " + line);
        ++h[candidate_index(*c)];
    }
    if (!header) throw std::runtime_error("decision log: missing header");
    return h;
}

// ---------------------------------------------------------------------------
// Latency

struct LatencyStat {
    std::string task;
    double median = 0.0;
    double mad = 0.0;  // median absolute deviation
    std::string unit;
    int iterations = 0;
};

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median and MAD of `fn` wall time over `iterations` runs after `warmup`.
inline LatencyStat time_task(const std::string& task, const std::function<void()>& fn, int iterations = 30, int warmup = 5,
                             bool micro = false) {
    for (int i = 0; i < warmup; ++i) fn();
    std::vector<double> samples;
    for (int i = 0; i < iterations; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        const double sec = std::chrono::duration<double>(t1 - t0).count();
        samples.push_back(micro ? sec * 1e6 : sec * 1e3);
    }
    LatencyStat s;
    s.task = task;
    s.unit = micro ? "us" : "ms";
    s.iterations = iterations;
    s.median = median_of(samples);
    std::vector<double> dev;
    for (double v : samples) dev.push_back(std::abs(v - s.median));
    s.mad = median_of(dev);
    return s;
}

struct LatencyReport {
    LatencyStat parameter_selection;   // tune_theta
    LatencyStat frame_processing;      // one candidate: extract + metrics
    LatencyStat extractor_selection;   // score + argmax on precomputed metrics
    LatencyStat decision_arithmetic;   // all three decision steps together
};

/// Single-threaded timings on `frames` (normally 640x480). Frame
/// processing extracts with the dynamic corner candidate and evaluates the
/// metrics against the previous frame.
inline LatencyReport measure_latency(const std::vector<GrayImage>& frames, const EnvConditions& env, const EngineConfig& cfg,
                                     int iterations = 30, int warmup = 5) {
    if (frames.size() < 2) throw std::invalid_argument("latency workload needs at least two frames");
    LatencyReport rep;
    volatile double sink = 0.0;
    const auto dsl = evaluate(cfg.program, env);
    rep.parameter_selection = time_task("Parameter Selection", [&] {
        const ParamSet p = tune_theta(cfg.base, env, cfg.table, dsl.factors);
        sink = sink + p.sf;
    }, iterations, warmup, true);

    std::vector<std::pair<Candidate, NormalizedMetricVector>> cands;
    std::vector<MetricVector> raw;
    const ParamSet dyn = tune_theta(cfg.base, env, cfg.table, dsl.factors);
    FeatureSet prev = extract(frames[0], ExtractorKind::CornerBinary, dyn, 0);
    for (const Candidate& c : kCandidateOrder) {
        const ParamSet p = c.mode == ParamMode::Dynamic ? dyn : cfg.base;
        std::vector<FeatureSet> h = {extract(frames[0], c.kind, p, 0), extract(frames[1], c.kind, p, 1)};
        raw.push_back(evaluate_all(h, frames[1], cfg.metrics));
    }
    const auto norm = normalize(raw);
    for (int i = 0; i < kNumCandidates; ++i) cands.emplace_back(kCandidateOrder[i], norm[i]);

    rep.extractor_selection = time_task("Extractor Selection", [&] {
        const Selection s = select_alpha(cands, env, cfg.weights);
        sink = sink + *s.scores[0];
    }, iterations, warmup, true);

    rep.decision_arithmetic = time_task("Decision Arithmetic", [&] {
        const DslDecision d = evaluate(cfg.program, env);
        const ParamSet p = tune_theta(cfg.base, env, cfg.table, d.factors);
        const Selection s = select_alpha(cands, env, cfg.weights);
        sink = sink + p.sf + *s.scores[0];
    }, iterations, warmup, true);

    std::size_t k = 1;
    rep.frame_processing = time_task("Frame Processing", [&] {
        const GrayImage& img = frames[k % frames.size()];
        FeatureSet cur = extract(img, ExtractorKind::CornerBinary, dyn, static_cast<long>(k));
        std::vector<FeatureSet> h = {prev, cur};
        const MetricVector mv = evaluate_all(h, img, cfg.metrics);
        sink = sink + mv.m[0];
        prev = std::move(cur);
        ++k;
    }, iterations, warmup, false);
    return rep;
}

inline void write_latency_report(std::ostream& out, const LatencyReport& r) {
    out << "task,median,mad,unit,iterations\n";
    for (const LatencyStat* s : {&r.parameter_selection, &r.frame_processing, &r.extractor_selection, &r.decision_arithmetic}) {
        out << fmt::format("{},{:.3f},{:.3f},{},{}\n", s->task, s->median, s->mad, s->unit, s->iterations);
    }
}

// ---------------------------------------------------------------------------
// SVG line plots

struct Series {
    std::string name;
    std::vector<double> y;
};

inline void write_svg_plot(std::ostream& out, const std::string& title, const std::vector<Series>& series,
                           const std::string& x_label = "index", const std::string& y_label = "value") {
    constexpr double W = 640, H = 360, L = 60, R = 20, T = 30, B = 40;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t n = 0;
    for (const Series& s : series) {
        n = std::max(n, s.y.size());
        for (double v : s.y)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    }
    if (!(hi >= lo)) lo = 0.0, hi = 1.0;
    if (hi == lo) hi = lo + 1.0;
    auto esc = [](const std::string& s) {
        std::string o;
        for (char c : s) {
            if (c == '<') o += "&lt;";
            else if (c == '>') o += "&gt;";
            else if (c == '&') o += "&amp;";
            else o += c;
        }
        return o;
    };
    static constexpr std::array<const char*, 6> colors = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    out << fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n", W, H, W, H);
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << fmt::format("<text x=\"{}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n", W / 2, esc(title));
    out << fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", L, H - B, W - R);
    out << fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", L, T, H - B);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n", (L + W - R) / 2, H - 8, esc(x_label));
    out << fmt::format("<text x=\"14\" y=\"{}\" font-size=\"11\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{}</text>\n",
                       (T + H - B) / 2, (T + H - B) / 2, esc(y_label));
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.4g}</text>\n", L - 4, T + 4, hi);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.4g}</text>\n", L - 4, H - B, lo);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const Series& s = series[k];
        out << fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"", colors[k % colors.size()]);
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            const double x = L + (W - L - R) * (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5);
            const double y = (H - B) - (H - B - T) * (s.y[i] - lo) / (hi - lo);
            out << fmt::format("{:.1f},{:.1f} ", x, y);
        }
        out << "\"/>\n";
        out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{}\">{}</text>\n", L + 8, T + 14 * (k + 1),
                           colors[k % colors.size()], esc(s.name));
    }
    out << "</svg>\n";
}

}  // namespace nfex
