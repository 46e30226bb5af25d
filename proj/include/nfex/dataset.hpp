#pragma once

// Parameter-quality datasets: every (scene, theta) pair on a grid is
// extracted and scored, and the quality target is the mean of the metrics
// min-max normalized across the grid of that scene.

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "nfex/conditions.hpp"
#include "nfex/extractors.hpp"
#include "nfex/metrics.hpp"
#include "nfex/neural.hpp"

namespace nfex {

/// A short frame sequence under fixed conditions.
struct SceneFrames {
    std::string name;
    EnvConditions env;
    std::vector<GrayImage> frames;
};

struct ThetaGrid {
    std::vector<int> nf = {100, 250, 500, 1000};
    std::vector<double> sf = {1.1, 1.2, 1.5, 2.0};
    std::vector<int> nl = {2, 4, 8};
    std::vector<double> st = {5, 10, 20, 40};

    std::vector<ParamSet> expand() const {
        std::vector<ParamSet> out;
        for (int a : nf)
            for (double b : sf)
                for (int c : nl)
                    for (double d : st) {
                        ParamSet p{a, b, c, d};
                        validate(p);
                        out.push_back(p);
                    }
        return out;
    }
};

struct ThetaRow {
    std::string scene;
    EnvConditions env;
    ParamSet theta;
    double quality = 0.0;
    std::uint32_t flags = 0;  // metric flags of the scored frame
};

inline std::vector<ThetaRow> generate_theta_dataset(const std::vector<SceneFrames>& scenes, const ThetaGrid& grid = {},
                                                    ExtractorKind kind = ExtractorKind::CornerBinary,
                                                    const MetricConfig& mcfg = {}) {
    const std::vector<ParamSet> thetas = grid.expand();
    std::vector<ThetaRow> rows;
    for (const SceneFrames& sc : scenes) {
        if (sc.frames.empty()) throw std::invalid_argument("scene " + sc.name + " has no frames");
        std::vector<MetricVector> mv;
        for (const ParamSet& t : thetas) {
            std::vector<FeatureSet> hist;
            for (std::size_t f = 0; f < sc.frames.size(); ++f) hist.push_back(extract(sc.frames[f], kind, t, static_cast<long>(f)));
            mv.push_back(evaluate_all(hist, sc.frames.back(), mcfg));
        }
        const std::vector<NormalizedMetricVector> norm = normalize(mv);
        for (std::size_t i = 0; i < thetas.size(); ++i) {
            ThetaRow r;
            r.scene = sc.name;
            r.env = sc.env;
            r.theta = thetas[i];
            double s = 0.0;
            for (double v : norm[i].m) s += v;
            r.quality = s / kNumMetrics;
            r.flags = mv[i].flags;
            rows.push_back(r);
        }
    }
    return rows;
}

inline nn::Matrix theta_features(const std::vector<ThetaRow>& rows) {
    nn::Matrix x(rows.size(), nn::kThetaFeatureWidth);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto f = nn::encode_theta(rows[i].env, rows[i].theta);
        std::copy(f.begin(), f.end(), x.row(i));
    }
    return x;
}

inline std::vector<double> theta_targets(const std::vector<ThetaRow>& rows) {
    std::vector<double> y;
    for (const ThetaRow& r : rows) y.push_back(r.quality);
    return y;
}

inline void write_theta_dataset(std::ostream& out, const std::vector<ThetaRow>& rows, const std::string& comment = {}) {
    if (!comment.empty()) out << "# " << comment << '\n';
    out << "scene";
    for (const std::string& n : nn::theta_feature_names()) out << ',' << n;
    out << ",quality,flags\n";
    for (const ThetaRow& r : rows) {
        out << r.scene;
        for (double v : nn::encode_theta(r.env, r.theta)) out << ',' << fmt::format("{:.9g}", v);
        out << ',' << fmt::format("{:.17g}", r.quality) << ',' << r.flags << '\n';
    }
}

/// Reads the CSV written by write_theta_dataset; leading '#' lines are skipped.
inline std::vector<ThetaRow> read_theta_dataset(std::istream& in) {
    std::string line;
    int lineno = 0;
    do {
        if (!std::getline(in, line)) throw std::runtime_error("dataset: empty file");
        ++lineno;
    } while (!line.empty() && line[0] == '#');
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string expected = "scene";
    for (const std::string& n : nn::theta_feature_names()) expected += "," + n;
    expected += ",quality,flags";
    if (line != expected) throw std::runtime_error("dataset: unexpected header");
    std::vector<ThetaRow> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        if (cells.size() != nn::kThetaFeatureWidth + 3) throw std::runtime_error(fmt::format("dataset line {}: wrong column count", lineno));
        ThetaRow r;
        r.scene = cells[0];
        try {
            int off = 1;
            for (int j = 0; j < kNumFields; ++j) {
                int hot = -1;
                for (int v = 0; v < kFields[j].n_values; ++v)
                    if (std::stod(cells[off + v]) == 1.0) hot = v;
                if (hot < 0) throw std::runtime_error("no value set for " + std::string(kFields[j].name));
                r.env.v[j] = hot;
                off += kFields[j].n_values;
            }
            r.theta.nf = std::stoi(cells[off]);
            r.theta.sf = std::stod(cells[off + 1]);
            r.theta.nl = std::stoi(cells[off + 2]);
            r.theta.st = std::stod(cells[off + 3]);
            r.quality = std::stod(cells[off + 4]);
            r.flags = static_cast<std::uint32_t>(std::stoul(cells[off + 5]));
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(fmt::format("dataset line {}: {}", lineno, e.what()));
        } catch (const std::logic_error& e) {
            throw std::runtime_error(fmt::format("dataset line {}: bad number ({})", lineno, e.what()));
        }
        if (!is_valid(r.theta) || !std::isfinite(r.quality)) throw std::runtime_error(fmt::format("dataset line {}: invalid row", lineno));
        rows.push_back(r);
    }
    return rows;
}

}  // namespace nfex
