#pragma once

// Deterministic synthetic sequences with controllable conditions. The
// camera translates over an infinite procedural texture; image content
// moves by `motion` pixels per frame. Reflectance spots stay fixed in the
// image so they do not track the scene, like specular highlights.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nfex/conditions.hpp"
#include "nfex/image.hpp"

namespace nfex {

enum class SceneKind { Checkerboard, BlobField, GradientRamp, Noise };

inline constexpr std::array<std::string_view, 4> kSceneKindNames = {"checkerboard", "blob-field", "gradient-ramp", "noise"};

inline std::string_view to_string(SceneKind k) { return kSceneKindNames[static_cast<int>(k)]; }

inline constexpr double kMetersPerPixel = 0.01;
inline constexpr double kSecondsPerFrame = 0.05;

struct SceneSpec {
    SceneKind kind = SceneKind::Checkerboard;
    double brightness = 0.8;  // [0,1], scales the whole exposure
    double contrast = 0.8;    // [0,1]
    double blur_sigma = 0.0;  // motion / defocus proxy
    int reflectance_spots = 0;
    int width = 320;
    int height = 240;
    std::array<double, 2> motion{2.0, 0.0};  // px per frame
    int n_frames = 10;
    std::uint64_t seed = 1;
    int scene = 0;  // indoor / outdoor, not derivable from the image
    int agent = 0;  // car / drone / human

    void validate() const {
        if (width < 64 || height < 64) throw std::invalid_argument("scene size must be at least 64 pixels");
        if (n_frames < 1) throw std::invalid_argument("n_frames must be >= 1");
        if (!(brightness >= 0.0 && brightness <= 1.0)) throw std::invalid_argument("brightness must be in [0,1]");
        if (!(contrast >= 0.0 && contrast <= 1.0)) throw std::invalid_argument("contrast must be in [0,1]");
        if (!(blur_sigma >= 0.0) || !std::isfinite(blur_sigma)) throw std::invalid_argument("blur_sigma must be >= 0");
        if (reflectance_spots < 0) throw std::invalid_argument("reflectance_spots must be >= 0");
        if (!std::isfinite(motion[0]) || !std::isfinite(motion[1])) throw std::invalid_argument("motion must be finite");
    }
};

/// Labels implied by a spec: brightness < 0.3 is dark, blur above 1.5 is
/// fast motion, checkerboards are high texture and everything else low.
inline EnvConditions labels_for(const SceneSpec& s) {
    EnvConditions e;
    e[Field::Scene] = s.scene;
    e[Field::Agent] = s.agent;
    e[Field::Lighting] = s.brightness < 0.3 ? 1 : 0;
    e[Field::Motion] = s.blur_sigma > 1.5 ? 0 : 1;
    e[Field::Reflective] = s.reflectance_spots > 0 ? 0 : 1;
    e[Field::Texture] = s.kind == SceneKind::Checkerboard ? 0 : 1;
    return e;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline double hash01(std::uint64_t seed, std::int64_t a, std::int64_t b, std::uint64_t salt = 0) {
    std::uint64_t h = splitmix64(seed ^ salt);
    h = splitmix64(h ^ static_cast<std::uint64_t>(a));
    h = splitmix64(h ^ static_cast<std::uint64_t>(b));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Blobs on a 48 px lattice, jittered, so the field is unbounded and
// evaluation is local.
inline double blob_field(std::uint64_t seed, double wx, double wy) {
    constexpr double cell = 48.0;
    const auto cx = static_cast<std::int64_t>(std::floor(wx / cell));
    const auto cy = static_cast<std::int64_t>(std::floor(wy / cell));
    double v = 0.5;
    for (std::int64_t j = cy - 1; j <= cy + 1; ++j) {
        for (std::int64_t i = cx - 1; i <= cx + 1; ++i) {
            for (int k = 0; k < 2; ++k) {
                const double bx = (static_cast<double>(i) + hash01(seed, i, j, 11 + k)) * cell;
                const double by = (static_cast<double>(j) + hash01(seed, i, j, 21 + k)) * cell;
                const double sg = 3.0 + 7.0 * hash01(seed, i, j, 31 + k);
                const double amp = hash01(seed, i, j, 41 + k) < 0.5 ? -0.45 : 0.45;
                const double dx = wx - bx, dy = wy - by;
                v += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sg * sg));
            }
        }
    }
    return std::clamp(v, 0.0, 1.0);
}

inline double world_value(const SceneSpec& s, double wx, double wy) {
    switch (s.kind) {
        case SceneKind::Checkerboard: {
            // 12 px cells with random gray levels: corners without repetition.
            const auto i = static_cast<std::int64_t>(std::floor(wx / 12.0));
            const auto j = static_cast<std::int64_t>(std::floor(wy / 12.0));
            const double level = std::floor(hash01(s.seed, i, j, 1) * 4.0) / 3.0;
            return ((i + j) & 1) ? level * 0.5 : 0.5 + level * 0.5;
        }
        case SceneKind::BlobField:
            return blob_field(s.seed, wx, wy);
        case SceneKind::GradientRamp:
            return 0.5 + 0.5 * std::sin(wx / 90.0) * std::cos(wy / 130.0);
        case SceneKind::Noise: {
            const auto i = static_cast<std::int64_t>(std::floor(wx));
            const auto j = static_cast<std::int64_t>(std::floor(wy));
            return hash01(s.seed, i, j, 2);
        }
    }
    return 0.0;
}

}  // namespace detail

struct SynthFrame {
    GrayImage image;
    EnvConditions env;
    std::array<double, 2> shift{};  // content displacement from the first frame, px
};

/// Renders frame `f` of a spec whose world origin is displaced by `offset`.
inline GrayImage render_frame(const SceneSpec& s, int f, std::array<double, 2> offset = {0.0, 0.0}) {
    GrayImage img(s.width, s.height, 0.0f);
    const double ox = offset[0] + s.motion[0] * f;
    const double oy = offset[1] + s.motion[1] * f;
    for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
            const double v = detail::world_value(s, x - ox, y - oy);
            img(x, y) = static_cast<float>(255.0 * s.brightness * (1.0 - s.contrast + s.contrast * v));
        }
    }
    for (int k = 0; k < s.reflectance_spots; ++k) {
        const double cx = detail::hash01(s.seed, k, 0, 51) * s.width;
        const double cy = detail::hash01(s.seed, k, 0, 52) * s.height;
        const double sg = 3.0 + 5.0 * detail::hash01(s.seed, k, 0, 53);
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                const double g = std::exp(-d2 / (2.0 * sg * sg));
                img(x, y) = static_cast<float>(std::min(255.0, img(x, y) + 255.0 * g));
            }
        }
    }
    if (s.blur_sigma > 0.0) img = gaussian_blur(img, s.blur_sigma);
    return quantize(img);
}

inline std::vector<SynthFrame> synth_sequence(const SceneSpec& s, std::array<double, 2> offset = {0.0, 0.0}) {
    s.validate();
    std::vector<SynthFrame> out;
    const EnvConditions env = labels_for(s);
    for (int f = 0; f < s.n_frames; ++f) {
        SynthFrame fr;
        fr.image = render_frame(s, f, offset);
        fr.env = env;
        fr.shift = {offset[0] + s.motion[0] * f, offset[1] + s.motion[1] * f};
        out.push_back(std::move(fr));
    }
    return out;
}

/// Segments are rendered back to back; the camera path is continuous.
inline std::vector<SynthFrame> synth_segments(const std::vector<SceneSpec>& segments) {
    std::vector<SynthFrame> out;
    std::array<double, 2> offset{0.0, 0.0};
    for (const SceneSpec& s : segments) {
        auto part = synth_sequence(s, offset);
        offset = {offset[0] + s.motion[0] * s.n_frames, offset[1] + s.motion[1] * s.n_frames};
        for (auto& f : part) out.push_back(std::move(f));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Spec files: key = value lines, '#' comments, '---' starts a new segment
// that inherits every key of the previous one.

inline std::vector<SceneSpec> parse_scene_specs(std::istream& in) {
    std::vector<SceneSpec> specs;
    SceneSpec cur;
    bool touched = false;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw std::invalid_argument("scene spec line " + std::to_string(lineno) + ": " + msg);
    };
    auto num = [&](const std::string& v) {
        std::size_t pos = 0;
        double d = 0.0;
        try {
            d = std::stod(v, &pos);
        } catch (const std::exception&) {
            fail("bad number '" + v + "'");
        }
        if (pos != v.size() || !std::isfinite(d)) fail("bad number '" + v + "'");
        return d;
    };
    auto integer = [&](const std::string& v) {
        const double d = num(v);
        if (d != std::floor(d)) fail("expected an integer, got '" + v + "'");
        return static_cast<long long>(d);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        if (line == "---") {
            if (touched) specs.push_back(cur);
            touched = false;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        touched = true;
        if (key == "kind") {
            bool ok = false;
            for (std::size_t i = 0; i < kSceneKindNames.size(); ++i)
                if (kSceneKindNames[i] == val) {
                    cur.kind = static_cast<SceneKind>(i);
                    ok = true;
                }
            if (!ok) fail("unknown kind '" + val + "'");
        } else if (key == "brightness") {
            cur.brightness = num(val);
        } else if (key == "contrast") {
            cur.contrast = num(val);
        } else if (key == "blur_sigma") {
            cur.blur_sigma = num(val);
        } else if (key == "reflectance_spots") {
            cur.reflectance_spots = static_cast<int>(integer(val));
        } else if (key == "size") {
            cur.width = cur.height = static_cast<int>(integer(val));
        } else if (key == "width") {
            cur.width = static_cast<int>(integer(val));
        } else if (key == "height") {
            cur.height = static_cast<int>(integer(val));
        } else if (key == "motion") {
            const auto comma = val.find(',');
            if (comma == std::string::npos) fail("motion must be 'dx,dy'");
            cur.motion = {num(trim(val.substr(0, comma))), num(trim(val.substr(comma + 1)))};
        } else if (key == "n_frames") {
            cur.n_frames = static_cast<int>(integer(val));
        } else if (key == "seed") {
            const long long sd = integer(val);
            if (sd < 0) fail("seed must be non-negative");
            cur.seed = static_cast<std::uint64_t>(sd);
        } else if (key == "scene" || key == "agent") {
            const Field f = key == "scene" ? Field::Scene : Field::Agent;
            const auto v = parse_value(f, val);
            if (!v) fail("unknown " + key + " '" + val + "'");
            (f == Field::Scene ? cur.scene : cur.agent) = *v;
        } else {
            fail("unknown key '" + key + "'");
        }
        try {
            if (key == "size" || key == "width" || key == "height" || key == "n_frames" || key == "brightness" ||
                key == "contrast" || key == "blur_sigma" || key == "reflectance_spots") {
                cur.validate();
            }
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
    }
    if (touched || specs.empty()) specs.push_back(cur);
    for (const SceneSpec& s : specs) s.validate();
    return specs;
}

inline std::vector<SceneSpec> parse_scene_specs(const std::string& text) {
    std::istringstream in(text);
    return parse_scene_specs(in);
}

inline std::vector<SceneSpec> load_scene_specs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scene spec " + path);
    return parse_scene_specs(in);
}

// ---------------------------------------------------------------------------
// Per-frame condition labels: `frame,image,<six fields>` with value names;
// '#' lines are comments. Image paths are relative to the CSV's folder.

struct FrameLabel {
    long frame = 0;
    std::string image;
    EnvConditions env;
};

inline void write_conditions_csv(std::ostream& out, const std::vector<FrameLabel>& rows, const std::string& comment = {}) {
    if (!comment.empty()) out << "# " << comment << '\n';
    out << "frame,image";
    for (const FieldInfo& f : kFields) out << ',' << f.name;
    out << '\n';
    for (const FrameLabel& r : rows) {
        out << r.frame << ',' << r.image;
        for (int j = 0; j < kNumFields; ++j) out << ',' << kFields[j].values[r.env.v[j]];
        out << '\n';
    }
}

/// Columns may come in any order; `frame` and `image` are required and
/// missing condition fields keep their defaults. Unknown columns are kept
/// in `extra` by name for callers that need them (for example `label`).
struct ConditionsTable {
    std::vector<FrameLabel> rows;
    std::vector<std::string> extra_names;
    std::vector<std::vector<std::string>> extra;
};

inline ConditionsTable read_conditions_csv(std::istream& in) {
    ConditionsTable t;
    std::string line;
    int lineno = 0;
    std::vector<std::string> header;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::stringstream ss(l);
        for (std::string c; std::getline(ss, c, ',');) {
            while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
            while (!c.empty() && c.front() == ' ') c.erase(c.begin());
            cells.push_back(c);
        }
        return cells;
    };
    auto fail = [&](const std::string& msg) { throw std::runtime_error("conditions line " + std::to_string(lineno) + ": " + msg); };
    int frame_col = -1, image_col = -1;
    std::vector<std::pair<int, Field>> field_cols;
    std::vector<int> extra_cols;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || line == "\r") continue;
        const auto cells = split(line);
        if (header.empty()) {
            header = cells;
            for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
                if (cells[i] == "frame") frame_col = i;
                else if (cells[i] == "image") image_col = i;
                else if (const auto f = parse_field(cells[i])) field_cols.emplace_back(i, *f);
                else {
                    extra_cols.push_back(i);
                    t.extra_names.push_back(cells[i]);
                }
            }
            if (frame_col < 0 || image_col < 0) fail("header needs 'frame' and 'image' columns");
            continue;
        }
        if (cells.size() != header.size()) fail("wrong column count");
        FrameLabel r;
        try {
            r.frame = std::stol(cells[frame_col]);
        } catch (const std::logic_error&) {
            fail("bad frame number '" + cells[frame_col] + "'");
        }
        r.image = cells[image_col];
        for (const auto& [i, f] : field_cols) {
            const auto v = parse_value(f, cells[i]);
            if (!v) fail("unknown " + std::string(info(f).name) + " value '" + cells[i] + "'");
            r.env[f] = *v;
        }
        std::vector<std::string> ex;
        for (int i : extra_cols) ex.push_back(cells[i]);
        t.rows.push_back(std::move(r));
        t.extra.push_back(std::move(ex));
    }
    if (header.empty()) throw std::runtime_error("conditions file has no header");
    return t;
}

}  // namespace nfex
