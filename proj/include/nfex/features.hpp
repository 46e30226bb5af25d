#pragma once

// Keypoints, descriptors, feature sets and their text serialization.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "nfex/params.hpp"

namespace nfex {

struct Keypoint {
    float x = 0.0f;  // base-image coordinates
    float y = 0.0f;
    int level = 0;
    float score = 0.0f;
    float orientation = 0.0f;  // radians in [-pi, pi)
    bool orientation_degenerate = false;

    friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

inline constexpr int kBinaryBits = 256;
inline constexpr int kHistogramLength = 128;

using BinaryDescriptor = std::array<std::uint64_t, kBinaryBits / 64>;
using HistogramDescriptor = std::array<float, kHistogramLength>;

namespace descriptor_flags {
inline constexpr std::uint8_t kClipped = 1;     // window left the image
inline constexpr std::uint8_t kDegenerate = 2;  // zero-gradient patch
}  // namespace descriptor_flags

struct Descriptor {
    std::variant<BinaryDescriptor, HistogramDescriptor> value;
    std::uint8_t flags = 0;

    bool is_binary() const { return std::holds_alternative<BinaryDescriptor>(value); }
    const BinaryDescriptor& bits() const { return std::get<BinaryDescriptor>(value); }
    const HistogramDescriptor& hist() const { return std::get<HistogramDescriptor>(value); }

    friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

inline int hamming(const BinaryDescriptor& a, const BinaryDescriptor& b) {
    int d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::popcount(a[i] ^ b[i]);
    return d;
}

/// Eight interleaved partial sums so the loop vectorizes; the summation
/// order is fixed, so results are reproducible.
inline double euclidean(const HistogramDescriptor& a, const HistogramDescriptor& b) {
    std::array<double, 8> part{};
    for (std::size_t i = 0; i < a.size(); i += 8) {
        for (std::size_t j = 0; j < 8; ++j) {
            const double d = static_cast<double>(a[i + j]) - b[i + j];
            part[j] += d * d;
        }
    }
    double s = 0.0;
    for (double p : part) s += p;
    return std::sqrt(s);
}

/// Descriptor distance: Hamming bits for binary, Euclidean for histograms.
inline double distance(const Descriptor& a, const Descriptor& b) {
    if (a.is_binary() != b.is_binary()) {
        throw std::invalid_argument("cannot compare binary and histogram descriptors");
    }
    if (a.is_binary()) return hamming(a.bits(), b.bits());
    return euclidean(a.hist(), b.hist());
}

struct FeatureSet {
    std::vector<Keypoint> keypoints;
    std::vector<Descriptor> descriptors;  // parallel to keypoints
    ExtractorKind extractor = ExtractorKind::CornerBinary;
    ParamSet params;
    long frame_id = 0;

    std::size_t size() const noexcept { return keypoints.size(); }
    bool empty() const noexcept { return keypoints.empty(); }

    friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

// ---------------------------------------------------------------------------
// Text format:
//   #nfex-features v1 kind=<corner|blob> nf=<..> sf=<..> nl=<..> st=<..>
//   [# free-form comment lines]
//   x y level score orientation <64 hex chars | 128 floats>

inline void write_features(std::ostream& out, const FeatureSet& fs, const std::string& comment = {}) {
    out << fmt::format("#nfex-features v1 kind={} nf={} sf={} nl={} st={}\n", to_string(fs.extractor),
                       fs.params.nf, fs.params.sf, fs.params.nl, fs.params.st);
    if (!comment.empty()) out << "# " << comment << "\n";
    for (std::size_t i = 0; i < fs.size(); ++i) {
        const Keypoint& k = fs.keypoints[i];
        out << fmt::format("{:.3f} {:.3f} {} {:.6g} {:.6f}", k.x, k.y, k.level, k.score, k.orientation);
        const Descriptor& d = fs.descriptors[i];
        if (d.is_binary()) {
            out << ' ';
            for (std::uint64_t w : d.bits()) out << fmt::format("{:016x}", w);
        } else {
            for (float v : d.hist()) out << fmt::format(" {:.6g}", v);
        }
        out << '\n';
    }
}

inline void save_features(const std::string& path, const FeatureSet& fs, const std::string& comment = {}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write feature file: " + path);
    write_features(out, fs, comment);
}

inline FeatureSet read_features(std::istream& in) {
    FeatureSet fs;
    std::string line;
    if (!std::getline(in, line) || line.rfind("#nfex-features v1", 0) != 0) {
        throw std::runtime_error("missing '#nfex-features v1' header");
    }
    {
        std::istringstream hs(line.substr(17));
        std::string kv;
        while (hs >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
            if (key == "kind") {
                const auto k = parse_extractor(val);
                if (!k) throw std::runtime_error("unknown extractor kind in header: " + val);
                fs.extractor = *k;
            } else if (key == "nf") {
                fs.params.nf = std::stoi(val);
            } else if (key == "sf") {
                fs.params.sf = std::stod(val);
            } else if (key == "nl") {
                fs.params.nl = std::stoi(val);
            } else if (key == "st") {
                fs.params.st = std::stod(val);
            }
        }
    }
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        Keypoint k;
        if (!(ls >> k.x >> k.y >> k.level >> k.score >> k.orientation)) {
            throw std::runtime_error("malformed feature line: " + line);
        }
        Descriptor d;
        if (fs.extractor == ExtractorKind::CornerBinary) {
            std::string hex;
            ls >> hex;
            if (hex.size() != 64) throw std::runtime_error("binary descriptor must be 64 hex digits");
            BinaryDescriptor b{};
            for (int w = 0; w < 4; ++w) b[w] = std::stoull(hex.substr(16 * w, 16), nullptr, 16);
            d.value = b;
        } else {
            HistogramDescriptor h{};
            for (float& v : h) {
                if (!(ls >> v)) throw std::runtime_error("histogram descriptor needs 128 values");
            }
            d.value = h;
        }
        fs.keypoints.push_back(k);
        fs.descriptors.push_back(d);
    }
    return fs;
}

inline FeatureSet load_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open feature file: " + path);
    return read_features(in);
}

}  // namespace nfex
