#pragma once

// The seven feature-quality metrics m1..m7 and per-frame normalization.
//
//   m1 texturedness     mean over keypoints of sqrt(sum (I - mean)^2), 9x9 patch
//   m2 dissimilarity    mean over keypoints of sum |I_inner - mean(ring)|,
//                       5x5 inner patch against the rest of the 11x11 patch
//   m3 motion           mean displacement of matched features between frames
//   m4 stability        share of latest features re-found in enough window frames
//   m5 spatial density  features per kilopixel of their bounding box
//   m6 distinctiveness  1 / sum of pairwise descriptor similarities
//   m7 repeatability    matched features / features in the current frame
//
// Degenerate inputs never throw; they yield the documented fallback value and
// set a flag so selection can keep going on bad frames.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "nfex/extractors.hpp"
#include "nfex/features.hpp"
#include "nfex/image.hpp"

namespace nfex {

inline constexpr int kNumMetrics = 7;

namespace metric_flags {
inline constexpr std::uint32_t kEmpty = 1u << 0;          // no features in the current set
inline constexpr std::uint32_t kNoMatches = 1u << 1;      // motion had nothing to average
inline constexpr std::uint32_t kShortHistory = 1u << 2;   // m3/m4/m7 lacked previous frames
inline constexpr std::uint32_t kPointRegion = 1u << 3;    // m5 bounding box had zero area
inline constexpr std::uint32_t kSingleFeature = 1u << 4;  // m6 had no pairs
inline constexpr std::uint32_t kCapped = 1u << 5;         // m6 hit the cap

inline std::string to_string(std::uint32_t flags) {
    static constexpr std::array<const char*, 6> names = {"empty",        "no-matches",     "short-history",
                                                         "point-region", "single-feature", "capped"};
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (flags & (1u << i)) {
            if (!s.empty()) s += '|';
            s += names[i];
        }
    }
    return s.empty() ? "-" : s;
}
}  // namespace metric_flags

struct MetricConfig {
    int texture_radius = 4;      // 9x9 patch
    int inner_radius = 2;        // 5x5 feature patch
    int ring_radius = 5;         // 11x11 surrounding patch
    int stability_window = 5;    // W, frames including the latest
    double distinctiveness_cap = 1e6;
};

struct MetricValue {
    double value = 0.0;
    std::uint32_t flags = 0;
};

struct MetricVector {
    std::array<double, kNumMetrics> m{};
    std::uint32_t flags = 0;
    long frame_id = 0;
    std::string extractor;
};

struct NormalizedMetricVector {
    std::array<double, kNumMetrics> m{};
};

namespace detail {

inline int round_coord(float v, int limit) {
    return std::clamp(static_cast<int>(std::lround(v)), 0, limit - 1);
}

}  // namespace detail

inline double texturedness(const GrayImage& img, const FeatureSet& fs, const MetricConfig& cfg = {}) {
    if (fs.empty()) return 0.0;
    double total = 0.0;
    for (const Keypoint& k : fs.keypoints) {
        const PatchStats s = patch_stats(img, detail::round_coord(k.x, img.width()),
                                         detail::round_coord(k.y, img.height()), cfg.texture_radius);
        total += std::sqrt(s.sum_sq_dev);
    }
    return total / static_cast<double>(fs.size());
}

/// Per-keypoint dissimilarity at pixel (cx, cy).
inline double dissimilarity_at(const GrayImage& img, int cx, int cy, const MetricConfig& cfg = {}) {
    const int ri = cfg.inner_radius, ro = cfg.ring_radius;
    double ring_sum = 0.0;
    int ring_n = 0;
    for (int y = std::max(0, cy - ro); y <= std::min(img.height() - 1, cy + ro); ++y) {
        for (int x = std::max(0, cx - ro); x <= std::min(img.width() - 1, cx + ro); ++x) {
            if (std::abs(x - cx) <= ri && std::abs(y - cy) <= ri) continue;
            ring_sum += img(x, y);
            ++ring_n;
        }
    }
    if (ring_n == 0) return 0.0;
    const double ring_mean = ring_sum / ring_n;
    double acc = 0.0;
    for (int y = std::max(0, cy - ri); y <= std::min(img.height() - 1, cy + ri); ++y) {
        for (int x = std::max(0, cx - ri); x <= std::min(img.width() - 1, cx + ri); ++x) {
            acc += std::fabs(img(x, y) - ring_mean);
        }
    }
    return acc;
}

inline double dissimilarity(const GrayImage& img, const FeatureSet& fs, const MetricConfig& cfg = {}) {
    if (fs.empty()) return 0.0;
    double total = 0.0;
    for (const Keypoint& k : fs.keypoints) {
        total += dissimilarity_at(img, detail::round_coord(k.x, img.width()),
                                  detail::round_coord(k.y, img.height()), cfg);
    }
    return total / static_cast<double>(fs.size());
}

inline MetricValue motion_from_matches(const FeatureSet& prev, const FeatureSet& curr,
                                       const std::vector<Match>& matches) {
    if (matches.empty()) return {0.0, metric_flags::kNoMatches};
    double total = 0.0;
    for (const Match& mt : matches) {
        const Keypoint& a = prev.keypoints[mt.a];
        const Keypoint& b = curr.keypoints[mt.b];
        total += std::hypot(static_cast<double>(b.x) - a.x, static_cast<double>(b.y) - a.y);
    }
    return {total / static_cast<double>(matches.size()), 0};
}

inline MetricValue motion(const FeatureSet& prev, const FeatureSet& curr) {
    return motion_from_matches(prev, curr, match(prev, curr));
}

/// `window` is ordered oldest first; the last entry is the latest frame.
inline MetricValue stability(std::span<const FeatureSet> window) {
    if (window.size() < 2) throw std::invalid_argument("stability needs a window of at least two frames");
    const FeatureSet& latest = window.back();
    if (latest.empty()) return {0.0, metric_flags::kEmpty};
    const std::size_t previous = window.size() - 1;
    const std::size_t required = (previous + 1) / 2;  // ceil((W-1)/2)
    std::vector<std::size_t> hits(latest.size(), 0);
    for (std::size_t f = 0; f < previous; ++f) {
        for (const Match& mt : match(latest, window[f])) ++hits[mt.a];
    }
    const auto stable = std::count_if(hits.begin(), hits.end(), [&](std::size_t h) { return h >= required; });
    return {static_cast<double>(stable) / static_cast<double>(latest.size()), 0};
}

inline MetricValue spatial_density(const FeatureSet& fs) {
    if (fs.empty()) return {0.0, metric_flags::kEmpty};
    float minx = fs.keypoints[0].x, maxx = minx, miny = fs.keypoints[0].y, maxy = miny;
    for (const Keypoint& k : fs.keypoints) {
        minx = std::min(minx, k.x);
        maxx = std::max(maxx, k.x);
        miny = std::min(miny, k.y);
        maxy = std::max(maxy, k.y);
    }
    const double area_kpx = (static_cast<double>(maxx) - minx) * (static_cast<double>(maxy) - miny) / 1000.0;
    const double n = static_cast<double>(fs.size());
    if (fs.size() == 1 || area_kpx <= 0.0) return {n, metric_flags::kPointRegion};
    return {n / area_kpx, 0};
}

/// 1 - Hamming/256 for binary descriptors, 1/(1+d) for histograms.
inline double similarity(const Descriptor& a, const Descriptor& b) {
    if (a.is_binary()) return 1.0 - hamming(a.bits(), b.bits()) / static_cast<double>(kBinaryBits);
    return 1.0 / (1.0 + euclidean(a.hist(), b.hist()));
}

inline MetricValue distinctiveness(const FeatureSet& fs, const MetricConfig& cfg = {}) {
    if (fs.empty()) return {0.0, metric_flags::kEmpty};
    if (fs.size() == 1) return {1.0, metric_flags::kSingleFeature};
    double sum = 0.0;
    for (std::size_t i = 0; i < fs.size(); ++i) {
        for (std::size_t j = i + 1; j < fs.size(); ++j) sum += 2.0 * similarity(fs.descriptors[i], fs.descriptors[j]);
    }
    if (sum <= 0.0 || 1.0 / sum > cfg.distinctiveness_cap) return {cfg.distinctiveness_cap, metric_flags::kCapped};
    return {1.0 / sum, 0};
}

inline MetricValue repeatability_from_matches(const FeatureSet& curr, const std::vector<Match>& matches) {
    if (curr.empty()) return {0.0, metric_flags::kEmpty};
    return {static_cast<double>(matches.size()) / static_cast<double>(curr.size()), 0};
}

inline MetricValue repeatability(const FeatureSet& prev, const FeatureSet& curr) {
    return repeatability_from_matches(curr, match(prev, curr));
}

/// m1..m7 for the latest frame of `history` (oldest first) on image `img`.
/// m3/m7 need one previous frame and m4 a full stability window; otherwise
/// they are 0 and flagged short-history.
inline MetricVector evaluate_all(std::span<const FeatureSet> history, const GrayImage& img,
                                 const MetricConfig& cfg = {}) {
    if (history.empty()) throw std::invalid_argument("evaluate_all needs at least the current frame");
    const FeatureSet& curr = history.back();
    MetricVector mv;
    mv.frame_id = curr.frame_id;
    mv.extractor = std::string(to_string(curr.extractor));
    if (curr.empty()) mv.flags |= metric_flags::kEmpty;

    mv.m[0] = texturedness(img, curr, cfg);
    mv.m[1] = dissimilarity(img, curr, cfg);

    if (history.size() >= 2) {
        const FeatureSet& prev = history[history.size() - 2];
        const std::vector<Match> mt = match(prev, curr);
        const MetricValue m3 = motion_from_matches(prev, curr, mt);
        const MetricValue m7 = repeatability_from_matches(curr, mt);
        mv.m[2] = m3.value;
        mv.m[6] = m7.value;
        mv.flags |= m3.flags | m7.flags;
    } else {
        mv.flags |= metric_flags::kShortHistory;
    }

    const std::size_t w = static_cast<std::size_t>(std::max(2, cfg.stability_window));
    if (history.size() >= w) {
        const MetricValue m4 = stability(history.subspan(history.size() - w));
        mv.m[3] = m4.value;
        mv.flags |= m4.flags;
    } else {
        mv.flags |= metric_flags::kShortHistory;
    }

    const MetricValue m5 = spatial_density(curr);
    const MetricValue m6 = distinctiveness(curr, cfg);
    mv.m[4] = m5.value;
    mv.m[5] = m6.value;
    mv.flags |= m5.flags | m6.flags;
    return mv;
}

/// Per-component min-max across the candidates evaluated on one frame;
/// components that are equal everywhere map to 0.5.
inline std::vector<NormalizedMetricVector> normalize(std::span<const MetricVector> vectors) {
    std::vector<NormalizedMetricVector> out(vectors.size());
    for (int c = 0; c < kNumMetrics; ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const MetricVector& v : vectors) {
            lo = std::min(lo, v.m[c]);
            hi = std::max(hi, v.m[c]);
        }
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            out[i].m[c] = hi > lo ? (vectors[i].m[c] - lo) / (hi - lo) : 0.5;
        }
    }
    return out;
}

inline void write_metrics_csv_header(std::ostream& out) {
    out << "frame_id,extractor,m1,m2,m3,m4,m5,m6,m7,flags\n";
}

inline void write_metrics_csv_row(std::ostream& out, const MetricVector& mv) {
    out << mv.frame_id << ',' << mv.extractor;
    for (double v : mv.m) out << fmt::format(",{:.9g}", v);
    out << ',' << metric_flags::to_string(mv.flags) << '\n';
}

}  // namespace nfex
