#pragma once

// The two extractor families driven by one ParamSet:
//   corner/binary: FAST-9 segment test, Harris ranking, intensity-centroid
//                  orientation, 256-bit rotated point-pair descriptor;
//   blob/histogram: difference-of-Gaussian extrema, gradient-orientation
//                  peak, 4x4x8 gradient histogram.
// Detection runs on every pyramid level; coordinates are reported at base
// scale. Everything is deterministic given (image, kind, params).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "nfex/binary_pattern.hpp"
#include "nfex/features.hpp"
#include "nfex/image.hpp"
#include "nfex/params.hpp"

namespace nfex {

inline constexpr int kFastArc = 9;
inline constexpr int kFastBorder = 3;
inline constexpr int kHarrisRadius = 3;
inline constexpr double kHarrisK = 0.04;
inline constexpr int kCornerNmsRadius = 3;
inline constexpr double kBlobSigma = 1.6;
inline const double kBlobStep = std::pow(2.0, 1.0 / 3.0);
// ST=20 maps to the conventional DoG contrast threshold 0.04.
inline constexpr double kDogThresholdPerSt = 0.04 / 20.0;
inline constexpr int kCentroidRadius = 15;
inline constexpr int kOrientationRadius = 8;
inline constexpr int kOrientationBins = 36;
inline constexpr double kBinarySmoothingSigma = 2.0;
inline constexpr double kMatchRatio = 0.8;

/// Keypoint in the coordinates of the pyramid level it was found on.
struct LevelKeypoint {
    int level = 0;
    int x = 0;
    int y = 0;
    float score = 0.0f;
};

struct Detection {
    std::vector<LevelKeypoint> keypoints;  // capped, strongest first
    long raw_candidates = 0;               // pixels passing the detector test, before NMS/cap
};

namespace detail {

inline constexpr std::array<std::array<int, 2>, 16> kFastCircle = {{
    {0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0}, {3, 1}, {2, 2}, {1, 3},
    {0, 3}, {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3},
}};

/// True when `mask` (16 circle bits) holds kFastArc contiguous set bits,
/// wrapping around.
inline bool has_arc(unsigned mask) {
    const unsigned ring = mask | (mask << 16);
    unsigned run = ring;
    for (int k = 1; k < kFastArc; ++k) run &= ring >> k;
    return (run & 0xFFFFu) != 0;
}

/// Segment test on a pixel pointer with precomputed circle offsets.
inline bool fast_segment_test(const float* p, const std::array<std::ptrdiff_t, 16>& offsets, double t) {
    const double c = *p;
    const double hi = c + t;
    const double lo = c - t;
    // Any 9-arc covers at least two of the four compass points.
    int n_bright_compass = 0, n_dark_compass = 0;
    for (int i = 0; i < 16; i += 4) {
        const double v = p[offsets[i]];
        n_bright_compass += v > hi;
        n_dark_compass += v < lo;
    }
    if (n_bright_compass < 2 && n_dark_compass < 2) return false;
    unsigned bright = 0, dark = 0;
    for (int i = 0; i < 16; ++i) {
        const double v = p[offsets[i]];
        bright |= static_cast<unsigned>(v > hi) << i;
        dark |= static_cast<unsigned>(v < lo) << i;
    }
    return has_arc(bright) || has_arc(dark);
}

inline std::array<std::ptrdiff_t, 16> fast_offsets(int width) {
    std::array<std::ptrdiff_t, 16> o{};
    for (int i = 0; i < 16; ++i) o[i] = static_cast<std::ptrdiff_t>(kFastCircle[i][1]) * width + kFastCircle[i][0];
    return o;
}

/// FAST-9: true when 9 contiguous circle pixels are all brighter than
/// I(x, y) + t or all darker than I(x, y) - t. (x, y) must be >= 3 px inside.
inline bool fast_segment_test(const GrayImage& img, int x, int y, double t) {
    return fast_segment_test(&img(x, y), fast_offsets(img.width()), t);
}

/// Per-pixel gradient products for Harris window sums.
struct GradientProducts {
    int width = 0;
    std::vector<double> xx, yy, xy;
};

inline GradientProducts gradient_products(const GrayImage& img) {
    GradientProducts g;
    const int w = img.width(), h = img.height();
    g.width = w;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    g.xx.resize(n);
    g.yy.resize(n);
    g.xy.resize(n);
    for (int y = 0; y < h; ++y) {
        const float* up = &img(0, std::max(0, y - 1));
        const float* mid = &img(0, y);
        const float* down = &img(0, std::min(h - 1, y + 1));
        const std::size_t row = static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            const double gx = 0.5 * (mid[std::min(w - 1, x + 1)] - mid[std::max(0, x - 1)]);
            const double gy = 0.5 * (down[x] - up[x]);
            g.xx[row + x] = gx * gx;
            g.yy[row + x] = gy * gy;
            g.xy[row + x] = gx * gy;
        }
    }
    return g;
}

/// Harris response over the 7x7 window; (x, y) must be at least the window
/// radius away from the border.
inline double harris_response(const GradientProducts& g, int x, int y) {
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (int dy = -kHarrisRadius; dy <= kHarrisRadius; ++dy) {
        const std::size_t row = static_cast<std::size_t>(y + dy) * g.width;
        for (int dx = -kHarrisRadius; dx <= kHarrisRadius; ++dx) {
            const std::size_t i = row + x + dx;
            sxx += g.xx[i];
            syy += g.yy[i];
            sxy += g.xy[i];
        }
    }
    const double det = sxx * syy - sxy * sxy;
    const double tr = sxx + syy;
    return det - kHarrisK * tr * tr;
}

inline double harris_response(const GrayImage& img, int x, int y) {
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (int dy = -kHarrisRadius; dy <= kHarrisRadius; ++dy) {
        for (int dx = -kHarrisRadius; dx <= kHarrisRadius; ++dx) {
            const int px = x + dx, py = y + dy;
            const double gx = 0.5 * (img.clamped(px + 1, py) - img.clamped(px - 1, py));
            const double gy = 0.5 * (img.clamped(px, py + 1) - img.clamped(px, py - 1));
            sxx += gx * gx;
            syy += gy * gy;
            sxy += gx * gy;
        }
    }
    const double det = sxx * syy - sxy * sxy;
    const double tr = sxx + syy;
    return det - kHarrisK * tr * tr;
}

/// Suppresses every candidate that has a stronger neighbour (Chebyshev
/// distance <= radius); equal scores resolve to the earlier (y, x).
inline std::vector<LevelKeypoint> non_max_suppression(const std::vector<LevelKeypoint>& cands, int width,
                                                      int height, int radius) {
    std::vector<int> index(static_cast<std::size_t>(width) * height, -1);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        index[static_cast<std::size_t>(cands[i].y) * width + cands[i].x] = static_cast<int>(i);
    }
    std::vector<LevelKeypoint> kept;
    for (const LevelKeypoint& c : cands) {
        bool keep = true;
        for (int dy = -radius; dy <= radius && keep; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
                if (dx == 0 && dy == 0) continue;
                const int nx = c.x + dx, ny = c.y + dy;
                if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
                const int j = index[static_cast<std::size_t>(ny) * width + nx];
                if (j < 0) continue;
                const LevelKeypoint& o = cands[j];
                const bool earlier = std::tie(o.y, o.x) < std::tie(c.y, c.x);
                if (o.score > c.score || (o.score == c.score && earlier)) {
                    keep = false;
                    break;
                }
            }
        }
        if (keep) kept.push_back(c);
    }
    return kept;
}

/// Candidates arrive sorted by (level, y, x); the stable sort keeps that
/// order among equal scores before capping.
inline void rank_and_cap(std::vector<LevelKeypoint>& kps, int nf) {
    std::stable_sort(kps.begin(), kps.end(),
                     [](const LevelKeypoint& a, const LevelKeypoint& b) { return a.score > b.score; });
    if (static_cast<int>(kps.size()) > nf) kps.resize(static_cast<std::size_t>(nf));
}

inline float wrap_angle(double a) {
    constexpr double pi = std::numbers::pi;
    a = std::fmod(a + pi, 2.0 * pi);
    if (a < 0) a += 2.0 * pi;
    float r = static_cast<float>(a - pi);
    if (r >= static_cast<float>(pi)) r = -static_cast<float>(pi);
    return r;
}

}  // namespace detail

/// Difference-of-Gaussian response (normalized intensity units) for one level.
inline SignedRaster difference_of_gaussians(const GrayImage& level) {
    const GrayImage g1 = gaussian_blur(level, kBlobSigma);
    const double extra = kBlobSigma * std::sqrt(kBlobStep * kBlobStep - 1.0);
    const GrayImage g2 = gaussian_blur(g1, extra);
    SignedRaster dog(level.width(), level.height());
    for (std::size_t i = 0; i < dog.data().size(); ++i) {
        dog.data()[i] = (g2.data()[i] - g1.data()[i]) / 255.0f;
    }
    return dog;
}

inline Detection detect_corner_levels(const ImagePyramid& pyr, const ParamSet& params) {
    Detection det;
    std::vector<LevelKeypoint> all;
    for (int l = 0; l < pyr.n_levels(); ++l) {
        const GrayImage& img = pyr.levels[l];
        std::vector<LevelKeypoint> cands;
        const auto offsets = detail::fast_offsets(img.width());
        for (int y = kFastBorder; y < img.height() - kFastBorder; ++y) {
            const float* row = &img(0, y);
            for (int x = kFastBorder; x < img.width() - kFastBorder; ++x) {
                if (detail::fast_segment_test(row + x, offsets, params.st)) cands.push_back({l, x, y, 0.0f});
            }
        }
        if (!cands.empty()) {
            const detail::GradientProducts g = detail::gradient_products(img);
            for (LevelKeypoint& c : cands) {
                const bool interior = c.x >= kHarrisRadius && c.y >= kHarrisRadius &&
                                      c.x < img.width() - kHarrisRadius && c.y < img.height() - kHarrisRadius;
                c.score = static_cast<float>(interior ? detail::harris_response(g, c.x, c.y)
                                                      : detail::harris_response(img, c.x, c.y));
            }
        }
        det.raw_candidates += static_cast<long>(cands.size());
        auto kept = detail::non_max_suppression(cands, img.width(), img.height(), kCornerNmsRadius);
        all.insert(all.end(), kept.begin(), kept.end());
    }
    detail::rank_and_cap(all, params.nf);
    det.keypoints = std::move(all);
    return det;
}

inline Detection detect_blob_levels(const ImagePyramid& pyr, const ParamSet& params) {
    Detection det;
    const double thr = params.st * kDogThresholdPerSt;
    std::vector<LevelKeypoint> all;
    for (int l = 0; l < pyr.n_levels(); ++l) {
        const SignedRaster dog = difference_of_gaussians(pyr.levels[l]);
        for (int y = 1; y < dog.height() - 1; ++y) {
            for (int x = 1; x < dog.width() - 1; ++x) {
                const float v = dog(x, y);
                if (!(std::fabs(v) > thr)) continue;
                bool is_max = true, is_min = true;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        const float n = dog(x + dx, y + dy);
                        is_max &= v > n;
                        is_min &= v < n;
                    }
                }
                if (is_max || is_min) {
                    ++det.raw_candidates;
                    all.push_back({l, x, y, std::fabs(v)});
                }
            }
        }
    }
    detail::rank_and_cap(all, params.nf);
    det.keypoints = std::move(all);
    return det;
}

/// Level-local coordinates mapped back to the base image.
inline Keypoint to_base(const ImagePyramid& pyr, const LevelKeypoint& k) {
    Keypoint out;
    out.x = static_cast<float>((k.x + 0.5) * pyr.level_scale_x(k.level) - 0.5);
    out.y = static_cast<float>((k.y + 0.5) * pyr.level_scale_y(k.level) - 0.5);
    out.level = k.level;
    out.score = k.score;
    return out;
}

inline std::vector<Keypoint> detect_corner(const ImagePyramid& pyr, const ParamSet& params) {
    std::vector<Keypoint> out;
    for (const LevelKeypoint& k : detect_corner_levels(pyr, params).keypoints) out.push_back(to_base(pyr, k));
    return out;
}

inline std::vector<Keypoint> detect_blob(const ImagePyramid& pyr, const ParamSet& params) {
    std::vector<Keypoint> out;
    for (const LevelKeypoint& k : detect_blob_levels(pyr, params).keypoints) out.push_back(to_base(pyr, k));
    return out;
}

struct Orientation {
    float angle = 0.0f;
    bool degenerate = false;
};

/// Orientation at pixel (x, y) of `img`. Corner family: intensity centroid
/// over a radius-15 disc. Blob family: peak of a 36-bin magnitude-weighted
/// gradient-orientation histogram over a radius-8 window.
inline Orientation compute_orientation(const GrayImage& img, int x, int y, ExtractorKind kind) {
    if (!img.contains(x, y)) throw std::invalid_argument("keypoint lies outside the image");
    constexpr double pi = std::numbers::pi;
    if (kind == ExtractorKind::CornerBinary) {
        double m10 = 0.0, m01 = 0.0, mass = 0.0;
        const int r = kCentroidRadius;
        for (int dy = -r; dy <= r; ++dy) {
            const int py = y + dy;
            if (py < 0 || py >= img.height()) continue;
            for (int dx = -r; dx <= r; ++dx) {
                const int px = x + dx;
                if (px < 0 || px >= img.width() || dx * dx + dy * dy > r * r) continue;
                const double v = img(px, py);
                m10 += dx * v;
                m01 += dy * v;
                mass += v;
            }
        }
        if (std::hypot(m10, m01) <= 1e-6 * std::max(1.0, mass)) return {0.0f, true};
        return {detail::wrap_angle(std::atan2(m01, m10)), false};
    }

    std::array<double, kOrientationBins> hist{};
    const int r = kOrientationRadius;
    const double sigma = 0.5 * r;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            if (dx * dx + dy * dy > r * r) continue;
            const int px = x + dx, py = y + dy;
            if (!img.contains(px, py)) continue;
            const double gx = 0.5 * (img.clamped(px + 1, py) - img.clamped(px - 1, py));
            const double gy = 0.5 * (img.clamped(px, py + 1) - img.clamped(px, py - 1));
            const double mag = std::hypot(gx, gy);
            if (mag == 0.0) continue;
            const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            // Bin b is centred on -pi + b * 10 degrees.
            const long bin = std::lround((std::atan2(gy, gx) + pi) / (2.0 * pi) * kOrientationBins);
            hist[static_cast<std::size_t>(bin % kOrientationBins)] += w * mag;
        }
    }
    for (int pass = 0; pass < 2; ++pass) {
        const std::array<double, kOrientationBins> h = hist;
        for (int i = 0; i < kOrientationBins; ++i) {
            hist[i] = (h[(i + kOrientationBins - 1) % kOrientationBins] + h[i] + h[(i + 1) % kOrientationBins]) / 3.0;
        }
    }
    const auto peak = std::max_element(hist.begin(), hist.end());
    if (*peak <= 0.0) return {0.0f, true};
    const int b = static_cast<int>(peak - hist.begin());
    const double left = hist[(b + kOrientationBins - 1) % kOrientationBins];
    const double right = hist[(b + 1) % kOrientationBins];
    const double denom = left - 2.0 * *peak + right;
    const double offset = denom != 0.0 ? 0.5 * (left - right) / denom : 0.0;
    const double angle = -pi + (b + offset) * (2.0 * pi / kOrientationBins);
    return {detail::wrap_angle(angle), false};
}

namespace detail {

inline Descriptor describe_binary(const GrayImage& smoothed, int x, int y, float orientation) {
    const double c = std::cos(orientation), s = std::sin(orientation);
    BinaryDescriptor bits{};
    bool clipped = false;
    auto sample = [&](int px, int py) {
        const double sx = x + c * px - s * py;
        const double sy = y + s * px + c * py;
        if (sx < 0 || sy < 0 || sx > smoothed.width() - 1 || sy > smoothed.height() - 1) clipped = true;
        return sample_bilinear(smoothed, sx, sy);
    };
    for (int i = 0; i < kBinaryBits; ++i) {
        const PointPair& p = kBinaryPattern[i];
        if (sample(p.x1, p.y1) < sample(p.x2, p.y2)) bits[i / 64] |= std::uint64_t{1} << (i % 64);
    }
    return {bits, clipped ? descriptor_flags::kClipped : std::uint8_t{0}};
}

inline Descriptor describe_histogram(const Gradient& grad, int x, int y, float orientation) {
    constexpr double pi = std::numbers::pi;
    const double c = std::cos(orientation), s = std::sin(orientation);
    HistogramDescriptor hist{};
    std::array<double, kHistogramLength> acc{};
    bool clipped = false;
    const int w = grad.gx.width(), h = grad.gx.height();
    constexpr double sigma = 8.0;
    for (int iv = 0; iv < 16; ++iv) {
        for (int iu = 0; iu < 16; ++iu) {
            const double u = iu - 7.5, v = iv - 7.5;
            const double px = x + c * u - s * v;
            const double py = y + s * u + c * v;
            if (px < 0 || py < 0 || px > w - 1 || py > h - 1) clipped = true;
            const double gx = sample_bilinear(grad.gx, px, py);
            const double gy = sample_bilinear(grad.gy, px, py);
            const double gu = c * gx + s * gy;
            const double gv = -s * gx + c * gy;
            const double mag = std::hypot(gu, gv);
            if (mag == 0.0) continue;
            int bin = static_cast<int>(std::floor((std::atan2(gv, gu) + pi) / (2.0 * pi) * 8.0));
            bin = std::clamp(bin, 0, 7);
            const double weight = std::exp(-(u * u + v * v) / (2.0 * sigma * sigma));
            acc[((iv / 4) * 4 + iu / 4) * 8 + bin] += mag * weight;
        }
    }
    auto norm_of = [&] {
        double n = 0.0;
        for (double a : acc) n += a * a;
        return std::sqrt(n);
    };
    std::uint8_t flags = clipped ? descriptor_flags::kClipped : 0;
    double n = norm_of();
    if (n <= 1e-12) {
        flags |= descriptor_flags::kDegenerate;
        return {hist, flags};
    }
    for (double& a : acc) a = std::min(a / n, 0.2);
    n = norm_of();
    for (int i = 0; i < kHistogramLength; ++i) hist[i] = static_cast<float>(acc[i] / n);
    return {hist, flags};
}

}  // namespace detail

/// Describes keypoints whose (x, y) are pixel coordinates of `img` and whose
/// orientation is already set.
inline std::vector<Descriptor> describe(const GrayImage& img, const std::vector<Keypoint>& kps, ExtractorKind kind) {
    std::vector<Descriptor> out;
    out.reserve(kps.size());
    if (kps.empty()) return out;
    if (kind == ExtractorKind::CornerBinary) {
        const GrayImage smoothed = gaussian_blur(img, kBinarySmoothingSigma);
        for (const Keypoint& k : kps) {
            out.push_back(detail::describe_binary(smoothed, static_cast<int>(std::lround(k.x)),
                                                  static_cast<int>(std::lround(k.y)), k.orientation));
        }
    } else {
        const Gradient grad = gradient(gaussian_blur(img, kBlobSigma));
        for (const Keypoint& k : kps) {
            out.push_back(detail::describe_histogram(grad, static_cast<int>(std::lround(k.x)),
                                                     static_cast<int>(std::lround(k.y)), k.orientation));
        }
    }
    return out;
}

/// Full pipeline: pyramid, detection, orientation and description.
inline FeatureSet extract(const GrayImage& img, ExtractorKind kind, const ParamSet& params, long frame_id = 0) {
    validate(params);
    const ImagePyramid pyr = build_pyramid(img, params.sf, params.nl);
    const Detection det = kind == ExtractorKind::CornerBinary ? detect_corner_levels(pyr, params)
                                                              : detect_blob_levels(pyr, params);
    FeatureSet fs;
    fs.extractor = kind;
    fs.params = params;
    fs.frame_id = frame_id;
    fs.keypoints.resize(det.keypoints.size());
    fs.descriptors.resize(det.keypoints.size());

    for (int l = 0; l < pyr.n_levels(); ++l) {
        std::vector<std::size_t> idx;
        std::vector<Keypoint> local;
        const GrayImage oriented = kind == ExtractorKind::BlobHistogram ? gaussian_blur(pyr.levels[l], kBlobSigma)
                                                                        : pyr.levels[l];
        for (std::size_t i = 0; i < det.keypoints.size(); ++i) {
            const LevelKeypoint& k = det.keypoints[i];
            if (k.level != l) continue;
            const Orientation o = compute_orientation(oriented, k.x, k.y, kind);
            Keypoint lk;
            lk.x = static_cast<float>(k.x);
            lk.y = static_cast<float>(k.y);
            lk.level = l;
            lk.orientation = o.angle;
            idx.push_back(i);
            local.push_back(lk);

            Keypoint base = to_base(pyr, k);
            base.orientation = o.angle;
            base.orientation_degenerate = o.degenerate;
            fs.keypoints[i] = base;
        }
        const std::vector<Descriptor> descs = describe(pyr.levels[l], local, kind);
        for (std::size_t j = 0; j < idx.size(); ++j) fs.descriptors[idx[j]] = descs[j];
    }
    return fs;
}

struct Match {
    std::size_t a = 0;
    std::size_t b = 0;
    double distance = 0.0;

    friend bool operator==(const Match&, const Match&) = default;
};

/// Mutual nearest neighbours that pass the 0.8 ratio test in both
/// directions, so match(a, b) mirrors match(b, a). Sorted by index into `a`.
inline std::vector<Match> match(const FeatureSet& a, const FeatureSet& b) {
    if (a.extractor != b.extractor) {
        throw std::invalid_argument("cannot match feature sets of different descriptor kinds");
    }
    const std::size_t n = a.size(), m = b.size();
    std::vector<Match> out;
    if (n == 0 || m == 0) return out;
    std::vector<double> dist(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) dist[i * m + j] = distance(a.descriptors[i], b.descriptors[j]);
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    struct Best {
        std::size_t index = 0;
        double d1 = inf;
        double d2 = inf;
    };
    std::vector<Best> best_a(n), best_b(m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double d = dist[i * m + j];
            Best& ba = best_a[i];
            if (d < ba.d1) {
                ba.d2 = ba.d1;
                ba.d1 = d;
                ba.index = j;
            } else if (d < ba.d2) {
                ba.d2 = d;
            }
            Best& bb = best_b[j];
            if (d < bb.d1) {
                bb.d2 = bb.d1;
                bb.d1 = d;
                bb.index = i;
            } else if (d < bb.d2) {
                bb.d2 = d;
            }
        }
    }
    auto ratio_ok = [](const Best& b) { return b.d2 == inf || b.d1 < kMatchRatio * b.d2; };
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = best_a[i].index;
        if (best_b[j].index == i && ratio_ok(best_a[i]) && ratio_ok(best_b[j])) {
            out.push_back({i, j, best_a[i].d1});
        }
    }
    return out;
}

}  // namespace nfex
