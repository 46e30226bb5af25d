#pragma once

// Raster images, Gaussian scale space, pyramids, gradients and patch
// statistics. Every operation here is a pure function of its inputs.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nfex {

/// Row-major single-channel raster. `Raster<float>` with values in [0, 255]
/// is the luminance image used everywhere (`GrayImage`); signed rasters hold
/// gradients and difference-of-Gaussian responses.
template <typename T>
class Raster {
public:
    Raster() = default;

    Raster(int width, int height, T fill = T{})
        : width_(width), height_(height) {
        if (width < 1 || height < 1) {
            throw std::invalid_argument("raster dimensions must be at least 1x1");
        }
        data_.assign(static_cast<std::size_t>(width) * height, fill);
    }

    Raster(int width, int height, std::vector<T> data)
        : width_(width), height_(height), data_(std::move(data)) {
        if (width < 1 || height < 1) {
            throw std::invalid_argument("raster dimensions must be at least 1x1");
        }
        if (data_.size() != static_cast<std::size_t>(width) * height) {
            throw std::invalid_argument("raster data length does not match width*height");
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const T& operator()(int x, int y) const {
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }

    // Edge-replicating access.
    const T& clamped(int x, int y) const {
        x = std::clamp(x, 0, width_ - 1);
        y = std::clamp(y, 0, height_ - 1);
        return (*this)(x, y);
    }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    std::span<const T> data() const noexcept { return data_; }
    std::span<T> data() noexcept { return data_; }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using GrayImage = Raster<float>;
using SignedRaster = Raster<float>;

/// Bilinear sample with edge replication.
template <typename T>
double sample_bilinear(const Raster<T>& img, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    const double a = img.clamped(x0, y0);
    const double b = img.clamped(x0 + 1, y0);
    const double c = img.clamped(x0, y0 + 1);
    const double d = img.clamped(x0 + 1, y0 + 1);
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
}

/// Normalized 1-D Gaussian kernel with radius ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("gaussian sigma must be positive");
    }
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    for (double& w : k) w /= sum;
    return k;
}

/// Separable Gaussian convolution with edge replication.
inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    const std::vector<double> k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    const int w = img.width();
    const int h = img.height();

    // Horizontal pass over an edge-padded copy of each row.
    std::vector<double> tmp(static_cast<std::size_t>(w) * h);
    std::vector<double> padded(static_cast<std::size_t>(w + 2 * r));
    for (int y = 0; y < h; ++y) {
        for (int x = -r; x < w + r; ++x) padded[x + r] = img.clamped(x, y);
        double* out_row = &tmp[static_cast<std::size_t>(y) * w];
        std::fill(out_row, out_row + w, 0.0);
        for (int i = 0; i <= 2 * r; ++i) {
            const double ki = k[i];
            const double* src = &padded[i];
            for (int x = 0; x < w; ++x) out_row[x] += ki * src[x];
        }
    }
    GrayImage out(w, h);
    std::vector<double> acc(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int i = -r; i <= r; ++i) {
            const double* row = &tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w];
            const double ki = k[i + r];
            for (int x = 0; x < w; ++x) acc[x] += ki * row[x];
        }
        for (int x = 0; x < w; ++x) out(x, y) = static_cast<float>(acc[x]);
    }
    return out;
}

/// Bilinear resampling to an explicit target size (pixel-center aligned).
inline GrayImage resize_bilinear(const GrayImage& img, int width, int height) {
    GrayImage out(width, height);
    const double sx = static_cast<double>(img.width()) / width;
    const double sy = static_cast<double>(img.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double src_y = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < width; ++x) {
            const double src_x = (x + 0.5) * sx - 0.5;
            out(x, y) = static_cast<float>(sample_bilinear(img, src_x, src_y));
        }
    }
    return out;
}

inline constexpr int kMinPyramidSide = 8;

struct ImagePyramid {
    std::vector<GrayImage> levels;  // fine -> coarse, levels[0] is the input
    double scale_factor = 1.2;

    int n_levels() const noexcept { return static_cast<int>(levels.size()); }

    /// Factor mapping level-`i` pixel coordinates back to the base image.
    double level_scale_x(int i) const {
        return static_cast<double>(levels[0].width()) / levels[i].width();
    }
    double level_scale_y(int i) const {
        return static_cast<double>(levels[0].height()) / levels[i].height();
    }
};

/// Level i has dimensions floor(base / scale_factor^i); levels that would be
/// smaller than 8x8 are dropped, so the effective level count can shrink.
inline ImagePyramid build_pyramid(const GrayImage& img, double scale_factor, int n_levels) {
    if (!(scale_factor > 1.0)) throw std::invalid_argument("pyramid scale factor must exceed 1");
    if (n_levels < 1) throw std::invalid_argument("pyramid needs at least one level");
    if (img.width() < kMinPyramidSide || img.height() < kMinPyramidSide) {
        throw std::invalid_argument("pyramid base image must be at least 8x8");
    }
    ImagePyramid pyr;
    pyr.scale_factor = scale_factor;
    pyr.levels.push_back(img);
    for (int i = 1; i < n_levels; ++i) {
        const double s = std::pow(scale_factor, i);
        const int w = static_cast<int>(std::floor(img.width() / s + 1e-9));
        const int h = static_cast<int>(std::floor(img.height() / s + 1e-9));
        if (w < kMinPyramidSide || h < kMinPyramidSide) break;
        pyr.levels.push_back(resize_bilinear(pyr.levels.back(), w, h));
    }
    return pyr;
}

struct Gradient {
    SignedRaster gx;
    SignedRaster gy;
};

/// Central differences in the interior, one-sided differences on the border.
inline Gradient gradient(const GrayImage& img) {
    const int w = img.width();
    const int h = img.height();
    if (w < 3 || h < 3) throw std::invalid_argument("gradient needs an image of at least 3x3");
    Gradient g{SignedRaster(w, h), SignedRaster(w, h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (x == 0) {
                g.gx(x, y) = img(1, y) - img(0, y);
            } else if (x == w - 1) {
                g.gx(x, y) = img(w - 1, y) - img(w - 2, y);
            } else {
                g.gx(x, y) = 0.5f * (img(x + 1, y) - img(x - 1, y));
            }
            if (y == 0) {
                g.gy(x, y) = img(x, 1) - img(x, 0);
            } else if (y == h - 1) {
                g.gy(x, y) = img(x, h - 1) - img(x, h - 2);
            } else {
                g.gy(x, y) = 0.5f * (img(x, y + 1) - img(x, y - 1));
            }
        }
    }
    return g;
}

struct PatchStats {
    double mean = 0.0;
    double sum_sq_dev = 0.0;
    int count = 0;
};

/// Mean and sum of squared deviations over the square patch of the given
/// radius around `(cx, cy)`, clipped to the image.
inline PatchStats patch_stats(const GrayImage& img, int cx, int cy, int radius) {
    if (!img.contains(cx, cy)) throw std::invalid_argument("patch center lies outside the image");
    if (radius < 0) throw std::invalid_argument("patch radius must be non-negative");
    const int x0 = std::max(0, cx - radius), x1 = std::min(img.width() - 1, cx + radius);
    const int y0 = std::max(0, cy - radius), y1 = std::min(img.height() - 1, cy + radius);
    PatchStats s;
    double sum = 0.0;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) sum += img(x, y);
    s.count = (x1 - x0 + 1) * (y1 - y0 + 1);
    s.mean = sum / s.count;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double d = img(x, y) - s.mean;
            s.sum_sq_dev += d * d;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Ingestion and PGM/PPM I/O

inline float luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return static_cast<float>(0.299 * r + 0.587 * g + 0.114 * b);
}

/// Quantize to 8-bit (round half up, clamp to [0, 255]).
inline std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5f), 0.0f, 255.0f));
}

/// Rounds every pixel to the nearest 8-bit level.
inline GrayImage quantize(const GrayImage& img) {
    GrayImage out = img;
    for (float& v : out.data()) v = to_byte(v);
    return out;
}

namespace detail {

inline std::string next_pnm_token(std::istream& in) {
    std::string tok;
    char c = 0;
    while (in.get(c)) {
        if (c == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

}  // namespace detail

/// Reads binary PGM (P5) or PPM (P6, converted with fixed luma weights).
inline GrayImage read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image: " + path);
    const std::string magic = detail::next_pnm_token(in);
    if (magic != "P5" && magic != "P6") {
        throw std::runtime_error("unsupported image format (expected P5/P6): " + path);
    }
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(detail::next_pnm_token(in));
        h = std::stoi(detail::next_pnm_token(in));
        maxval = std::stoi(detail::next_pnm_token(in));
    } catch (const std::exception&) {
        throw std::runtime_error("malformed image header: " + path);
    }
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255) {
        throw std::runtime_error("unsupported image dimensions or bit depth: " + path);
    }
    const int channels = magic == "P5" ? 1 : 3;
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw std::runtime_error("truncated image data: " + path);
    }
    GrayImage img(w, h);
    const float scale = 255.0f / maxval;
    for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
        if (channels == 1) {
            img.data()[i] = raw[i] * scale;
        } else {
            img.data()[i] = luma(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]) * scale;
        }
    }
    return img;
}

/// Writes binary PGM; `comment` (if any) goes into the header as `# ...`.
inline void write_pgm(const std::string& path, const GrayImage& img, const std::string& comment = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write image: " + path);
    out << "P5\n";
    if (!comment.empty()) out << "# " << comment << "\n";
    out << img.width() << " " << img.height() << "\n255\n";
    std::vector<std::uint8_t> raw(img.data().size());
    std::transform(img.data().begin(), img.data().end(), raw.begin(), to_byte);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace nfex
