#pragma once

// Small neural networks with hand-written backprop: an MLP regressor for
// parameter quality and an image + numeric classifier for extractor choice.
// Everything runs in double precision with a fixed summation order so that
// the same seed and data give bit-identical results.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "nfex/conditions.hpp"
#include "nfex/fitness.hpp"
#include "nfex/image.hpp"
#include "nfex/params.hpp"

namespace nfex::nn {

// ---------------------------------------------------------------------------
// Random numbers (portable: no std distributions)

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t below(std::size_t n) {
        // rejection sampling keeps the draw unbiased and portable
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t r;
        do r = gen_();
        while (r >= limit);
        return static_cast<std::size_t>(r % n);
    }
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Dense matrix, row-major

struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double v = 0.0) : rows(r), cols(c), data(r * c, v) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    Matrix select_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols);
        for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(row(idx[i]), cols, out.row(i));
        return out;
    }
};

/// A trainable tensor and its gradient buffer.
struct ParamRef {
    std::vector<double>* value;
    std::vector<double>* grad;
};

// ---------------------------------------------------------------------------
// Losses

inline double mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty()) throw std::invalid_argument("mse_loss: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (target[i] - pred[i]) * (target[i] - pred[i]);
    return s / static_cast<double>(pred.size());
}

inline std::vector<double> mse_grad(std::span<const double> pred, std::span<const double> target) {
    std::vector<double> g(pred.size());
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) g[i] = 2.0 * (pred[i] - target[i]) / n;
    return g;
}

inline constexpr double kProbClip = 1e-7;

/// Binary cross-entropy averaged over all entries.
inline double cross_entropy_loss(std::span<const double> probs, std::span<const double> labels) {
    if (probs.size() != labels.size() || probs.empty()) throw std::invalid_argument("cross_entropy_loss: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], kProbClip, 1.0 - kProbClip);
        s += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
    }
    return -s / static_cast<double>(probs.size());
}

inline std::vector<double> cross_entropy_grad(std::span<const double> probs, std::span<const double> labels) {
    std::vector<double> g(probs.size());
    const double n = static_cast<double>(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (p < kProbClip || p > 1.0 - kProbClip) continue;  // clipped: flat
        g[i] = (-labels[i] / p + (1.0 - labels[i]) / (1.0 - p)) / n;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Scaler

/// Per-column z-score with population standard deviation; zero-variance
/// columns are dropped and listed in `dropped`.
struct Scaler {
    std::size_t input_width = 0;
    std::vector<std::size_t> kept;
    std::vector<std::size_t> dropped;
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t output_width() const { return kept.size(); }

    static Scaler fit(const Matrix& x) {
        if (x.rows == 0) throw std::invalid_argument("cannot fit a scaler on zero rows");
        Scaler s;
        s.input_width = x.cols;
        const double n = static_cast<double>(x.rows);
        for (std::size_t c = 0; c < x.cols; ++c) {
            double mu = 0.0;
            for (std::size_t r = 0; r < x.rows; ++r) mu += x(r, c);
            mu /= n;
            double var = 0.0;
            for (std::size_t r = 0; r < x.rows; ++r) var += (x(r, c) - mu) * (x(r, c) - mu);
            const double sd = std::sqrt(var / n);
            if (sd <= 1e-12 * std::max(1.0, std::abs(mu))) {
                s.dropped.push_back(c);
                continue;
            }
            s.kept.push_back(c);
            s.mean.push_back(mu);
            s.stddev.push_back(sd);
        }
        return s;
    }

    std::vector<double> apply(std::span<const double> v) const {
        if (v.size() != input_width) throw std::invalid_argument("scaler input width mismatch");
        std::vector<double> out(kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i) out[i] = (v[kept[i]] - mean[i]) / stddev[i];
        return out;
    }

    Matrix apply(const Matrix& x) const {
        Matrix out(x.rows, kept.size());
        for (std::size_t r = 0; r < x.rows; ++r) {
            const auto v = apply(std::span<const double>(x.row(r), x.cols));
            std::copy(v.begin(), v.end(), out.row(r));
        }
        return out;
    }

    /// Pass-through scaler for inputs that are already normalized.
    static Scaler identity(std::size_t width) {
        Scaler s;
        s.input_width = width;
        for (std::size_t c = 0; c < width; ++c) {
            s.kept.push_back(c);
            s.mean.push_back(0.0);
            s.stddev.push_back(1.0);
        }
        return s;
    }

    friend bool operator==(const Scaler&, const Scaler&) = default;
};

// ---------------------------------------------------------------------------
// Layers

struct Dense {
    std::size_t in = 0, out = 0;
    std::vector<double> w, b;  // w is out x in
    std::vector<double> gw, gb;

    Dense() = default;
    Dense(std::size_t in_, std::size_t out_, Rng& rng) : in(in_), out(out_), w(in_ * out_), b(out_, 0.0) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in));  // He-uniform
        for (double& v : w) v = rng.uniform(-limit, limit);
        zero_grad();
    }

    void zero_grad() {
        gw.assign(w.size(), 0.0);
        gb.assign(b.size(), 0.0);
    }

    Matrix forward(const Matrix& x) const {
        if (x.cols != in) throw std::invalid_argument("dense layer input width mismatch");
        Matrix y(x.rows, out);
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double* xr = x.row(r);
            double* yr = y.row(r);
            for (std::size_t o = 0; o < out; ++o) {
                const double* wr = w.data() + o * in;
                double s = b[o];
                for (std::size_t i = 0; i < in; ++i) s += wr[i] * xr[i];
                yr[o] = s;
            }
        }
        return y;
    }

    /// Accumulates parameter gradients and returns dL/dx.
    Matrix backward(const Matrix& x, const Matrix& dy) {
        Matrix dx(x.rows, in);
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double* xr = x.row(r);
            const double* dyr = dy.row(r);
            double* dxr = dx.row(r);
            for (std::size_t o = 0; o < out; ++o) {
                const double g = dyr[o];
                if (g == 0.0) continue;
                gb[o] += g;
                double* gwr = gw.data() + o * in;
                const double* wr = w.data() + o * in;
                for (std::size_t i = 0; i < in; ++i) {
                    gwr[i] += g * xr[i];
                    dxr[i] += g * wr[i];
                }
            }
        }
        return dx;
    }

    void params(std::vector<ParamRef>& out_refs) {
        out_refs.push_back({&w, &gw});
        out_refs.push_back({&b, &gb});
    }

    friend bool operator==(const Dense& a, const Dense& b_) { return a.in == b_.in && a.out == b_.out && a.w == b_.w && a.b == b_.b; }
};

/// FNV-1a over the on/off pattern of every ReLU (and the max-pool winners);
/// two inputs with equal signatures lie on the same smooth piece.
class PatternHash {
public:
    void add(std::uint64_t v) {
        h_ ^= v;
        h_ *= 0x100000001b3ull;
    }
    void add_mask(std::span<const double> pre) {
        for (double v : pre) add(v > 0.0);
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ull;
};

inline Matrix relu(const Matrix& x) {
    Matrix y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

inline void relu_backward(const Matrix& pre, Matrix& d) {
    for (std::size_t i = 0; i < d.data.size(); ++i)
        if (!(pre.data[i] > 0.0)) d.data[i] = 0.0;
}

/// 3x3 convolution, stride 1, zero padding that keeps the spatial size.
struct Conv3x3 {
    std::size_t in_c = 0, out_c = 0;
    std::vector<double> w, b;  // w is out_c x in_c x 9
    std::vector<double> gw, gb;

    Conv3x3() = default;
    Conv3x3(std::size_t in_, std::size_t out_, Rng& rng) : in_c(in_), out_c(out_), w(in_ * out_ * 9), b(out_, 0.0) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in_c * 9));
        for (double& v : w) v = rng.uniform(-limit, limit);
        zero_grad();
    }

    void zero_grad() {
        gw.assign(w.size(), 0.0);
        gb.assign(b.size(), 0.0);
    }

    // x: in_c x s x s, y: out_c x s x s
    void forward(const double* x, std::size_t s, double* y) const {
        const std::size_t plane = s * s;
        for (std::size_t o = 0; o < out_c; ++o) {
            double* yo = y + o * plane;
            std::fill(yo, yo + plane, b[o]);
            for (std::size_t c = 0; c < in_c; ++c) {
                const double* xc = x + c * plane;
                const double* k = w.data() + (o * in_c + c) * 9;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const double kv = k[(dy + 1) * 3 + (dx + 1)];
                        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? s - 1 : s;
                        const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? s - 1 : s;
                        for (std::size_t yy = y0; yy < y1; ++yy) {
                            const double* src = xc + (yy + dy) * s + dx;
                            double* dst = yo + yy * s;
                            for (std::size_t xx = x0; xx < x1; ++xx) dst[xx] += kv * src[xx];
                        }
                    }
                }
            }
        }
    }

    void backward(const double* x, std::size_t s, const double* dyv, double* dxv) {
        const std::size_t plane = s * s;
        for (std::size_t o = 0; o < out_c; ++o) {
            const double* go = dyv + o * plane;
            double bsum = 0.0;
            for (std::size_t i = 0; i < plane; ++i) bsum += go[i];
            gb[o] += bsum;
            for (std::size_t c = 0; c < in_c; ++c) {
                const double* xc = x + c * plane;
                double* dxc = dxv + c * plane;
                const double* k = w.data() + (o * in_c + c) * 9;
                double* gk = gw.data() + (o * in_c + c) * 9;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ki = (dy + 1) * 3 + (dx + 1);
                        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? s - 1 : s;
                        const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? s - 1 : s;
                        double acc = 0.0;
                        for (std::size_t yy = y0; yy < y1; ++yy) {
                            const double* src = xc + (yy + dy) * s + dx;
                            double* dsrc = dxc + (yy + dy) * s + dx;
                            const double* g = go + yy * s;
                            for (std::size_t xx = x0; xx < x1; ++xx) {
                                acc += g[xx] * src[xx];
                                dsrc[xx] += g[xx] * k[ki];
                            }
                        }
                        gk[ki] += acc;
                    }
                }
            }
        }
    }

    void params(std::vector<ParamRef>& out_refs) {
        out_refs.push_back({&w, &gw});
        out_refs.push_back({&b, &gb});
    }

    friend bool operator==(const Conv3x3& a, const Conv3x3& b_) {
        return a.in_c == b_.in_c && a.out_c == b_.out_c && a.w == b_.w && a.b == b_.b;
    }
};

/// 2x2 max pool over c planes of s x s (s even); records the winning index.
inline void max_pool2(const double* x, std::size_t c, std::size_t s, double* y, std::uint32_t* arg) {
    const std::size_t h = s / 2;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* xc = x + ch * s * s;
        for (std::size_t yy = 0; yy < h; ++yy) {
            for (std::size_t xx = 0; xx < h; ++xx) {
                std::size_t best = (2 * yy) * s + 2 * xx;
                for (std::size_t k : {best + 1, best + s, best + s + 1})
                    if (xc[k] > xc[best]) best = k;
                const std::size_t o = ch * h * h + yy * h + xx;
                y[o] = xc[best];
                arg[o] = static_cast<std::uint32_t>(ch * s * s + best);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Adam

struct TrainConfig {
    std::size_t batch_size = 8;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int epochs = 100;
    std::uint64_t seed = 1;
    double stop_below = 0.0;  // stop once the epoch loss is below this; 0 disables

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
        if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    }
};

class Adam {
public:
    Adam(std::vector<ParamRef> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
        for (const ParamRef& p : params_) {
            m_.emplace_back(p.value->size(), 0.0);
            v_.emplace_back(p.value->size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            std::vector<double>& w = *params_[k].value;
            const std::vector<double>& g = *params_[k].grad;
            for (std::size_t i = 0; i < w.size(); ++i) {
                m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
                v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m_[k][i] / c1;
                const double vhat = v_[k][i] / c2;
                w[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
        }
    }

private:
    std::vector<ParamRef> params_;
    TrainConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

// ---------------------------------------------------------------------------
// MLP regressor

class Mlp {
public:
    Mlp() = default;
    Mlp(std::size_t inputs, std::array<std::size_t, 2> hidden = {32, 16}, std::uint64_t seed = 1) {
        Rng rng(seed);
        layers_.emplace_back(inputs, hidden[0], rng);
        layers_.emplace_back(hidden[0], hidden[1], rng);
        layers_.emplace_back(hidden[1], 1, rng);
    }

    std::size_t inputs() const { return layers_.empty() ? 0 : layers_.front().in; }
    const std::vector<Dense>& layers() const { return layers_; }
    std::vector<Dense>& layers() { return layers_; }

    struct Trace {
        std::vector<Matrix> inputs;  // input of each layer
        std::vector<Matrix> pre;     // pre-activation of the hidden layers
    };

    Matrix forward(const Matrix& x, Trace* trace = nullptr) const {
        Matrix h = x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            if (trace) trace->inputs.push_back(h);
            Matrix z = layers_[l].forward(h);
            if (l + 1 < layers_.size()) {
                if (trace) trace->pre.push_back(z);
                h = relu(z);
            } else {
                h = std::move(z);
            }
        }
        return h;
    }

    double predict(std::span<const double> x) const {
        Matrix m(1, x.size());
        std::copy(x.begin(), x.end(), m.data.begin());
        return forward(m)(0, 0);
    }

    std::vector<double> predict(const Matrix& x) const { return forward(x).data; }

    void zero_grad() {
        for (Dense& d : layers_) d.zero_grad();
    }

    /// MSE on a batch; fills the parameter gradients.
    double loss_and_grad(const Matrix& x, std::span<const double> y) {
        zero_grad();
        Trace tr;
        const Matrix out = forward(x, &tr);
        PatternHash ph;
        for (const Matrix& z : tr.pre) ph.add_mask(z.data);
        signature_ = ph.value();
        const double loss = mse_loss(out.data, y);
        Matrix d(out.rows, 1);
        d.data = mse_grad(out.data, y);
        for (std::size_t l = layers_.size(); l-- > 0;) {
            if (l + 1 < layers_.size()) relu_backward(tr.pre[l], d);
            d = layers_[l].backward(tr.inputs[l], d);
        }
        return loss;
    }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        for (Dense& d : layers_) d.params(out);
        return out;
    }

    /// Activation pattern of the last loss_and_grad call.
    std::uint64_t signature() const { return signature_; }

    friend bool operator==(const Mlp& a, const Mlp& b) { return a.layers_ == b.layers_; }

private:
    std::vector<Dense> layers_;
    std::uint64_t signature_ = 0;
};

struct TrainResult {
    std::vector<double> loss_curve;  // full-data loss after each epoch
    int epochs_run = 0;
};

namespace detail {

inline void check_finite(double loss, int epoch, std::size_t batch) {
    if (!std::isfinite(loss)) {
        throw std::runtime_error(fmt::format("training diverged: loss {} at epoch {} batch {}", loss, epoch, batch));
    }
}

template <class BatchStep, class FullLoss>
TrainResult train_loop(std::size_t rows, const TrainConfig& cfg, BatchStep&& batch_step, FullLoss&& full_loss, Adam& opt) {
    cfg.validate();
    if (rows < cfg.batch_size) throw std::invalid_argument("dataset has fewer rows than one batch");
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(rows);
    for (std::size_t i = 0; i < rows; ++i) order[i] = i;
    TrainResult res;
    for (int e = 0; e < cfg.epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t start = 0, b = 0; start < rows; start += cfg.batch_size, ++b) {
            const std::size_t end = std::min(rows, start + cfg.batch_size);
            const double loss = batch_step(std::span<const std::size_t>(order.data() + start, end - start));
            check_finite(loss, e, b);
            opt.step();
        }
        const double l = full_loss();
        check_finite(l, e, 0);
        res.loss_curve.push_back(l);
        res.epochs_run = e + 1;
        if (cfg.stop_below > 0.0 && l < cfg.stop_below) break;
    }
    return res;
}

}  // namespace detail

/// Mini-batch Adam on MSE. `x` must already be normalized.
inline TrainResult train_mlp(Mlp& model, const Matrix& x, std::span<const double> y, const TrainConfig& cfg) {
    if (x.rows != y.size()) throw std::invalid_argument("feature and target row counts differ");
    if (x.cols != model.inputs()) throw std::invalid_argument("feature width does not match the model");
    Adam opt(model.params(), cfg);
    auto step = [&](std::span<const std::size_t> idx) {
        const Matrix xb = x.select_rows(idx);
        std::vector<double> yb(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = y[idx[i]];
        return model.loss_and_grad(xb, yb);
    };
    auto full = [&] { return mse_loss(model.predict(x), y); };
    return detail::train_loop(x.rows, cfg, step, full, opt);
}

// ---------------------------------------------------------------------------
// Hybrid image + numeric classifier

/// Grayscale image resized to size x size and scaled to [0,1].
inline std::vector<double> prepare_image(const GrayImage& img, int size) {
    const GrayImage small = (img.width() == size && img.height() == size) ? img : resize_bilinear(img, size, size);
    std::vector<double> out(static_cast<std::size_t>(size) * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) out[static_cast<std::size_t>(y) * size + x] = small(x, y) / 255.0;
    return out;
}

struct ClassifierSample {
    std::vector<double> image;    // size x size in [0,1]
    std::vector<double> numeric;  // condition / metric features
    int label = 0;
};

inline std::vector<double> softmax(std::span<const double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - mx));
    for (double& v : p) v /= s;
    return p;
}

class HybridClassifier {
public:
    static constexpr std::size_t kC1 = 8, kC2 = 16;

    HybridClassifier() = default;
    HybridClassifier(std::size_t image_size, std::size_t numeric_width, std::size_t classes = kNumCandidates,
                     std::array<std::size_t, 2> hidden = {12, 8}, std::uint64_t seed = 1)
        : size_(image_size), numeric_(numeric_width), classes_(classes) {
        if (image_size < 4 || image_size % 4 != 0) throw std::invalid_argument("image size must be a multiple of 4");
        Rng rng(seed);
        c1_ = Conv3x3(1, kC1, rng);
        c2_ = Conv3x3(kC1, kC2, rng);
        f1_ = Dense(conv_features() + numeric_, hidden[0], rng);
        f2_ = Dense(hidden[0], hidden[1], rng);
        f3_ = Dense(hidden[1], classes_, rng);
    }

    std::size_t image_size() const { return size_; }
    std::size_t numeric_width() const { return numeric_; }
    std::size_t classes() const { return classes_; }
    std::size_t conv_features() const { return kC2 * (size_ / 4) * (size_ / 4); }

    struct Trace {
        std::vector<std::vector<double>> a1, a2;  // conv outputs (pre-activation)
        std::vector<std::vector<double>> p1;      // pooled after the first conv
        std::vector<std::vector<std::uint32_t>> i1, i2;
        Matrix fin, z1, z2;
    };

    Matrix forward(std::span<const ClassifierSample* const> batch, Trace* tr = nullptr) const {
        const std::size_t n = batch.size(), s = size_, h = s / 2, q = s / 4;
        Matrix fin(n, conv_features() + numeric_);
        if (tr) {
            tr->a1.resize(n);
            tr->a2.resize(n);
            tr->p1.resize(n);
            tr->i1.resize(n);
            tr->i2.resize(n);
        }
        std::vector<double> a1(kC1 * s * s), p1(kC1 * h * h), a2(kC2 * h * h), p2(kC2 * q * q);
        std::vector<std::uint32_t> i1(p1.size()), i2(p2.size());
        for (std::size_t k = 0; k < n; ++k) {
            const ClassifierSample& smp = *batch[k];
            if (smp.image.size() != s * s || smp.numeric.size() != numeric_) {
                throw std::invalid_argument("classifier sample shape mismatch");
            }
            c1_.forward(smp.image.data(), s, a1.data());
            std::vector<double> r1 = a1;
            for (double& v : r1) v = v > 0.0 ? v : 0.0;
            max_pool2(r1.data(), kC1, s, p1.data(), i1.data());
            c2_.forward(p1.data(), h, a2.data());
            std::vector<double> r2 = a2;
            for (double& v : r2) v = v > 0.0 ? v : 0.0;
            max_pool2(r2.data(), kC2, h, p2.data(), i2.data());
            double* row = fin.row(k);
            std::copy(p2.begin(), p2.end(), row);
            std::copy(smp.numeric.begin(), smp.numeric.end(), row + p2.size());
            if (tr) {
                tr->a1[k] = a1;
                tr->a2[k] = a2;
                tr->p1[k] = p1;
                tr->i1[k] = i1;
                tr->i2[k] = i2;
            }
        }
        Matrix z1 = f1_.forward(fin);
        Matrix z2 = f2_.forward(relu(z1));
        Matrix out = f3_.forward(relu(z2));
        if (tr) {
            tr->fin = std::move(fin);
            tr->z1 = std::move(z1);
            tr->z2 = std::move(z2);
        }
        return out;
    }

    std::vector<double> probabilities(const ClassifierSample& smp) const {
        const ClassifierSample* p = &smp;
        const Matrix z = forward(std::span<const ClassifierSample* const>(&p, 1));
        return softmax(z.data);
    }

    int predict(const ClassifierSample& smp) const {
        const auto p = probabilities(smp);
        return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }

    void zero_grad() {
        c1_.zero_grad();
        c2_.zero_grad();
        f1_.zero_grad();
        f2_.zero_grad();
        f3_.zero_grad();
    }

    /// Softmax probabilities scored with per-class binary cross-entropy
    /// against one-hot labels; fills the parameter gradients.
    double loss_and_grad(std::span<const ClassifierSample* const> batch) {
        zero_grad();
        Trace tr;
        const Matrix z = forward(batch, &tr);
        const std::size_t n = batch.size();
        PatternHash ph;
        for (std::size_t k = 0; k < n; ++k) {
            ph.add_mask(tr.a1[k]);
            ph.add_mask(tr.a2[k]);
            for (std::uint32_t i : tr.i1[k]) ph.add(i);
            for (std::uint32_t i : tr.i2[k]) ph.add(i);
        }
        ph.add_mask(tr.z1.data);
        ph.add_mask(tr.z2.data);
        signature_ = ph.value();
        std::vector<double> probs, labels;
        std::vector<std::vector<double>> per(n);
        for (std::size_t k = 0; k < n; ++k) {
            per[k] = softmax(std::span<const double>(z.row(k), classes_));
            for (std::size_t c = 0; c < classes_; ++c) {
                probs.push_back(per[k][c]);
                labels.push_back(static_cast<int>(c) == batch[k]->label ? 1.0 : 0.0);
            }
        }
        const double loss = cross_entropy_loss(probs, labels);
        const std::vector<double> gp = cross_entropy_grad(probs, labels);
        Matrix dz(n, classes_);
        for (std::size_t k = 0; k < n; ++k) {
            double dot = 0.0;
            for (std::size_t c = 0; c < classes_; ++c) dot += gp[k * classes_ + c] * per[k][c];
            for (std::size_t c = 0; c < classes_; ++c) dz(k, c) = per[k][c] * (gp[k * classes_ + c] - dot);
        }
        Matrix d = f3_.backward(relu(tr.z2), dz);
        relu_backward(tr.z2, d);
        d = f2_.backward(relu(tr.z1), d);
        relu_backward(tr.z1, d);
        d = f1_.backward(tr.fin, d);

        const std::size_t s = size_, h = s / 2;
        std::vector<double> dp1(kC1 * h * h), da2(kC2 * h * h), da1(kC1 * s * s), dimg(s * s);
        std::vector<double> r1(kC1 * s * s);
        for (std::size_t k = 0; k < n; ++k) {
            std::fill(da2.begin(), da2.end(), 0.0);
            const double* drow = d.row(k);
            for (std::size_t i = 0; i < tr.i2[k].size(); ++i) {
                const std::uint32_t a = tr.i2[k][i];
                if (tr.a2[k][a] > 0.0) da2[a] += drow[i];
            }
            std::fill(dp1.begin(), dp1.end(), 0.0);
            c2_.backward(tr.p1[k].data(), h, da2.data(), dp1.data());
            std::fill(da1.begin(), da1.end(), 0.0);
            for (std::size_t i = 0; i < tr.i1[k].size(); ++i) {
                const std::uint32_t a = tr.i1[k][i];
                if (tr.a1[k][a] > 0.0) da1[a] += dp1[i];
            }
            std::fill(dimg.begin(), dimg.end(), 0.0);
            c1_.backward(batch[k]->image.data(), s, da1.data(), dimg.data());
        }
        return loss;
    }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        c1_.params(out);
        c2_.params(out);
        f1_.params(out);
        f2_.params(out);
        f3_.params(out);
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (const ParamRef& p : params()) n += p.value->size();
        return n;
    }

    Conv3x3& conv(int i) { return i == 0 ? c1_ : c2_; }
    const Conv3x3& conv(int i) const { return i == 0 ? c1_ : c2_; }
    Dense& dense(int i) { return i == 0 ? f1_ : i == 1 ? f2_ : f3_; }
    const Dense& dense(int i) const { return i == 0 ? f1_ : i == 1 ? f2_ : f3_; }

    std::uint64_t signature() const { return signature_; }

    friend bool operator==(const HybridClassifier& a, const HybridClassifier& b) {
        return a.size_ == b.size_ && a.numeric_ == b.numeric_ && a.classes_ == b.classes_ && a.c1_ == b.c1_ &&
               a.c2_ == b.c2_ && a.f1_ == b.f1_ && a.f2_ == b.f2_ && a.f3_ == b.f3_;
    }

private:
    std::uint64_t signature_ = 0;
    std::size_t size_ = 0, numeric_ = 0, classes_ = 0;
    Conv3x3 c1_, c2_;
    Dense f1_, f2_, f3_;
};

inline double classifier_accuracy(const HybridClassifier& model, std::span<const ClassifierSample> data) {
    if (data.empty()) return 0.0;
    std::size_t ok = 0;
    for (const ClassifierSample& s : data) ok += model.predict(s) == s.label;
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

struct ClassifierResult {
    TrainResult train;
    double accuracy = 0.0;
};

inline ClassifierResult train_classifier(HybridClassifier& model, std::span<const ClassifierSample> data,
                                         const TrainConfig& cfg) {
    for (const ClassifierSample& s : data) {
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= model.classes()) throw std::invalid_argument("label out of range");
    }
    Adam opt(model.params(), cfg);
    auto step = [&](std::span<const std::size_t> idx) {
        std::vector<const ClassifierSample*> b;
        for (std::size_t i : idx) b.push_back(&data[i]);
        return model.loss_and_grad(b);
    };
    auto full = [&] {
        std::vector<const ClassifierSample*> all;
        for (const ClassifierSample& s : data) all.push_back(&s);
        double loss = 0.0;
        for (std::size_t start = 0; start < all.size(); start += 64) {
            const std::size_t end = std::min(all.size(), start + 64);
            const std::span<const ClassifierSample* const> part(all.data() + start, end - start);
            const Matrix z = model.forward(part);
            std::vector<double> probs, labels;
            for (std::size_t k = 0; k < part.size(); ++k) {
                const auto p = softmax(std::span<const double>(z.row(k), model.classes()));
                for (std::size_t c = 0; c < p.size(); ++c) {
                    probs.push_back(p[c]);
                    labels.push_back(static_cast<int>(c) == part[k]->label ? 1.0 : 0.0);
                }
            }
            loss += cross_entropy_loss(probs, labels) * static_cast<double>(part.size());
        }
        return loss / static_cast<double>(all.size());
    };
    ClassifierResult res;
    res.train = detail::train_loop(data.size(), cfg, step, full, opt);
    res.accuracy = classifier_accuracy(model, data);
    return res;
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t step_reductions = 0;  // probes retried with a smaller step
    std::size_t skipped = 0;          // probes that straddle a kink at every step
};

/// Central differences against the analytic gradient. `loss_and_grad`
/// recomputes the loss and fills the gradients of `params`; `signature`
/// returns the activation pattern of the last call. When the two probes
/// land on different smooth pieces the difference quotient says nothing
/// about the derivative, so the step shrinks by 10x (at most 3 times) and
/// the probe is skipped if it still straddles a kink. At most `per_tensor`
/// entries of each tensor are probed, evenly spaced. Relative error is
/// |a - n| / max(|a|, |n|, floor).
inline GradCheck gradient_check(const std::vector<ParamRef>& params, const std::function<double()>& loss_and_grad,
                                const std::function<std::uint64_t()>& signature, double h = 1e-5,
                                std::size_t per_tensor = std::numeric_limits<std::size_t>::max(), double floor = 1e-8) {
    loss_and_grad();
    const std::uint64_t base_sig = signature();
    std::vector<std::vector<double>> analytic;
    for (const ParamRef& p : params) analytic.push_back(*p.grad);
    GradCheck out;
    for (std::size_t k = 0; k < params.size(); ++k) {
        std::vector<double>& w = *params[k].value;
        const std::size_t n = w.size();
        if (n == 0) continue;
        const std::size_t step = std::max<std::size_t>(1, n / std::min(n, per_tensor));
        for (std::size_t i = 0; i < n; i += step) {
            const double orig = w[i];
            std::optional<double> num;
            double hh = h;
            for (int attempt = 0; attempt < 4; ++attempt, hh /= 10.0) {
                w[i] = orig + hh;
                const double lp = loss_and_grad();
                const std::uint64_t sp = signature();
                w[i] = orig - hh;
                const double lm = loss_and_grad();
                const std::uint64_t sm = signature();
                w[i] = orig;
                if (sp == base_sig && sm == base_sig) {
                    num = (lp - lm) / (2.0 * hh);
                    break;
                }
                ++out.step_reductions;
            }
            if (!num) {
                ++out.skipped;
                continue;
            }
            const double a = analytic[k][i];
            const double rel = std::abs(a - *num) / std::max({std::abs(a), std::abs(*num), floor});
            out.max_rel_error = std::max(out.max_rel_error, rel);
            ++out.checked;
        }
    }
    loss_and_grad();
    return out;
}

inline GradCheck gradient_check(Mlp& model, const Matrix& x, std::span<const double> y, double h = 1e-5) {
    return gradient_check(model.params(), [&] { return model.loss_and_grad(x, y); }, [&] { return model.signature(); }, h);
}

inline GradCheck gradient_check(HybridClassifier& model, std::span<const ClassifierSample* const> batch, double h = 1e-5,
                                std::size_t per_tensor = 64) {
    return gradient_check(model.params(), [&] { return model.loss_and_grad(batch); }, [&] { return model.signature(); },
                          h, per_tensor);
}

// ---------------------------------------------------------------------------
// Parameter-quality model: scaler + MLP over (conditions one-hot, theta)

inline constexpr std::size_t kThetaFeatureWidth = kConditionOneHotWidth + kNumParams;

inline std::vector<std::string> theta_feature_names() {
    std::vector<std::string> names;
    for (const FieldInfo& f : kFields)
        for (int v = 0; v < f.n_values; ++v) names.push_back(fmt::format("{}_{}", f.name, f.values[v]));
    for (std::string_view p : kParamNames) names.emplace_back(p);
    return names;
}

inline std::array<double, kThetaFeatureWidth> encode_theta(const EnvConditions& env, const ParamSet& theta) {
    std::array<double, kThetaFeatureWidth> out{};
    const auto oh = one_hot(env);
    std::copy(oh.begin(), oh.end(), out.begin());
    out[kConditionOneHotWidth + 0] = theta.nf;
    out[kConditionOneHotWidth + 1] = theta.sf;
    out[kConditionOneHotWidth + 2] = theta.nl;
    out[kConditionOneHotWidth + 3] = theta.st;
    return out;
}

struct ThetaModel {
    Scaler scaler;
    Mlp mlp;

    double predict(const ParamSet& theta, const EnvConditions& env) const {
        const auto x = encode_theta(env, theta);
        return mlp.predict(scaler.apply(x));
    }

    ThetaPredictor as_predictor() const {
        return [this](const ParamSet& t, const EnvConditions& e) { return predict(t, e); };
    }
};

/// Multipliers of the base value probed per parameter when distilling.
inline constexpr std::array<double, 10> kDistillMultipliers = {0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 3.0, 4.0};

/// For each condition value (other fields at `reference`) and each
/// parameter (others at `base`), the multiplier of the base value with the
/// highest predicted quality, divided by the best multiplier at `reference`
/// itself. Reference values therefore keep factor 1 and a preference shared
/// by every condition is not compounded across fields. Ties go to the
/// multiplier closest to 1.
inline AdjustmentTable distill_adjustment_table(const std::function<double(const ParamSet&, const EnvConditions&)>& model,
                                                const ParamSet& base, const EnvConditions& reference = {}) {
    validate(base);
    auto best_factor = [&](const EnvConditions& env, int k) {
        const Param p = static_cast<Param>(k);
        double best_q = -std::numeric_limits<double>::infinity();
        double best_f = 1.0;
        for (double m : kDistillMultipliers) {
            std::array<double, kNumParams> f{1.0, 1.0, 1.0, 1.0};
            f[k] = m;
            const ParamSet cand = tune_theta(base, {}, AdjustmentTable{}, f);
            const double q = model(cand, env);
            const double ratio = get(cand, p) / get(base, p);
            const bool closer = std::abs(std::log(ratio)) < std::abs(std::log(best_f));
            if (q > best_q || (q == best_q && closer)) {
                best_q = q;
                best_f = ratio;
            }
        }
        return best_f;
    };
    std::array<double, kNumParams> ref{};
    for (int k = 0; k < kNumParams; ++k) ref[k] = best_factor(reference, k);
    AdjustmentTable table;
    for (int j = 0; j < kNumFields; ++j) {
        for (int v = 0; v < kFields[j].n_values; ++v) {
            if (v == reference.v[j]) continue;
            EnvConditions env = reference;
            env.v[j] = v;
            for (int k = 0; k < kNumParams; ++k) {
                const double f = best_factor(env, k) / ref[k];
                if (f != 1.0) table.set(static_cast<Param>(k), static_cast<Field>(j), v, f);
            }
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Model files

namespace detail {

inline void write_values(std::ostream& out, std::span<const double> v) {
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << fmt::format("{:.17g}", v[i]);
    out << '\n';
}

inline void write_dense(std::ostream& out, const Dense& d) {
    out << "dense " << d.in << ' ' << d.out << '\n';
    write_values(out, d.w);
    write_values(out, d.b);
}

inline void write_conv(std::ostream& out, const Conv3x3& c) {
    out << "conv3x3 " << c.in_c << ' ' << c.out_c << '\n';
    write_values(out, c.w);
    write_values(out, c.b);
}

inline void write_scaler(std::ostream& out, const Scaler& s) {
    out << "scaler " << s.input_width << ' ' << s.kept.size() << '\n';
    for (std::size_t i = 0; i < s.kept.size(); ++i) out << (i ? " " : "") << s.kept[i];
    out << '\n';
    write_values(out, s.mean);
    write_values(out, s.stddev);
}

class ModelReader {
public:
    explicit ModelReader(std::istream& in) : in_(in) {}

    std::string word() {
        std::string w;
        if (!(in_ >> w)) fail("unexpected end of model file");
        return w;
    }
    void expect(const std::string& w) {
        const std::string got = word();
        if (got != w) fail("expected '" + w + "' but found '" + got + "'");
    }
    std::size_t count() {
        const std::string w = word();
        std::size_t v = 0;
        const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
        if (ec != std::errc() || p != w.data() + w.size()) fail("bad count '" + w + "'");
        return v;
    }
    double number() {
        const std::string w = word();
        double v = 0.0;
        const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
        if (ec != std::errc() || p != w.data() + w.size() || !std::isfinite(v)) fail("bad number '" + w + "'");
        return v;
    }
    std::vector<double> numbers(std::size_t n) {
        std::vector<double> v(n);
        for (double& x : v) x = number();
        return v;
    }
    /// Reads a dense layer whose input width must be `in`.
    Dense dense(std::size_t in) {
        expect("dense");
        Dense d;
        d.in = count();
        d.out = count();
        if (d.in != in) fail(fmt::format("dense layer input {} does not chain (expected {})", d.in, in));
        if (d.out == 0) fail("dense layer with zero outputs");
        d.w = numbers(d.in * d.out);
        d.b = numbers(d.out);
        d.zero_grad();
        return d;
    }
    Conv3x3 conv(std::size_t in, std::size_t out) {
        expect("conv3x3");
        Conv3x3 c;
        c.in_c = count();
        c.out_c = count();
        if (c.in_c != in || c.out_c != out) fail("conv layer shape mismatch");
        c.w = numbers(c.in_c * c.out_c * 9);
        c.b = numbers(c.out_c);
        c.zero_grad();
        return c;
    }
    Scaler scaler() {
        expect("scaler");
        Scaler s;
        s.input_width = count();
        const std::size_t k = count();
        for (std::size_t i = 0; i < k; ++i) {
            s.kept.push_back(count());
            if (s.kept.back() >= s.input_width || (i && s.kept[i] <= s.kept[i - 1])) fail("bad scaler column list");
        }
        for (std::size_t c = 0, i = 0; c < s.input_width; ++c) {
            if (i < k && s.kept[i] == c) ++i;
            else s.dropped.push_back(c);
        }
        s.mean = numbers(k);
        s.stddev = numbers(k);
        for (double sd : s.stddev)
            if (!(sd > 0.0)) fail("scaler standard deviation must be positive");
        return s;
    }
    [[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("model file: " + msg); }

private:
    std::istream& in_;
};

inline std::string read_model_header(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("model file: empty");
    const std::string prefix = "#nfex-model v1 kind=";
    if (line.rfind(prefix, 0) != 0) throw std::runtime_error("model file: missing '#nfex-model v1' header");
    std::string kind = line.substr(prefix.size());
    while (!kind.empty() && (kind.back() == '\r' || kind.back() == ' ')) kind.pop_back();
    for (std::string skip; in.peek() == '#';) std::getline(in, skip);
    return kind;
}

}  // namespace detail

inline void write_model(std::ostream& out, const ThetaModel& m, const std::string& comment = {}) {
    out << "#nfex-model v1 kind=mlp\n";
    if (!comment.empty()) out << "# " << comment << '\n';
    detail::write_scaler(out, m.scaler);
    out << "layers " << m.mlp.layers().size() << '\n';
    for (const Dense& d : m.mlp.layers()) detail::write_dense(out, d);
}

inline void write_model(std::ostream& out, const HybridClassifier& m, const Scaler& numeric_scaler,
                        const std::string& comment = {}) {
    out << "#nfex-model v1 kind=hybrid\n";
    if (!comment.empty()) out << "# " << comment << '\n';
    out << "input " << m.image_size() << ' ' << m.numeric_width() << ' ' << m.classes() << '\n';
    detail::write_scaler(out, numeric_scaler);
    detail::write_conv(out, m.conv(0));
    detail::write_conv(out, m.conv(1));
    for (int i = 0; i < 3; ++i) detail::write_dense(out, m.dense(i));
}

inline std::string peek_model_kind(std::istream& in) { return detail::read_model_header(in); }

inline ThetaModel read_theta_model(std::istream& in) {
    const std::string kind = detail::read_model_header(in);
    if (kind != "mlp") throw std::runtime_error("model file: expected kind=mlp, found " + kind);
    detail::ModelReader r(in);
    ThetaModel m;
    m.scaler = r.scaler();
    r.expect("layers");
    if (r.count() != 3) r.fail("an mlp has exactly 3 layers");
    std::size_t width = m.scaler.output_width();
    for (int l = 0; l < 3; ++l) {
        m.mlp.layers().push_back(r.dense(width));
        width = m.mlp.layers().back().out;
    }
    if (width != 1) r.fail("mlp output width must be 1");
    return m;
}

struct HybridModel {
    Scaler numeric_scaler;
    HybridClassifier classifier;
};

inline HybridModel read_hybrid_model(std::istream& in) {
    const std::string kind = detail::read_model_header(in);
    if (kind != "hybrid") throw std::runtime_error("model file: expected kind=hybrid, found " + kind);
    detail::ModelReader r(in);
    r.expect("input");
    const std::size_t size = r.count(), numeric = r.count(), classes = r.count();
    if (size < 4 || size % 4 != 0 || classes < 2) r.fail("bad classifier input shape");
    HybridModel m;
    m.numeric_scaler = r.scaler();
    if (m.numeric_scaler.output_width() != numeric) r.fail("scaler width does not match the numeric input");
    const Conv3x3 c1 = r.conv(1, HybridClassifier::kC1);
    const Conv3x3 c2 = r.conv(HybridClassifier::kC1, HybridClassifier::kC2);
    const std::size_t conv_out = HybridClassifier::kC2 * (size / 4) * (size / 4);
    Dense f1 = r.dense(conv_out + numeric);
    Dense f2 = r.dense(f1.out);
    Dense f3 = r.dense(f2.out);
    if (f3.out != classes) r.fail("classifier output width does not match the class count");
    HybridClassifier c(size, numeric, classes, {f1.out, f2.out});
    c.conv(0) = c1;
    c.conv(1) = c2;
    c.dense(0) = std::move(f1);
    c.dense(1) = std::move(f2);
    c.dense(2) = std::move(f3);
    m.classifier = std::move(c);
    return m;
}

inline ThetaModel load_theta_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file " + path);
    return read_theta_model(in);
}

inline void save_model(const std::string& path, const ThetaModel& m, const std::string& comment = {}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file " + path);
    write_model(out, m, comment);
}

}  // namespace nfex::nn
