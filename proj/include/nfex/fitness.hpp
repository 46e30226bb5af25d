#pragma once

// Two-step decision per frame: tune the parameters from the conditions
// (theta' = w * theta with w a product of per-condition factors), then score
// every candidate extractor by a condition-weighted sum of normalized
// metrics and keep the argmax.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "nfex/conditions.hpp"
#include "nfex/dsl.hpp"
#include "nfex/extractors.hpp"
#include "nfex/metrics.hpp"
#include "nfex/params.hpp"

namespace nfex {

inline constexpr double kMinFactor = 0.1;
inline constexpr double kMaxFactor = 10.0;

/// f[param][field][value]; absent entries are 1.
class AdjustmentTable {
public:
    AdjustmentTable() {
        for (auto& p : f_)
            for (auto& fld : p) fld.fill(1.0);
    }

    double get(Param p, Field fld, int value) const { return f_[idx(p)][idx(fld)][value]; }

    void set(Param p, Field fld, int value, double factor) {
        if (!(factor > 0.0) || !std::isfinite(factor)) throw std::invalid_argument("adjustment factor must be positive");
        if (value < 0 || value >= info(fld).n_values) throw std::invalid_argument("condition value out of range");
        f_[idx(p)][idx(fld)][value] = std::clamp(factor, kMinFactor, kMaxFactor);
    }

    /// w_k for one parameter: product over the six fields, in field order.
    double weight(Param p, const EnvConditions& env) const {
        double w = 1.0;
        for (int j = 0; j < kNumFields; ++j) w *= f_[idx(p)][j][env.v[j]];
        return w;
    }

    /// Hand-seeded factors: dark raises NF and lowers ST, fast motion raises
    /// ST and NF, low texture raises NF and lowers ST, high texture raises NF,
    /// reflective raises ST, outdoor and drone add pyramid levels.
    static AdjustmentTable seed() {
        AdjustmentTable t;
        t.set(Param::NF, Field::Lighting, 1, 1.5);
        t.set(Param::ST, Field::Lighting, 1, 0.5);
        t.set(Param::ST, Field::Lighting, 0, 0.8);
        t.set(Param::ST, Field::Motion, 0, 1.5);
        t.set(Param::NF, Field::Motion, 0, 1.2);
        t.set(Param::NF, Field::Texture, 1, 1.5);
        t.set(Param::ST, Field::Texture, 1, 0.6);
        t.set(Param::NF, Field::Texture, 0, 1.4);
        t.set(Param::ST, Field::Reflective, 0, 1.3);
        t.set(Param::NL, Field::Scene, 1, 1.25);
        t.set(Param::NL, Field::Agent, 1, 1.25);
        return t;
    }

    friend bool operator==(const AdjustmentTable&, const AdjustmentTable&) = default;

private:
    template <class E>
    static int idx(E e) {
        return static_cast<int>(e);
    }
    std::array<std::array<std::array<double, 3>, kNumFields>, kNumParams> f_{};
};

/// rho_x = base_x * product over fields of h[x][field][value].
class WeightFunction {
public:
    WeightFunction() {
        base_.fill(1.0);
        for (auto& m : h_)
            for (auto& fld : m) fld.fill(1.0);
    }

    double base(int metric) const { return base_.at(metric); }
    void set_base(int metric, double w) {
        if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("metric weight must be positive");
        base_.at(metric) = w;
    }

    double get(int metric, Field fld, int value) const { return h_.at(metric)[static_cast<int>(fld)][value]; }
    void set(int metric, Field fld, int value, double w) {
        if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("metric weight must be positive");
        if (value < 0 || value >= info(fld).n_values) throw std::invalid_argument("condition value out of range");
        h_.at(metric)[static_cast<int>(fld)][value] = w;
    }

    std::array<double, kNumMetrics> rho(const EnvConditions& env) const {
        std::array<double, kNumMetrics> r{};
        for (int x = 0; x < kNumMetrics; ++x) {
            double w = base_[x];
            for (int j = 0; j < kNumFields; ++j) w *= h_[x][j][env.v[j]];
            r[x] = w;
        }
        return r;
    }

    WeightFunction scaled(double c) const {
        if (!(c > 0.0)) throw std::invalid_argument("weight scale must be positive");
        WeightFunction out = *this;
        for (double& b : out.base_) b *= c;
        return out;
    }

    /// Hand-seeded weights. Indices: 0 texturedness, 1 dissimilarity,
    /// 2 motion, 3 stability, 4 density, 5 distinctiveness, 6 repeatability.
    static WeightFunction seed() {
        WeightFunction w;
        w.set(5, Field::Lighting, 1, 1.5);  // dark: features are hard to detect and match
        w.set(6, Field::Lighting, 1, 1.5);
        w.set(2, Field::Motion, 0, 0.5);    // fast: large displacement is expected, trust it less
        w.set(3, Field::Motion, 0, 1.5);
        w.set(6, Field::Motion, 0, 1.5);
        w.set(5, Field::Reflective, 0, 1.5);  // reflective: false features look alike
        w.set(4, Field::Texture, 1, 1.5);     // low texture: few features, keep the distinct ones
        w.set(5, Field::Texture, 1, 1.5);
        w.set(5, Field::Texture, 0, 1.2);
        return w;
    }

    friend bool operator==(const WeightFunction&, const WeightFunction&) = default;

private:
    std::array<double, kNumMetrics> base_{};
    std::array<std::array<std::array<double, 3>, kNumFields>, kNumMetrics> h_{};
};

namespace detail {

inline double round_half_up(double v) { return std::floor(v + 0.5); }

}  // namespace detail

/// theta'_k = w_k * theta_k with w_k = (product of table factors) * dsl_k,
/// integers rounded half up, everything clamped to the parameter bounds.
inline ParamSet tune_theta(const ParamSet& theta, const EnvConditions& env, const AdjustmentTable& table,
                           const std::array<double, kNumParams>& dsl_factors = {1.0, 1.0, 1.0, 1.0}) {
    validate(theta);
    std::array<double, kNumParams> w{};
    for (int k = 0; k < kNumParams; ++k) w[k] = table.weight(static_cast<Param>(k), env) * dsl_factors[k];
    ParamSet out = theta;
    if (w[0] != 1.0) {
        const double nf = detail::round_half_up(w[0] * theta.nf);
        out.nf = static_cast<int>(std::clamp(nf, 1.0, static_cast<double>(kMaxFeatures)));
    }
    if (w[1] != 1.0) out.sf = std::clamp(w[1] * theta.sf, kMinScaleFactor, kMaxScaleFactor);
    if (w[2] != 1.0) {
        const double nl = detail::round_half_up(w[2] * theta.nl);
        out.nl = static_cast<int>(std::clamp(nl, 1.0, static_cast<double>(kMaxLevels)));
    }
    if (w[3] != 1.0) out.st = std::clamp(w[3] * theta.st, 0.0, kMaxThreshold);
    return out;
}

/// F_metrics = sum_x rho_x * m_x.
inline double score_extractor(const NormalizedMetricVector& m, const EnvConditions& env, const WeightFunction& w) {
    const auto rho = w.rho(env);
    double s = 0.0;
    for (int x = 0; x < kNumMetrics; ++x) s += rho[x] * m.m[x];
    return s;
}

/// Learned F(theta'|E); when absent the mean of the achieved normalized
/// metrics stands in.
using ThetaPredictor = std::function<double(const ParamSet&, const EnvConditions&)>;

inline double fitness_theta(const ParamSet& theta_prime, const EnvConditions& env,
                            const NormalizedMetricVector& achieved, const ThetaPredictor& predictor = {}) {
    if (predictor) return predictor(theta_prime, env);
    double s = 0.0;
    for (double v : achieved.m) s += v;
    return s / kNumMetrics;
}

struct Selection {
    Candidate alpha_star;
    std::array<std::optional<double>, kNumCandidates> scores;  // indexed by candidate order
};

/// Argmax of F_metrics; exact ties go to the earlier candidate in the fixed
/// order (corner-dyn, blob-dyn, corner-def, blob-def).
inline Selection select_alpha(std::span<const std::pair<Candidate, NormalizedMetricVector>> candidates,
                              const EnvConditions& env, const WeightFunction& weights) {
    if (candidates.empty()) throw std::invalid_argument("select_alpha needs at least one candidate");
    Selection sel;
    for (const auto& [c, m] : candidates) {
        const int i = candidate_index(c);
        if (sel.scores[i]) throw std::invalid_argument("candidate listed twice");
        sel.scores[i] = score_extractor(m, env, weights);
    }
    int best = -1;
    for (int i = 0; i < kNumCandidates; ++i) {
        if (sel.scores[i] && (best < 0 || *sel.scores[i] > *sel.scores[best])) best = i;
    }
    sel.alpha_star = kCandidateOrder[best];
    return sel;
}

// ---------------------------------------------------------------------------
// Per-frame loop

namespace decision_flags {
inline constexpr std::uint32_t kDegenerate = 1u << 0;     // every extracted set was empty
inline constexpr std::uint32_t kRetained = 1u << 1;       // incumbent kept instead of argmax
inline constexpr std::uint32_t kShortHistory = 1u << 2;   // some candidate lacked history
inline constexpr std::uint32_t kFastMode = 1u << 3;

inline std::string to_string(std::uint32_t flags) {
    static constexpr std::array<const char*, 4> names = {"degenerate", "retained", "short-history", "fast"};
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (flags & (1u << i)) {
            if (!s.empty()) s += '|';
            s += names[i];
        }
    }
    return s.empty() ? "-" : s;
}
}  // namespace decision_flags

enum class InferenceMode { Exhaustive, Fast };

struct EngineConfig {
    ParamSet base;
    AdjustmentTable table = AdjustmentTable::seed();
    WeightFunction weights = WeightFunction::seed();
    DslProgram program;  // default-constructed program selects corner with no adjustments
    MetricConfig metrics;
    InferenceMode mode = InferenceMode::Exhaustive;
    ThetaPredictor predictor;

    EngineConfig() { program.fallback.select = ExtractorKind::CornerBinary; }
};

struct Decision {
    long frame_id = 0;
    Candidate alpha_star;
    std::array<ParamSet, kNumCandidates> theta_prime{};
    std::array<std::optional<double>, kNumCandidates> scores;
    std::array<std::optional<double>, kNumCandidates> fitness;
    std::array<std::optional<MetricVector>, kNumCandidates> metrics;
    DslDecision dsl;
    std::uint32_t flags = 0;
    int extractions = 0;
};

/// Mutable state carried across frames: per-candidate feature history
/// (oldest first) and the last selected candidate.
struct EngineState {
    std::array<std::deque<FeatureSet>, kNumCandidates> history;
    std::optional<Candidate> incumbent;
    long extractions = 0;
};

struct FrameResult {
    Decision decision;
    FeatureSet features;
};

inline FrameResult run_frame(const GrayImage& img, const EnvConditions& env, long frame_id, const EngineConfig& cfg,
                             EngineState& state) {
    Decision d;
    d.frame_id = frame_id;
    d.dsl = evaluate(cfg.program, env);
    const ParamSet dynamic = tune_theta(cfg.base, env, cfg.table, d.dsl.factors);
    for (int i = 0; i < kNumCandidates; ++i) {
        d.theta_prime[i] = kCandidateOrder[i].mode == ParamMode::Dynamic ? dynamic : cfg.base;
    }

    std::array<bool, kNumCandidates> active{};
    if (cfg.mode == InferenceMode::Exhaustive) {
        active.fill(true);
    } else {
        d.flags |= decision_flags::kFastMode;
        active[candidate_index({d.dsl.selected, ParamMode::Dynamic})] = true;
        if (state.incumbent) active[candidate_index(*state.incumbent)] = true;
    }

    const std::size_t window = static_cast<std::size_t>(std::max(2, cfg.metrics.stability_window));
    std::array<FeatureSet, kNumCandidates> sets;
    std::vector<MetricVector> raw;
    std::vector<int> order;
    bool all_empty = true;
    for (int i = 0; i < kNumCandidates; ++i) {
        auto& hist = state.history[i];
        if (!active[i]) {
            hist.clear();  // a skipped frame breaks the candidate's history
            continue;
        }
        sets[i] = extract(img, kCandidateOrder[i].kind, d.theta_prime[i], frame_id);
        ++d.extractions;
        all_empty &= sets[i].empty();
        hist.push_back(sets[i]);
        while (hist.size() > window) hist.pop_front();
        const std::vector<FeatureSet> h(hist.begin(), hist.end());
        MetricVector mv = evaluate_all(h, img, cfg.metrics);
        mv.extractor = to_string(kCandidateOrder[i]);
        if (mv.flags & metric_flags::kShortHistory) d.flags |= decision_flags::kShortHistory;
        d.metrics[i] = mv;
        raw.push_back(mv);
        order.push_back(i);
    }
    state.extractions += d.extractions;

    const std::vector<NormalizedMetricVector> norm = normalize(raw);
    std::vector<std::pair<Candidate, NormalizedMetricVector>> scored;
    for (std::size_t j = 0; j < order.size(); ++j) {
        const int i = order[j];
        scored.emplace_back(kCandidateOrder[i], norm[j]);
        d.fitness[i] = fitness_theta(d.theta_prime[i], env, norm[j], cfg.predictor);
    }
    const Selection sel = select_alpha(scored, env, cfg.weights);
    d.scores = sel.scores;
    d.alpha_star = sel.alpha_star;

    if (all_empty) {
        d.flags |= decision_flags::kDegenerate;
        if (state.incumbent && *state.incumbent != d.alpha_star) {
            d.alpha_star = *state.incumbent;
            d.flags |= decision_flags::kRetained;
        }
    }
    state.incumbent = d.alpha_star;

    FrameResult out;
    out.decision = d;
    const int win = candidate_index(d.alpha_star);
    out.features = active[win] ? sets[win] : FeatureSet{};
    out.features.frame_id = frame_id;
    return out;
}

inline void write_decision_csv_header(std::ostream& out) {
    out << "frame_id,alpha_star,score_1,score_2,score_3,score_4,nf',sf',nl',st',flags\n";
}

inline void write_decision_csv_row(std::ostream& out, const Decision& d) {
    out << d.frame_id << ',' << to_string(d.alpha_star);
    for (const auto& s : d.scores) out << ',' << (s ? fmt::format("{:.9g}", *s) : std::string("-"));
    const ParamSet& p = d.theta_prime[candidate_index(d.alpha_star)];
    out << fmt::format(",{},{:.9g},{},{:.9g},", p.nf, p.sf, p.nl, p.st) << decision_flags::to_string(d.flags) << '\n';
}

}  // namespace nfex
