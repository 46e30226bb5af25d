#pragma once

// Extractor identity and the shared tunable parameter set.

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nfex {

/// NF / SF / NL / ST. One parameter set drives both extractor families.
struct ParamSet {
    int nf = 500;      // max feature count
    double sf = 1.2;   // pyramid scale factor
    int nl = 8;        // pyramid levels
    double st = 20.0;  // selectivity threshold (FAST intensity units)

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

inline constexpr int kMaxFeatures = 100000;
inline constexpr int kMaxLevels = 16;
inline constexpr double kMinScaleFactor = 1.01;
inline constexpr double kMaxScaleFactor = 4.0;
inline constexpr double kMaxThreshold = 255.0;

inline bool is_valid(const ParamSet& p) {
    return p.nf >= 1 && p.nf <= kMaxFeatures && p.sf > 1.0 && p.sf <= kMaxScaleFactor &&
           p.nl >= 1 && p.nl <= kMaxLevels && p.st >= 0.0 && p.st <= kMaxThreshold;
}

inline void validate(const ParamSet& p) {
    if (!is_valid(p)) {
        throw std::invalid_argument("parameter set out of bounds (nf>=1, 1<sf<=4, 1<=nl<=16, 0<=st<=255)");
    }
}

enum class ExtractorKind { CornerBinary, BlobHistogram };
enum class ParamMode { Dynamic, Default };

inline constexpr std::string_view to_string(ExtractorKind k) {
    return k == ExtractorKind::CornerBinary ? "corner" : "blob";
}

inline std::optional<ExtractorKind> parse_extractor(std::string_view s) {
    if (s == "corner" || s == "CornerBinary") return ExtractorKind::CornerBinary;
    if (s == "blob" || s == "BlobHistogram") return ExtractorKind::BlobHistogram;
    return std::nullopt;
}

/// One member of the candidate set: an extractor family crossed with a
/// parameter mode (default parameters or condition-tuned ones).
struct Candidate {
    ExtractorKind kind = ExtractorKind::CornerBinary;
    ParamMode mode = ParamMode::Dynamic;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

inline constexpr int kNumCandidates = 4;

/// Canonical candidate order; also the tie-break order for selection.
inline constexpr std::array<Candidate, kNumCandidates> kCandidateOrder = {{
    {ExtractorKind::CornerBinary, ParamMode::Dynamic},
    {ExtractorKind::BlobHistogram, ParamMode::Dynamic},
    {ExtractorKind::CornerBinary, ParamMode::Default},
    {ExtractorKind::BlobHistogram, ParamMode::Default},
}};

inline constexpr int candidate_index(Candidate c) {
    for (int i = 0; i < kNumCandidates; ++i) {
        if (kCandidateOrder[i] == c) return i;
    }
    return -1;
}

inline std::string to_string(Candidate c) {
    std::string s(to_string(c.kind));
    s += c.mode == ParamMode::Dynamic ? "-dyn" : "-def";
    return s;
}

inline std::optional<Candidate> parse_candidate(std::string_view s) {
    for (const Candidate& c : kCandidateOrder) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

}  // namespace nfex
