#pragma once

// Environmental condition vocabulary and the tunable-parameter names.

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "nfex/params.hpp"

namespace nfex {

enum class Field { Scene, Agent, Lighting, Motion, Reflective, Texture };
inline constexpr int kNumFields = 6;

struct FieldInfo {
    std::string_view name;
    std::array<std::string_view, 3> values;  // unused slots are empty
    int n_values;
};

inline constexpr std::array<FieldInfo, kNumFields> kFields = {{
    {"scene", {"indoor", "outdoor", ""}, 2},
    {"agent", {"car", "drone", "human"}, 3},
    {"lighting", {"bright", "dark", ""}, 2},
    {"motion", {"fast", "slow", ""}, 2},
    {"reflective", {"yes", "no", ""}, 2},
    {"texture", {"high", "low", ""}, 2},
}};

/// Total one-hot width of a full condition vector.
inline constexpr int kConditionOneHotWidth = 13;

inline constexpr const FieldInfo& info(Field f) { return kFields[static_cast<int>(f)]; }

inline std::optional<Field> parse_field(std::string_view s) {
    for (int i = 0; i < kNumFields; ++i) {
        if (kFields[i].name == s) return static_cast<Field>(i);
    }
    return std::nullopt;
}

inline std::optional<int> parse_value(Field f, std::string_view s) {
    const FieldInfo& fi = info(f);
    for (int v = 0; v < fi.n_values; ++v) {
        if (fi.values[v] == s) return v;
    }
    return std::nullopt;
}

/// One value index per field, e.g. lighting = 1 means dark.
struct EnvConditions {
    std::array<int, kNumFields> v{};  // defaults: indoor, car, bright, fast, yes, high

    int operator[](Field f) const { return v[static_cast<int>(f)]; }
    int& operator[](Field f) { return v[static_cast<int>(f)]; }

    friend bool operator==(const EnvConditions&, const EnvConditions&) = default;
};

inline bool is_valid(const EnvConditions& e) {
    for (int i = 0; i < kNumFields; ++i) {
        if (e.v[i] < 0 || e.v[i] >= kFields[i].n_values) return false;
    }
    return true;
}

/// "scene=indoor,agent=car,..." in field order.
inline std::string to_string(const EnvConditions& e) {
    std::string s;
    for (int i = 0; i < kNumFields; ++i) {
        if (i) s += ',';
        s += kFields[i].name;
        s += '=';
        s += kFields[i].values[e.v[i]];
    }
    return s;
}

/// Parses "field=value" pairs separated by commas; fields not mentioned keep
/// the values in `base`.
inline EnvConditions parse_conditions(std::string_view text, EnvConditions base = {}) {
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find(',', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view item = text.substr(pos, end - pos);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        pos = end + 1;
        if (item.empty()) continue;
        const std::size_t eq = item.find('=');
        if (eq == std::string_view::npos) throw std::invalid_argument("condition must be field=value: " + std::string(item));
        const auto f = parse_field(item.substr(0, eq));
        if (!f) throw std::invalid_argument("unknown condition field: " + std::string(item.substr(0, eq)));
        const auto val = parse_value(*f, item.substr(eq + 1));
        if (!val) throw std::invalid_argument("unknown value for " + std::string(info(*f).name) + ": " +
                                              std::string(item.substr(eq + 1)));
        base[*f] = *val;
    }
    return base;
}

/// 13-wide one-hot encoding in field order.
inline std::array<double, kConditionOneHotWidth> one_hot(const EnvConditions& e) {
    std::array<double, kConditionOneHotWidth> out{};
    int offset = 0;
    for (int i = 0; i < kNumFields; ++i) {
        out[offset + e.v[i]] = 1.0;
        offset += kFields[i].n_values;
    }
    return out;
}

enum class Param { NF, SF, NL, ST };
inline constexpr int kNumParams = 4;
inline constexpr std::array<std::string_view, kNumParams> kParamNames = {"nf", "sf", "nl", "st"};

inline constexpr std::string_view to_string(Param p) { return kParamNames[static_cast<int>(p)]; }

inline std::optional<Param> parse_param(std::string_view s) {
    for (int i = 0; i < kNumParams; ++i) {
        if (kParamNames[i] == s) return static_cast<Param>(i);
    }
    return std::nullopt;
}

inline double get(const ParamSet& p, Param which) {
    switch (which) {
        case Param::NF: return p.nf;
        case Param::SF: return p.sf;
        case Param::NL: return p.nl;
        case Param::ST: return p.st;
    }
    return 0.0;
}

}  // namespace nfex
