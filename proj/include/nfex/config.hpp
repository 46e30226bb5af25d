#pragma once

// Run configuration: key = value files, table files for the adjustment
// factors and metric weights, and the provenance header written at the top
// of every CLI output.
//
// Config keys (flags of the same name override the file):
//   program         DSL file; empty compiles the knowledge graph
//   graph           knowledge graph file; empty uses the seed graph
//   model           theta model file; empty uses the metric proxy
//   adjust_table    adjustment table file; empty uses the seed table
//   weight_table    metric weight file; empty uses the seed weights
//   nf sf nl st     default extractor parameters
//   mode            exhaustive | fast
//   stability_window
//   seed
//   epochs batch learning_rate   training
//   output          output directory

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "nfex/conditions.hpp"
#include "nfex/dsl.hpp"
#include "nfex/fitness.hpp"
#include "nfex/knowledge_graph.hpp"
#include "nfex/neural.hpp"

#ifndef NFEX_VERSION
#define NFEX_VERSION "0.0.0"
#endif

namespace nfex {

inline constexpr std::string_view kVersion = NFEX_VERSION;

/// Bad configuration or usage; the CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return {};
    return std::string(s.substr(a, s.find_last_not_of(" \t\r") - a + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(fmt::format("{}: bad number '{}'", key, v));
    return out;
}

}  // namespace detail

struct RunConfig {
    std::string program;
    std::string graph;
    std::string model;
    std::string adjust_table;
    std::string weight_table;
    ParamSet base;
    InferenceMode mode = InferenceMode::Exhaustive;
    int stability_window = MetricConfig{}.stability_window;
    std::uint64_t seed = 1;
    int epochs = 200;
    int batch = 8;
    double learning_rate = 1e-4;
    std::string output = "out";

    static const std::vector<std::string>& keys() {
        static const std::vector<std::string> k = {"program", "graph", "model", "adjust_table", "weight_table",
                                                   "nf", "sf", "nl", "st", "mode", "stability_window", "seed",
                                                   "epochs", "batch", "learning_rate", "output"};
        return k;
    }

    void set(const std::string& key, const std::string& value) {
        using detail::parse_number;
        if (key == "program") program = value;
        else if (key == "graph") graph = value;
        else if (key == "model") model = value;
        else if (key == "adjust_table") adjust_table = value;
        else if (key == "weight_table") weight_table = value;
        else if (key == "nf") base.nf = parse_number<int>(key, value);
        else if (key == "sf") base.sf = parse_number<double>(key, value);
        else if (key == "nl") base.nl = parse_number<int>(key, value);
        else if (key == "st") base.st = parse_number<double>(key, value);
        else if (key == "mode") {
            if (value == "exhaustive") mode = InferenceMode::Exhaustive;
            else if (value == "fast") mode = InferenceMode::Fast;
            else throw ConfigError("mode must be exhaustive or fast, got '" + value + "'");
        } else if (key == "stability_window") stability_window = parse_number<int>(key, value);
        else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
        else if (key == "epochs") epochs = parse_number<int>(key, value);
        else if (key == "batch") batch = parse_number<int>(key, value);
        else if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
        else if (key == "output") output = value;
        else throw ConfigError("unknown config key '" + key + "'");
    }

    std::string get(const std::string& key) const {
        if (key == "program") return program;
        if (key == "graph") return graph;
        if (key == "model") return model;
        if (key == "adjust_table") return adjust_table;
        if (key == "weight_table") return weight_table;
        if (key == "nf") return std::to_string(base.nf);
        if (key == "sf") return detail::format_number(base.sf);
        if (key == "nl") return std::to_string(base.nl);
        if (key == "st") return detail::format_number(base.st);
        if (key == "mode") return mode == InferenceMode::Fast ? "fast" : "exhaustive";
        if (key == "stability_window") return std::to_string(stability_window);
        if (key == "seed") return std::to_string(seed);
        if (key == "epochs") return std::to_string(epochs);
        if (key == "batch") return std::to_string(batch);
        if (key == "learning_rate") return detail::format_number(learning_rate);
        if (key == "output") return output;
        throw ConfigError("unknown config key '" + key + "'");
    }

    void validate() const {
        if (!is_valid(base)) throw ConfigError("extractor parameters out of range");
        if (stability_window < 1) throw ConfigError("stability_window must be >= 1");
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
        if (batch < 1) throw ConfigError("batch must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    }

    /// Every key in schema order except `output`, one `key=value` per line.
    /// The destination directory does not change the digest.
    std::string canonical() const {
        std::string s;
        for (const std::string& k : keys())
            if (k != "output") s += k + "=" + get(k) + "\n";
        return s;
    }

    std::string digest() const { return fmt::format("{:016x}", fnv1a64(canonical())); }
};

/// Applies `key = value` lines on top of `cfg`; '#' starts a comment.
inline RunConfig read_config(std::istream& in, RunConfig cfg = {}) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected key = value", lineno));
        try {
            cfg.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("config line {}: {}", lineno, e.what()));
        }
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path, RunConfig cfg = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return read_config(in, cfg);
}

/// "nfex <version> seed=<seed> config=<digest>", written as a comment line.
inline std::string provenance(const RunConfig& cfg) {
    return fmt::format("nfex {} seed={} config={}", kVersion, cfg.seed, cfg.digest());
}

// ---------------------------------------------------------------------------
// Table files
//
//   #nfex-table v1 kind=adjust
//   nf lighting=dark 1.5          (param condition factor)
//
//   #nfex-table v1 kind=weights
//   base m2 1.0                   (base weight of a metric)
//   m6 lighting=dark 1.5          (metric condition factor)
//
// Entries not listed are 1.

namespace detail {

inline std::pair<Field, int> parse_condition_token(const std::string& tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("expected field=value, got '" + tok + "'");
    const auto f = parse_field(tok.substr(0, eq));
    if (!f) throw ConfigError("unknown condition field '" + tok.substr(0, eq) + "'");
    const auto v = parse_value(*f, tok.substr(eq + 1));
    if (!v) throw ConfigError("unknown value in '" + tok + "'");
    return {*f, *v};
}

inline int parse_metric_token(const std::string& tok) {
    if (tok.size() == 2 && tok[0] == 'm' && tok[1] >= '1' && tok[1] < '1' + kNumMetrics) return tok[1] - '1';
    throw ConfigError("unknown metric '" + tok + "' (expected m1..m7)");
}

/// Yields the tokens of each non-comment line after checking the header.
inline std::vector<std::vector<std::string>> table_lines(std::istream& in, std::string_view kind) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != fmt::format("#nfex-table v1 kind={}", kind)) {
        throw ConfigError(fmt::format("table file: expected '#nfex-table v1 kind={}' header", kind));
    }
    std::vector<std::vector<std::string>> out;
    while (std::getline(in, line)) {
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::vector<std::string> toks;
        for (std::string t; ls >> t;) toks.push_back(t);
        if (!toks.empty()) out.push_back(std::move(toks));
    }
    return out;
}

inline double parse_factor(const std::string& tok) {
    const double v = parse_number<double>("factor", tok);
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("factor must be positive, got '" + tok + "'");
    return v;
}

}  // namespace detail

inline void write_adjustment_table(std::ostream& out, const AdjustmentTable& t) {
    out << "#nfex-table v1 kind=adjust\n";
    for (int p = 0; p < kNumParams; ++p)
        for (int j = 0; j < kNumFields; ++j)
            for (int v = 0; v < kFields[j].n_values; ++v) {
                const double f = t.get(static_cast<Param>(p), static_cast<Field>(j), v);
                if (f != 1.0) out << kParamNames[p] << ' ' << kFields[j].name << '=' << kFields[j].values[v] << ' ' << detail::format_number(f) << '\n';
            }
}

inline AdjustmentTable read_adjustment_table(std::istream& in) {
    AdjustmentTable t;
    for (const auto& toks : detail::table_lines(in, "adjust")) {
        if (toks.size() != 3) throw ConfigError("adjust table: expected 'param field=value factor'");
        const auto p = parse_param(toks[0]);
        if (!p) throw ConfigError("adjust table: unknown parameter '" + toks[0] + "'");
        const auto [f, v] = detail::parse_condition_token(toks[1]);
        t.set(*p, f, v, detail::parse_factor(toks[2]));
    }
    return t;
}

inline void write_weight_table(std::ostream& out, const WeightFunction& w) {
    out << "#nfex-table v1 kind=weights\n";
    for (int x = 0; x < kNumMetrics; ++x)
        if (w.base(x) != 1.0) out << "base m" << x + 1 << ' ' << detail::format_number(w.base(x)) << '\n';
    for (int x = 0; x < kNumMetrics; ++x)
        for (int j = 0; j < kNumFields; ++j)
            for (int v = 0; v < kFields[j].n_values; ++v) {
                const double f = w.get(x, static_cast<Field>(j), v);
                if (f != 1.0) out << 'm' << x + 1 << ' ' << kFields[j].name << '=' << kFields[j].values[v] << ' ' << detail::format_number(f) << '\n';
            }
}

inline WeightFunction read_weight_table(std::istream& in) {
    WeightFunction w;
    for (const auto& toks : detail::table_lines(in, "weights")) {
        if (toks.size() != 3) throw ConfigError("weight table: expected three fields per line");
        if (toks[0] == "base") {
            w.set_base(detail::parse_metric_token(toks[1]), detail::parse_factor(toks[2]));
        } else {
            const auto [f, v] = detail::parse_condition_token(toks[1]);
            w.set(detail::parse_metric_token(toks[0]), f, v, detail::parse_factor(toks[2]));
        }
    }
    return w;
}

namespace detail {

inline std::string slurp(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + what + " " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

/// Loads every file the config references. Parse failures in referenced
/// files are configuration errors.
inline EngineConfig build_engine(const RunConfig& rc) {
    rc.validate();
    EngineConfig cfg;
    cfg.base = rc.base;
    cfg.mode = rc.mode;
    cfg.metrics.stability_window = rc.stability_window;
    try {
        if (!rc.program.empty()) {
            cfg.program = parse_dsl(detail::slurp(rc.program, "program"));
        } else {
            KnowledgeGraph kg = seed_graph();
            if (!rc.graph.empty()) {
                std::istringstream in(detail::slurp(rc.graph, "graph"));
                kg = read_graph(in);
            }
            cfg.program = compile_from_graph(kg);
        }
        if (!rc.adjust_table.empty()) {
            std::istringstream in(detail::slurp(rc.adjust_table, "adjust table"));
            cfg.table = read_adjustment_table(in);
        }
        if (!rc.weight_table.empty()) {
            std::istringstream in(detail::slurp(rc.weight_table, "weight table"));
            cfg.weights = read_weight_table(in);
        }
        if (!rc.model.empty()) {
            std::istringstream in(detail::slurp(rc.model, "model"));
            auto model = std::make_shared<nn::ThetaModel>(nn::read_theta_model(in));
            cfg.predictor = [model](const ParamSet& t, const EnvConditions& e) { return model->predict(t, e); };
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

}  // namespace nfex
