#pragma once

// Typed knowledge graph of extractors, their operations, conditions and
// parameters, plus its compilation into a rule program.
//
// File format (line oriented, '#' comments after the header):
//   #nfex-kg v1
//   node <id> <extractor|operation|condition|param> [category]
//   edge <src> <USES|SUITED_FOR|SENSITIVE_TO|TUNES> <dst> [strength=<f>] [cond=<field>=<value> factor=<f>] prov="<quote>"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "nfex/conditions.hpp"
#include "nfex/dsl.hpp"
#include "nfex/params.hpp"

namespace nfex {

enum class NodeType { Extractor, Operation, Condition, Param };
enum class Relation { Uses, SuitedFor, SensitiveTo, Tunes };

inline constexpr std::string_view to_string(NodeType t) {
    constexpr std::array<std::string_view, 4> n = {"extractor", "operation", "condition", "param"};
    return n[static_cast<int>(t)];
}

inline constexpr std::string_view to_string(Relation r) {
    constexpr std::array<std::string_view, 4> n = {"USES", "SUITED_FOR", "SENSITIVE_TO", "TUNES"};
    return n[static_cast<int>(r)];
}

inline std::optional<NodeType> parse_node_type(std::string_view s) {
    for (int i = 0; i < 4; ++i)
        if (to_string(static_cast<NodeType>(i)) == s) return static_cast<NodeType>(i);
    return std::nullopt;
}

inline std::optional<Relation> parse_relation(std::string_view s) {
    for (int i = 0; i < 4; ++i)
        if (to_string(static_cast<Relation>(i)) == s) return static_cast<Relation>(i);
    return std::nullopt;
}

/// Operation categories.
inline constexpr std::array<std::string_view, 4> kOperationCategories = {"scale-space", "keypoint-detection",
                                                                          "invariance", "descriptor"};

struct Node {
    std::string id;
    NodeType type = NodeType::Operation;
    std::string category;  // operations only

    friend bool operator==(const Node&, const Node&) = default;
};

struct EdgeCondition {
    FieldTest test;
    double factor = 1.0;

    friend bool operator==(const EdgeCondition&, const EdgeCondition&) = default;
};

struct Edge {
    std::string src;
    Relation rel = Relation::Uses;
    std::string dst;
    std::optional<double> strength;
    std::optional<EdgeCondition> cond;  // TUNES only
    std::string provenance;

    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Condition node ids and the field value each one stands for.
inline const std::map<std::string, FieldTest, std::less<>>& condition_nodes() {
    static const std::map<std::string, FieldTest, std::less<>> m = {
        {"indoor", {Field::Scene, 0}},       {"outdoor", {Field::Scene, 1}},
        {"car", {Field::Agent, 0}},          {"drone", {Field::Agent, 1}},
        {"human", {Field::Agent, 2}},        {"bright", {Field::Lighting, 0}},
        {"dark", {Field::Lighting, 1}},      {"fast", {Field::Motion, 0}},
        {"slow", {Field::Motion, 1}},        {"reflective", {Field::Reflective, 0}},
        {"non-reflective", {Field::Reflective, 1}}, {"high-texture", {Field::Texture, 0}},
        {"low-texture", {Field::Texture, 1}},
    };
    return m;
}

/// Extractor node ids.
inline std::optional<ExtractorKind> extractor_of_node(std::string_view id) {
    if (id == "CornerBinary") return ExtractorKind::CornerBinary;
    if (id == "BlobHistogram") return ExtractorKind::BlobHistogram;
    return std::nullopt;
}

inline std::string_view node_of_extractor(ExtractorKind k) {
    return k == ExtractorKind::CornerBinary ? "CornerBinary" : "BlobHistogram";
}

class KnowledgeGraph {
public:
    void add_node(Node n) {
        if (n.id.empty()) throw std::invalid_argument("node id must not be empty");
        if (find_node(n.id)) throw std::invalid_argument("duplicate node '" + n.id + "'");
        if (n.type == NodeType::Operation &&
            std::find(kOperationCategories.begin(), kOperationCategories.end(), n.category) ==
                kOperationCategories.end()) {
            throw std::invalid_argument("operation node '" + n.id + "' needs a known category");
        }
        if (n.type == NodeType::Condition && !condition_nodes().contains(n.id)) {
            throw std::invalid_argument("unknown condition node '" + n.id + "'");
        }
        if (n.type == NodeType::Extractor && !extractor_of_node(n.id)) {
            throw std::invalid_argument("unknown extractor node '" + n.id + "'");
        }
        if (n.type == NodeType::Param && !parse_param(n.id)) {
            throw std::invalid_argument("unknown parameter node '" + n.id + "'");
        }
        nodes_.push_back(std::move(n));
    }

    void add_edge(Edge e) {
        const Node* s = find_node(e.src);
        const Node* d = find_node(e.dst);
        if (!s || !d) throw std::invalid_argument("edge references unknown node: " + e.src + " -> " + e.dst);
        if (e.rel == Relation::Uses && (s->type != NodeType::Extractor || d->type != NodeType::Operation)) {
            throw std::invalid_argument("USES edges run from an extractor to an operation");
        }
        if (e.rel == Relation::SuitedFor && (s->type != NodeType::Extractor || d->type != NodeType::Condition)) {
            throw std::invalid_argument("SUITED_FOR edges run from an extractor to a condition");
        }
        if (e.rel == Relation::Tunes && s->type != NodeType::Param) {
            throw std::invalid_argument("TUNES edges start at a parameter");
        }
        if (e.cond && e.rel != Relation::Tunes) throw std::invalid_argument("only TUNES edges carry a condition");
        if (e.cond && !(e.cond->factor > 0.0)) throw std::invalid_argument("edge factor must be positive");
        if (e.strength && (*e.strength < 0.0 || *e.strength > 1.0)) {
            throw std::invalid_argument("edge strength must lie in [0, 1]");
        }
        for (const Edge& x : edges_) {
            if (x.src == e.src && x.rel == e.rel && x.dst == e.dst) {
                throw std::invalid_argument("duplicate edge " + e.src + " " + std::string(to_string(e.rel)) + " " + e.dst);
            }
        }
        edges_.push_back(std::move(e));
    }

    const Node* find_node(std::string_view id) const {
        for (const Node& n : nodes_)
            if (n.id == id) return &n;
        return nullptr;
    }

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    /// Edges matching the partial triple, in insertion order.
    std::vector<Edge> query(std::optional<std::string_view> src, Relation rel,
                            std::optional<std::string_view> dst) const {
        std::vector<Edge> out;
        for (const Edge& e : edges_) {
            if (e.rel != rel) continue;
            if (src && e.src != *src) continue;
            if (dst && e.dst != *dst) continue;
            out.push_back(e);
        }
        return out;
    }

    friend bool operator==(const KnowledgeGraph&, const KnowledgeGraph&) = default;

private:
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
};

inline KnowledgeGraph seed_graph() {
    KnowledgeGraph g;
    g.add_node({"CornerBinary", NodeType::Extractor, ""});
    g.add_node({"BlobHistogram", NodeType::Extractor, ""});
    const std::vector<Node> ops = {
        {"image-pyramid", NodeType::Operation, "scale-space"},
        {"fast-segment-test", NodeType::Operation, "keypoint-detection"},
        {"intensity-centroid", NodeType::Operation, "invariance"},
        {"binary-comparisons", NodeType::Operation, "descriptor"},
        {"gaussian-scale-space", NodeType::Operation, "scale-space"},
        {"difference-of-gaussians", NodeType::Operation, "keypoint-detection"},
        {"gradient-orientation", NodeType::Operation, "invariance"},
        {"gradient-histograms", NodeType::Operation, "descriptor"},
    };
    for (const Node& n : ops) g.add_node(n);
    for (const auto& [id, test] : condition_nodes()) g.add_node({id, NodeType::Condition, ""});
    for (std::string_view p : kParamNames) g.add_node({std::string(p), NodeType::Param, ""});

    const std::string uses_prov =
        "For each detected keypoint, a unique descriptor facilitates feature matching across images, with SIFT "
        "employing gradient histograms and a binary descriptor strategy for ORB";
    const std::string inv_prov =
        "SIFT, for example, determines orientation from local image gradients, rendering descriptors rotation "
        "invariant across views. On the other hand, ORB achieves invariance through intensity centroid-based methods.";
    const std::string scale_prov = "determines the interval between successive scales in the image pyramid";
    for (const auto& [ex, op, prov] : std::vector<std::tuple<std::string, std::string, std::string>>{
             {"CornerBinary", "image-pyramid", scale_prov},
             {"CornerBinary", "fast-segment-test", "ORB for its computational efficiency in corner detection"},
             {"CornerBinary", "intensity-centroid", inv_prov},
             {"CornerBinary", "binary-comparisons", uses_prov},
             {"BlobHistogram", "gaussian-scale-space", scale_prov},
             {"BlobHistogram", "difference-of-gaussians", "SIFT for its precision in blob detection"},
             {"BlobHistogram", "gradient-orientation", inv_prov},
             {"BlobHistogram", "gradient-histograms", uses_prov},
         }) {
        g.add_edge({ex, Relation::Uses, op, std::nullopt, std::nullopt, prov});
    }

    const std::string bright_prov = "ORB gives the lowest pose error under bright conditions with good textures";
    g.add_edge({"CornerBinary", Relation::SuitedFor, "bright", 0.9, std::nullopt, bright_prov});
    g.add_edge({"CornerBinary", Relation::SuitedFor, "high-texture", 0.8, std::nullopt, bright_prov});
    g.add_edge({"CornerBinary", Relation::SuitedFor, "car", 0.7, std::nullopt,
                "dynamic optimization significantly enhances ORB's performance, notably in the KITTI sequences"});
    g.add_edge({"BlobHistogram", Relation::SuitedFor, "low-texture", 0.6, std::nullopt,
                "low-textured environments may offer few features to track, requiring careful selection of distinct "
                "features"});
    g.add_edge({"BlobHistogram", Relation::SuitedFor, "indoor", 0.5, std::nullopt,
                "ORB-Dyn is selected for 1366 out of 3638 frames, demonstrating its preference under specific "
                "conditions, followed by SIFT-Dyn with 1124 frames"});

    g.add_edge({"fast-segment-test", Relation::SensitiveTo, "dark", std::nullopt, std::nullopt,
                "too little makes features hard to detect and match"});
    g.add_edge({"fast-segment-test", Relation::SensitiveTo, "reflective", std::nullopt, std::nullopt,
                "Reflective surfaces can create false features, affecting map accuracy"});
    g.add_edge({"image-pyramid", Relation::SensitiveTo, "fast", std::nullopt, std::nullopt,
                "Motion can blur and displace critical features, complicating their tracking and matching across "
                "frames"});
    g.add_edge({"BlobHistogram", Relation::SensitiveTo, "car", std::nullopt, std::nullopt,
                "SIFT fails in its default mode for KITTI and shows limited improvement even when dynamically "
                "optimized"});

    const std::string nf_prov = "ensuring enough features are detected to represent the scene accurately without "
                                "overwhelming the processing capacity";
    const std::string sf_prov = "determines the interval between successive scales in the image pyramid";
    const std::string nl_prov = "adjusts for features across object sizes";
    const std::string st_prov = "ensure distinct, reliable keypoints for matching across images";
    for (const auto& [p, op, prov] : std::vector<std::tuple<std::string, std::string, std::string>>{
             {"nf", "fast-segment-test", nf_prov},
             {"nf", "difference-of-gaussians", nf_prov},
             {"sf", "image-pyramid", sf_prov},
             {"sf", "gaussian-scale-space", sf_prov},
             {"nl", "image-pyramid", nl_prov},
             {"nl", "gaussian-scale-space", nl_prov},
             {"st", "fast-segment-test", st_prov},
             {"st", "difference-of-gaussians", st_prov},
         }) {
        g.add_edge({p, Relation::Tunes, op, std::nullopt, std::nullopt, prov});
    }
    return g;
}

/// Select rules from SUITED_FOR edges with strength >= 0.5 (strongest first,
/// ties in file order), then one adjust rule per condition-annotated TUNES
/// edge. The default selects the extractor with the most SUITED_FOR edges.
inline DslProgram compile_from_graph(const KnowledgeGraph& kg) {
    DslProgram prog;
    std::vector<const Edge*> suited;
    int corner_edges = 0, blob_edges = 0;
    for (const Edge& e : kg.edges()) {
        if (e.rel != Relation::SuitedFor) continue;
        (extractor_of_node(e.src) == ExtractorKind::CornerBinary ? corner_edges : blob_edges)++;
        if (e.strength.value_or(0.0) >= 0.5) suited.push_back(&e);
    }
    std::stable_sort(suited.begin(), suited.end(),
                     [](const Edge* a, const Edge* b) { return a->strength.value_or(0.0) > b->strength.value_or(0.0); });
    for (const Edge* e : suited) {
        Rule r;
        r.pattern = {condition_nodes().find(e->dst)->second};
        r.select = extractor_of_node(e->src);
        prog.rules.push_back(r);
    }
    for (const Edge& e : kg.edges()) {
        if (e.rel != Relation::Tunes || !e.cond) continue;
        Rule r;
        r.pattern = {e.cond->test};
        r.adjusts = {{*parse_param(e.src), e.cond->factor}};
        prog.rules.push_back(r);
    }
    prog.fallback.select = blob_edges > corner_edges ? ExtractorKind::BlobHistogram : ExtractorKind::CornerBinary;
    return prog;
}

// ---------------------------------------------------------------------------
// Text I/O

namespace detail {

inline std::string kg_number(double v) { return format_number(v); }

inline std::string escape_quote(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out;
}

}  // namespace detail

inline void write_graph(std::ostream& out, const KnowledgeGraph& kg) {
    out << "#nfex-kg v1\n";
    for (const Node& n : kg.nodes()) {
        out << "node " << n.id << ' ' << to_string(n.type);
        if (!n.category.empty()) out << ' ' << n.category;
        out << '\n';
    }
    for (const Edge& e : kg.edges()) {
        out << "edge " << e.src << ' ' << to_string(e.rel) << ' ' << e.dst;
        if (e.strength) out << " strength=" << detail::kg_number(*e.strength);
        if (e.cond) {
            out << " cond=" << info(e.cond->test.field).name << '=' << info(e.cond->test.field).values[e.cond->test.value]
                << " factor=" << detail::kg_number(e.cond->factor);
        }
        out << " prov=\"" << detail::escape_quote(e.provenance) << "\"\n";
    }
}

inline KnowledgeGraph read_graph(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("#nfex-kg v1", 0) != 0) {
        throw std::runtime_error("not a knowledge-graph file (missing '#nfex-kg v1' header)");
    }
    KnowledgeGraph kg;
    int lineno = 1;
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error("knowledge graph line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        // Split off the quoted provenance before tokenizing.
        std::string prov;
        bool has_prov = false;
        const std::size_t pq = line.find("prov=\"");
        std::string head = line;
        if (pq != std::string::npos) {
            std::size_t i = pq + 6;
            bool closed = false;
            for (; i < line.size(); ++i) {
                if (line[i] == '\\' && i + 1 < line.size()) {
                    prov += line[++i];
                } else if (line[i] == '"') {
                    closed = true;
                    break;
                } else {
                    prov += line[i];
                }
            }
            if (!closed) fail("unterminated provenance string");
            has_prov = true;
            head = line.substr(0, pq) + line.substr(i + 1);
        }
        std::istringstream ls(head);
        std::string kw;
        ls >> kw;
        try {
            if (kw == "node") {
                std::string id, type, category;
                ls >> id >> type;
                ls >> category;
                const auto t = parse_node_type(type);
                if (id.empty() || !t) fail("malformed node line");
                kg.add_node({id, *t, category});
            } else if (kw == "edge") {
                Edge e;
                std::string rel;
                ls >> e.src >> rel >> e.dst;
                const auto r = parse_relation(rel);
                if (e.dst.empty() || !r) fail("malformed edge line");
                e.rel = *r;
                std::string kv;
                std::optional<FieldTest> cond;
                std::optional<double> factor;
                while (ls >> kv) {
                    const std::size_t eq = kv.find('=');
                    if (eq == std::string::npos) fail("expected key=value, got '" + kv + "'");
                    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
                    if (key == "strength") {
                        e.strength = std::stod(val);
                    } else if (key == "factor") {
                        factor = std::stod(val);
                    } else if (key == "cond") {
                        const std::size_t e2 = val.find('=');
                        const auto f = e2 == std::string::npos ? std::nullopt : parse_field(val.substr(0, e2));
                        const auto v = f ? parse_value(*f, val.substr(e2 + 1)) : std::nullopt;
                        if (!v) fail("bad condition '" + val + "'");
                        cond = FieldTest{*f, *v};
                    } else {
                        fail("unknown edge attribute '" + key + "'");
                    }
                }
                if (cond.has_value() != factor.has_value()) fail("cond= and factor= must appear together");
                if (cond) e.cond = EdgeCondition{*cond, *factor};
                if (!has_prov) fail("edge is missing its provenance");
                e.provenance = prov;
                kg.add_edge(std::move(e));
            } else {
                fail("unknown record '" + kw + "'");
            }
        } catch (const std::logic_error& ex) {
            fail(ex.what());
        }
    }
    return kg;
}

inline KnowledgeGraph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open knowledge graph '" + path + "'");
    return read_graph(in);
}

inline void save_graph(const std::string& path, const KnowledgeGraph& kg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write knowledge graph '" + path + "'");
    write_graph(out, kg);
}

}  // namespace nfex
