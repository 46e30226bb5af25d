#pragma once

// Condition-to-decision rule language.
//
//   program      := rule* default_rule
//   rule         := "when" pattern "{" action (";" action)* "}"
//   pattern      := test ("," test)* | "*"
//   test         := FIELD "=" VALUE
//   action       := "select" EXTRACTOR | "adjust" PARAM "*" NUMBER
//   default_rule := "default" "{" action (";" action)* "}"
//
// '#' starts a comment that runs to the end of the line. Every matching rule
// contributes its adjust factors (they multiply); the first matching select
// wins, and the default rule's select is the fallback.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "nfex/conditions.hpp"
#include "nfex/params.hpp"

namespace nfex {

struct FieldTest {
    Field field = Field::Scene;
    int value = 0;

    friend bool operator==(const FieldTest&, const FieldTest&) = default;
};

struct Adjust {
    Param param = Param::NF;
    double factor = 1.0;

    friend bool operator==(const Adjust&, const Adjust&) = default;
};

struct Rule {
    std::vector<FieldTest> pattern;  // empty = wildcard
    std::optional<ExtractorKind> select;
    std::vector<Adjust> adjusts;

    bool matches(const EnvConditions& env) const {
        return std::all_of(pattern.begin(), pattern.end(), [&](const FieldTest& t) { return env[t.field] == t.value; });
    }

    friend bool operator==(const Rule&, const Rule&) = default;
};

struct DslProgram {
    std::vector<Rule> rules;
    Rule fallback;  // the default rule; wildcard pattern, always has a select

    friend bool operator==(const DslProgram&, const DslProgram&) = default;
};

enum class DslErrorKind { Lexical, Parse, Semantic };

class DslError : public std::runtime_error {
public:
    DslError(DslErrorKind kind, int line, int column, std::string message, std::vector<std::string> expected = {})
        : std::runtime_error(format(kind, line, column, message, expected)),
          kind_(kind),
          line_(line),
          column_(column),
          message_(std::move(message)),
          expected_(std::move(expected)) {}

    DslErrorKind kind() const noexcept { return kind_; }
    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }
    const std::string& message() const noexcept { return message_; }
    const std::vector<std::string>& expected() const noexcept { return expected_; }

private:
    static std::string format(DslErrorKind kind, int line, int column, const std::string& message,
                              const std::vector<std::string>& expected) {
        static constexpr std::array<const char*, 3> names = {"lexical error", "parse error", "semantic error"};
        std::string s = std::to_string(line) + ":" + std::to_string(column) + ": " +
                        names[static_cast<int>(kind)] + ": " + message;
        if (!expected.empty()) {
            s += " (expected ";
            for (std::size_t i = 0; i < expected.size(); ++i) s += (i ? ", " : "") + expected[i];
            s += ")";
        }
        return s;
    }

    DslErrorKind kind_;
    int line_;
    int column_;
    std::string message_;
    std::vector<std::string> expected_;
};

namespace detail {

enum class Tok { Ident, Number, LBrace, RBrace, Semi, Comma, Equals, Star, End };

struct Token {
    Tok type = Tok::End;
    std::string text;
    int line = 1;
    int column = 1;
};

inline std::string describe(Tok t) {
    switch (t) {
        case Tok::Ident: return "identifier";
        case Tok::Number: return "number";
        case Tok::LBrace: return "'{'";
        case Tok::RBrace: return "'}'";
        case Tok::Semi: return "';'";
        case Tok::Comma: return "','";
        case Tok::Equals: return "'='";
        case Tok::Star: return "'*'";
        case Tok::End: return "end of input";
    }
    return "?";
}

inline std::vector<Token> lex(std::string_view src) {
    std::vector<Token> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n; ++k, ++i) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    while (i < src.size()) {
        const char c = src[i];
        if (c == '#') {
            while (i < src.size() && src[i] != '\n') advance(1);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        Token t;
        t.line = line;
        t.column = col;
        auto single = [&](Tok type) {
            t.type = type;
            t.text = std::string(1, c);
            out.push_back(t);
            advance(1);
        };
        switch (c) {
            case '{': single(Tok::LBrace); continue;
            case '}': single(Tok::RBrace); continue;
            case ';': single(Tok::Semi); continue;
            case ',': single(Tok::Comma); continue;
            case '=': single(Tok::Equals); continue;
            case '*': single(Tok::Star); continue;
            default: break;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_' || src[j] == '-')) ++j;
            t.type = Tok::Ident;
            t.text = std::string(src.substr(i, j - i));
            out.push_back(t);
            advance(j - i);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '+' || c == '-') {
            std::size_t j = i;
            if (src[j] == '+' || src[j] == '-') ++j;
            const std::size_t digits_start = j;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            if (j < src.size() && src[j] == '.') {
                ++j;
                while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            }
            const bool has_digit = std::any_of(src.begin() + static_cast<long>(digits_start),
                                               src.begin() + static_cast<long>(j),
                                               [](char d) { return std::isdigit(static_cast<unsigned char>(d)); });
            if (!has_digit) throw DslError(DslErrorKind::Lexical, line, col, "malformed number");
            if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
                if (k >= src.size() || !std::isdigit(static_cast<unsigned char>(src[k]))) {
                    throw DslError(DslErrorKind::Lexical, line, col, "malformed number exponent");
                }
                while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
                j = k;
            }
            t.type = Tok::Number;
            t.text = std::string(src.substr(i, j - i));
            out.push_back(t);
            advance(j - i);
            continue;
        }
        throw DslError(DslErrorKind::Lexical, line, col, std::string("unexpected character '") + c + "'");
    }
    Token end;
    end.line = line;
    end.column = col;
    out.push_back(end);
    return out;
}

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    DslProgram program() {
        DslProgram prog;
        while (true) {
            const Token& t = peek();
            if (is_keyword(t, "when")) {
                next();
                prog.rules.push_back(rule_body(pattern()));
            } else if (is_keyword(t, "default")) {
                const Token kw = next();
                prog.fallback = rule_body({});
                if (!prog.fallback.select) {
                    throw DslError(DslErrorKind::Semantic, kw.line, kw.column, "default rule must select an extractor");
                }
                const Token& tail = peek();
                if (tail.type != Tok::End) {
                    throw DslError(DslErrorKind::Parse, tail.line, tail.column,
                                   "default rule must be the last rule, found '" + tail.text + "'", {"end of input"});
                }
                return prog;
            } else if (t.type == Tok::End) {
                throw DslError(DslErrorKind::Parse, t.line, t.column, "missing default rule", {"'when'", "'default'"});
            } else {
                throw DslError(DslErrorKind::Parse, t.line, t.column, "unexpected '" + t.text + "'",
                               {"'when'", "'default'"});
            }
        }
    }

private:
    static bool is_keyword(const Token& t, std::string_view kw) { return t.type == Tok::Ident && t.text == kw; }

    const Token& peek() const { return toks_[pos_]; }
    Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    Token expect(Tok type, std::vector<std::string> expected = {}) {
        const Token& t = peek();
        if (t.type != type) {
            if (expected.empty()) expected.push_back(describe(type));
            throw DslError(DslErrorKind::Parse, t.line, t.column,
                           "unexpected " + (t.type == Tok::End ? std::string("end of input") : "'" + t.text + "'"),
                           std::move(expected));
        }
        return next();
    }

    std::vector<FieldTest> pattern() {
        if (peek().type == Tok::Star) {
            next();
            return {};
        }
        std::vector<FieldTest> tests;
        std::set<Field> seen;
        while (true) {
            const Token ft = expect(Tok::Ident, {"condition field", "'*'"});
            const auto field = parse_field(ft.text);
            if (!field) throw DslError(DslErrorKind::Semantic, ft.line, ft.column, "unknown condition field '" + ft.text + "'");
            if (!seen.insert(*field).second) {
                throw DslError(DslErrorKind::Semantic, ft.line, ft.column, "field '" + ft.text + "' tested twice");
            }
            expect(Tok::Equals);
            const Token vt = expect(Tok::Ident, {"condition value"});
            const auto value = parse_value(*field, vt.text);
            if (!value) {
                throw DslError(DslErrorKind::Semantic, vt.line, vt.column,
                               "unknown value '" + vt.text + "' for field '" + ft.text + "'");
            }
            tests.push_back({*field, *value});
            if (peek().type != Tok::Comma) break;
            next();
        }
        return tests;
    }

    Rule rule_body(std::vector<FieldTest> pat) {
        Rule r;
        r.pattern = std::move(pat);
        expect(Tok::LBrace);
        while (true) {
            action(r);
            const Token& t = peek();
            if (t.type == Tok::Semi) {
                next();
                continue;
            }
            expect(Tok::RBrace, {"';'", "'}'"});
            return r;
        }
    }

    void action(Rule& r) {
        const Token kw = expect(Tok::Ident, {"'select'", "'adjust'"});
        if (kw.text == "select") {
            const Token et = expect(Tok::Ident, {"extractor"});
            const auto kind = parse_extractor(et.text);
            if (!kind || (et.text != "corner" && et.text != "blob")) {
                throw DslError(DslErrorKind::Semantic, et.line, et.column, "unknown extractor '" + et.text + "'");
            }
            if (r.select) throw DslError(DslErrorKind::Semantic, kw.line, kw.column, "rule selects more than once");
            r.select = *kind;
        } else if (kw.text == "adjust") {
            const Token pt = expect(Tok::Ident, {"parameter"});
            const auto param = parse_param(pt.text);
            if (!param) throw DslError(DslErrorKind::Semantic, pt.line, pt.column, "unknown parameter '" + pt.text + "'");
            expect(Tok::Star);
            const Token nt = expect(Tok::Number);
            double f = 0.0;
            const char* first = nt.text.data() + (nt.text.front() == '+' ? 1 : 0);
            const auto res = std::from_chars(first, nt.text.data() + nt.text.size(), f);
            if (res.ec == std::errc::result_out_of_range || !std::isfinite(f)) {
                throw DslError(DslErrorKind::Semantic, nt.line, nt.column, "factor out of range");
            }
            if (!(f > 0.0)) throw DslError(DslErrorKind::Semantic, nt.line, nt.column, "factor must be positive");
            r.adjusts.push_back({*param, f});
        } else {
            throw DslError(DslErrorKind::Parse, kw.line, kw.column, "unknown action '" + kw.text + "'",
                           {"'select'", "'adjust'"});
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string format_rule_body(const Rule& r) {
    std::string s = "{ ";
    bool first = true;
    for (const Adjust& a : r.adjusts) {
        if (!first) s += "; ";
        s += "adjust " + std::string(to_string(a.param)) + " * " + format_number(a.factor);
        first = false;
    }
    if (r.select) {
        if (!first) s += "; ";
        s += "select " + std::string(to_string(*r.select));
    }
    return s + " }";
}

}  // namespace detail

inline DslProgram parse_dsl(std::string_view text) { return detail::Parser(detail::lex(text)).program(); }

/// Canonical source: one rule per line, adjusts before the select.
inline std::string print_dsl(const DslProgram& prog) {
    std::string out;
    for (const Rule& r : prog.rules) {
        out += "when ";
        if (r.pattern.empty()) {
            out += "*";
        } else {
            for (std::size_t i = 0; i < r.pattern.size(); ++i) {
                if (i) out += ", ";
                out += std::string(info(r.pattern[i].field).name) + "=" +
                       std::string(info(r.pattern[i].field).values[r.pattern[i].value]);
            }
        }
        out += " " + detail::format_rule_body(r) + "\n";
    }
    out += "default " + detail::format_rule_body(prog.fallback) + "\n";
    return out;
}

struct DslDecision {
    ExtractorKind selected = ExtractorKind::CornerBinary;
    std::array<double, kNumParams> factors{1.0, 1.0, 1.0, 1.0};
    int selecting_rule = -1;  // index into rules, -1 for the default rule
};

inline DslDecision evaluate(const DslProgram& prog, const EnvConditions& env) {
    if (!is_valid(env)) throw std::invalid_argument("condition vector has an out-of-range value");
    DslDecision d;
    bool selected = false;
    auto apply = [&](const Rule& r, int index) {
        for (const Adjust& a : r.adjusts) d.factors[static_cast<int>(a.param)] *= a.factor;
        if (r.select && !selected) {
            d.selected = *r.select;
            d.selecting_rule = index;
            selected = true;
        }
    };
    for (std::size_t i = 0; i < prog.rules.size(); ++i) {
        if (prog.rules[i].matches(env)) apply(prog.rules[i], static_cast<int>(i));
    }
    apply(prog.fallback, -1);
    return d;
}

}  // namespace nfex
