#include "wavecal/config.hpp"

#include "wavecal/errors.hpp"
#include "wavecal/csv.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace wavecal::config {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Strip a trailing comment that is not inside a string literal.
std::string_view strip_comment(std::string_view line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '\\' && in_string) {
            ++i;
        } else if (c == '"') {
            in_string = !in_string;
        } else if (c == '#' && !in_string) {
            return line.substr(0, i);
        }
    }
    return line;
}

bool valid_name(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
    }
    return true;
}

struct LineParser {
    std::string_view text;
    std::size_t pos = 0;
    const std::string& where;

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where + ": " + msg); }

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    std::string parse_string() {
        ++pos; // opening quote
        std::string out;
        while (pos < text.size() && text[pos] != '"') {
            char c = text[pos++];
            if (c == '\\') {
                if (pos >= text.size()) fail("dangling escape");
                const char e = text[pos++];
                switch (e) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                default: fail(std::string("unknown escape \\") + e);
                }
            } else {
                out.push_back(c);
            }
        }
        if (pos >= text.size()) fail("unterminated string");
        ++pos;
        return out;
    }

    double parse_number() {
        const std::size_t start = pos;
        while (pos < text.size() && text[pos] != ',' && text[pos] != ']' &&
               !std::isspace(static_cast<unsigned char>(text[pos])))
            ++pos;
        const std::string_view tok = text.substr(start, pos - start);
        if (tok == "inf" || tok == "+inf") return INFINITY;
        if (tok == "-inf") return -INFINITY;
        try {
            return csv::parse_double(tok);
        } catch (const ParseError&) {
            fail("invalid value '" + std::string(tok) + "'");
        }
    }

    Value parse_value() {
        skip_ws();
        if (pos >= text.size()) fail("missing value");
        const char c = text[pos];
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        if (text.substr(pos, 4) == "true") {
            pos += 4;
            return true;
        }
        if (text.substr(pos, 5) == "false") {
            pos += 5;
            return false;
        }
        return parse_number();
    }

    Value parse_array() {
        ++pos;
        std::vector<double> nums;
        std::vector<std::string> strs;
        for (;;) {
            skip_ws();
            if (pos >= text.size()) fail("unterminated array");
            if (text[pos] == ']') {
                ++pos;
                break;
            }
            if (text[pos] == '"') {
                if (!nums.empty()) fail("mixed array element types");
                strs.push_back(parse_string());
            } else {
                if (!strs.empty()) fail("mixed array element types");
                nums.push_back(parse_number());
            }
            skip_ws();
            if (pos < text.size() && text[pos] == ',') ++pos;
        }
        if (!strs.empty()) return strs;
        return nums;
    }
};

} // namespace

bool Section::has(std::string_view key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return true;
    return false;
}

const Value& Section::require(std::string_view key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return v;
    throw ConfigError("missing field '" + (name_.empty() ? "" : name_ + ".") + std::string(key) + "'");
}

void Section::type_error(std::string_view key, const char* expected) const {
    throw ConfigError("field '" + (name_.empty() ? "" : name_ + ".") + std::string(key) + "' must be " + expected);
}

double Section::number(std::string_view key) const {
    const auto& v = require(key);
    if (const auto* d = std::get_if<double>(&v)) return *d;
    type_error(key, "a number");
}

std::int64_t Section::integer(std::string_view key) const {
    const double d = number(key);
    if (!std::isfinite(d) || std::floor(d) != d) type_error(key, "an integer");
    return static_cast<std::int64_t>(d);
}

bool Section::boolean(std::string_view key) const {
    const auto& v = require(key);
    if (const auto* b = std::get_if<bool>(&v)) return *b;
    type_error(key, "true or false");
}

const std::string& Section::string(std::string_view key) const {
    const auto& v = require(key);
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    type_error(key, "a string");
}

const std::vector<double>& Section::numbers(std::string_view key) const {
    const auto& v = require(key);
    if (const auto* a = std::get_if<std::vector<double>>(&v)) return *a;
    type_error(key, "an array of numbers");
}

std::vector<std::string> Section::strings(std::string_view key) const {
    const auto& v = require(key);
    if (const auto* a = std::get_if<std::vector<std::string>>(&v)) return *a;
    // An empty array parses as numeric; accept it as an empty string list.
    if (const auto* a = std::get_if<std::vector<double>>(&v); a && a->empty()) return {};
    type_error(key, "an array of strings");
}

double Section::number_or(std::string_view key, double fallback) const {
    return has(key) ? number(key) : fallback;
}

std::int64_t Section::integer_or(std::string_view key, std::int64_t fallback) const {
    return has(key) ? integer(key) : fallback;
}

bool Section::boolean_or(std::string_view key, bool fallback) const {
    return has(key) ? boolean(key) : fallback;
}

std::string Section::string_or(std::string_view key, std::string fallback) const {
    return has(key) ? string(key) : fallback;
}

void Section::set(std::string key, Value value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    entries_.emplace_back(std::move(key), std::move(value));
}

Document::Document() { sections_.emplace_back(""); }

const Section* Document::find(std::string_view name) const {
    for (const auto& s : sections_)
        if (s.name() == name) return &s;
    return nullptr;
}

const Section& Document::section(std::string_view name) const {
    const Section* s = find(name);
    return s ? *s : empty_;
}

std::vector<const Section*> Document::with_prefix(std::string_view prefix) const {
    std::vector<const Section*> out;
    const std::string p = std::string(prefix) + ".";
    for (const auto& s : sections_)
        if (s.name().size() > p.size() && s.name().compare(0, p.size(), p) == 0) out.push_back(&s);
    return out;
}

Section& Document::add_section(std::string name) {
    sections_.emplace_back(std::move(name));
    return sections_.back();
}

Document parse(std::string_view text, const std::string& source) {
    Document doc;
    Section* current = &doc.root_mut();
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);

        line = trim(strip_comment(line));
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            const std::string_view name = trim(line.substr(1, line.size() - 2));
            if (!valid_name(name)) throw ConfigError(where + ": invalid section name '" + std::string(name) + "'");
            if (doc.find(name)) throw ConfigError(where + ": duplicate section [" + std::string(name) + "]");
            current = &doc.add_section(std::string(name));
        } else {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
            const std::string_view key = trim(line.substr(0, eq));
            if (!valid_name(key)) throw ConfigError(where + ": invalid key '" + std::string(key) + "'");
            if (current->has(key)) throw ConfigError(where + ": duplicate key '" + std::string(key) + "'");
            LineParser p{line.substr(eq + 1), 0, where};
            Value v = p.parse_value();
            p.skip_ws();
            if (p.pos != p.text.size()) throw ConfigError(where + ": trailing characters after value");
            current->set(std::string(key), std::move(v));
        }
        if (end == text.size()) break;
    }
    return doc;
}

Document load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

namespace {

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string render_value(const Value& v) {
    struct Visitor {
        std::string operator()(double d) const { return csv::format_double(d); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(const std::string& s) const { return quote(s); }
        std::string operator()(const std::vector<double>& a) const {
            std::string out = "[";
            for (std::size_t i = 0; i < a.size(); ++i) out += (i ? ", " : "") + csv::format_double(a[i]);
            return out + "]";
        }
        std::string operator()(const std::vector<std::string>& a) const {
            std::string out = "[";
            for (std::size_t i = 0; i < a.size(); ++i) out += (i ? ", " : "") + quote(a[i]);
            return out + "]";
        }
    };
    return std::visit(Visitor{}, v);
}

} // namespace

std::string render(const Document& doc) {
    std::string out;
    for (const auto& s : doc.sections()) {
        if (!s.name().empty()) {
            if (!out.empty()) out += "\n";
            out += "[" + s.name() + "]\n";
        } else if (s.entries().empty()) {
            continue;
        }
        for (const auto& [k, v] : s.entries()) out += k + " = " + render_value(v) + "\n";
    }
    return out;
}

} // namespace wavecal::config
