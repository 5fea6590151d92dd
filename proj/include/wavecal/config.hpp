#pragma once

// Minimal TOML-subset reader used for the I/U map and run configuration.
//
// Grammar (one construct per line):
//   # comment
//   [section.name]
//   key = 1.5 | "text" | true | false | [1, 2, 3] | ["a", "b"]
//
// Keys before the first header live in the root section (name ""). Sections
// and keys keep file order. Nested tables, inline tables and multi-line
// arrays are not supported.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace wavecal::config {

using Value = std::variant<double, bool, std::string, std::vector<double>, std::vector<std::string>>;

class Section {
public:
    explicit Section(std::string name) : name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }
    bool has(std::string_view key) const;
    const std::vector<std::pair<std::string, Value>>& entries() const noexcept { return entries_; }

    double number(std::string_view key) const;
    std::int64_t integer(std::string_view key) const;
    bool boolean(std::string_view key) const;
    const std::string& string(std::string_view key) const;
    const std::vector<double>& numbers(std::string_view key) const;
    std::vector<std::string> strings(std::string_view key) const;

    double number_or(std::string_view key, double fallback) const;
    std::int64_t integer_or(std::string_view key, std::int64_t fallback) const;
    bool boolean_or(std::string_view key, bool fallback) const;
    std::string string_or(std::string_view key, std::string fallback) const;

    void set(std::string key, Value value);

private:
    const Value& require(std::string_view key) const;
    [[noreturn]] void type_error(std::string_view key, const char* expected) const;

    std::string name_;
    std::vector<std::pair<std::string, Value>> entries_;
};

class Document {
public:
    Document();

    const Section& root() const { return sections_.front(); }
    const Section* find(std::string_view name) const;
    // Section or an empty placeholder if absent.
    const Section& section(std::string_view name) const;
    // Sections named "<prefix>.<suffix>", in file order.
    std::vector<const Section*> with_prefix(std::string_view prefix) const;
    const std::vector<Section>& sections() const noexcept { return sections_; }

    Section& add_section(std::string name);
    Section& root_mut() { return sections_.front(); }

private:
    std::vector<Section> sections_;
    Section empty_{""};
};

Document parse(std::string_view text, const std::string& source = "<string>");
Document load(const std::filesystem::path& path);

// Renders a document back to the same grammar.
std::string render(const Document& doc);

} // namespace wavecal::config
