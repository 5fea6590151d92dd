#include "wavecal/csv.hpp"

#include "wavecal/errors.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>

namespace wavecal::csv {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view token) {
    while (!token.empty() && (token.front() == ' ' || token.front() == '\t')) token.remove_prefix(1);
    while (!token.empty() && (token.back() == ' ' || token.back() == '\t' || token.back() == '\r'))
        token.remove_suffix(1);
    if (token == "nan") return NAN;
    if (token == "inf") return INFINITY;
    if (token == "-inf") return -INFINITY;
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (token.empty() || res.ec != std::errc() || res.ptr != token.data() + token.size())
        throw ParseError("not a number: '" + std::string(token) + "'");
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

Table read_table(const std::filesystem::path& path, bool labelled) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    Table table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split(line);
        if (table.header.empty()) {
            for (auto f : fields) table.header.emplace_back(f);
            continue;
        }
        if (fields.size() != table.header.size())
            throw ParseError(path.string() + ": row " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, header has " +
                             std::to_string(table.header.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        std::size_t first = 0;
        if (labelled) {
            table.row_labels.emplace_back(fields[0]);
            first = 1;
        }
        for (std::size_t i = first; i < fields.size(); ++i) {
            try {
                row.push_back(parse_double(fields[i]));
            } catch (const ParseError& e) {
                throw ParseError(path.string() + ": row " + std::to_string(line_no) + ": " + e.what());
            }
        }
        table.rows.push_back(std::move(row));
    }
    if (table.header.empty()) throw ParseError(path.string() + ": missing header");
    return table;
}

void write_table(const std::filesystem::path& path, const Table& table) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path.string());
    for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
    out << '\n';
    const bool labelled = !table.row_labels.empty();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        bool first = true;
        if (labelled) {
            out << table.row_labels[r];
            first = false;
        }
        for (double v : table.rows[r]) {
            if (!first) out << ',';
            out << format_double(v);
            first = false;
        }
        out << '\n';
    }
}

} // namespace wavecal::csv
