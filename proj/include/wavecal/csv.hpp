#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wavecal::csv {

// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);
double parse_double(std::string_view token);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

struct Table {
    std::vector<std::string> header;
    // Optional leading text column (e.g. curve labels); empty when the table
    // is purely numeric.
    std::vector<std::string> row_labels;
    std::vector<std::vector<double>> rows;
};

// Reads a comma-separated table with a header line. When `labelled` is true
// the first column of every data row is kept as text.
Table read_table(const std::filesystem::path& path, bool labelled = false);
void write_table(const std::filesystem::path& path, const Table& table);

} // namespace wavecal::csv
