#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace icdn::csv {

struct Record {
    std::size_t line = 0;  // 1-based line number in the source file
    std::vector<std::string> fields;
};

// Minimal RFC-4180 reader: comma separated, double-quote escaping, no embedded newlines.
class Table {
public:
    static Table read_file(const std::string& path);
    static Table read_stream(std::istream& in);

    [[nodiscard]] const std::vector<std::string>& header() const noexcept { return header_; }
    [[nodiscard]] const std::vector<Record>& records() const noexcept { return records_; }

    // Index of a named column; throws ParseError(line 1) when absent.
    [[nodiscard]] std::size_t column(std::string_view name) const;
    [[nodiscard]] bool has_column(std::string_view name) const;

private:
    std::vector<std::string> header_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<Record> records_;
};

std::vector<std::string> split_line(std::string_view line);

// Shortest round-trip decimal representation; NaN written as empty field.
std::string format_double(double v);

double parse_double(std::string_view s, std::size_t line, std::string_view column);
long long parse_int(std::string_view s, std::size_t line, std::string_view column);
bool parse_bool(std::string_view s, std::size_t line, std::string_view column);

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    void row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
};

}  // namespace icdn::csv
