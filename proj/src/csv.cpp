#include "icdn/csv.hpp"

#include "icdn/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace icdn::csv {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::string(trim(cur)));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::string(trim(cur)));
    return out;
}

Table Table::read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return read_stream(in);
}

Table Table::read_stream(std::istream& in) {
    Table t;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_line(line);
        if (!have_header) {
            // strip a UTF-8 byte-order mark
            if (fields[0].size() >= 3 && fields[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
                fields[0].erase(0, 3);
            for (std::size_t i = 0; i < fields.size(); ++i) {
                if (!t.index_.emplace(fields[i], i).second)
                    throw ParseError(lineno, "duplicate column '" + fields[i] + "'");
            }
            t.header_ = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header_.size())
            throw ParseError(lineno, "expected " + std::to_string(t.header_.size()) + " fields, got " +
                                         std::to_string(fields.size()));
        t.records_.push_back(Record{lineno, std::move(fields)});
    }
    if (!have_header) throw ParseError(1, "missing header row");
    return t;
}

std::size_t Table::column(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ParseError(1, "missing column '" + std::string(name) + "'");
    return it->second;
}

bool Table::has_column(std::string_view name) const { return index_.count(std::string(name)) != 0; }

std::string format_double(double v) {
    if (std::isnan(v)) return {};
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, std::size_t line, std::string_view column) {
    s = trim(s);
    double v = 0.0;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError(line, "column '" + std::string(column) + "': not a number: '" + std::string(s) + "'");
    return v;
}

long long parse_int(std::string_view s, std::size_t line, std::string_view column) {
    s = trim(s);
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError(line, "column '" + std::string(column) + "': not an integer: '" + std::string(s) + "'");
    return v;
}

bool parse_bool(std::string_view s, std::size_t line, std::string_view column) {
    s = trim(s);
    if (s == "1" || s == "true" || s == "True" || s == "TRUE" || s == "Y" || s == "y") return true;
    if (s == "0" || s == "false" || s == "False" || s == "FALSE" || s == "N" || s == "n" || s.empty())
        return false;
    throw ParseError(line, "column '" + std::string(column) + "': not a boolean: '" + std::string(s) + "'");
}

void Writer::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        const auto& f = fields[i];
        if (f.find_first_of(",\"") != std::string::npos) {
            out_ << '"';
            for (char c : f) {
                if (c == '"') out_ << '"';
                out_ << c;
            }
            out_ << '"';
        } else {
            out_ << f;
        }
    }
    out_ << '\n';
}

}  // namespace icdn::csv
