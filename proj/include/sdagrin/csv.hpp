#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "sdagrin/errors.hpp"

namespace sdagrin::csv {

// Minimal reader for the unquoted, comma-separated, LF-terminated files this library
// exchanges. Lines starting with '#' are comments.
struct Table {
    std::string file;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline Table read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    Table t;
    t.file = path;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cells = split(line);
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw ParseError(path, line_no, cells.size(),
                             "ragged row: expected " + std::to_string(t.header.size()) + " cells, found " +
                                 std::to_string(cells.size()));
        }
        t.rows.push_back(std::move(cells));
        t.line_numbers.push_back(line_no);
    }
    if (!have_header) throw ParseError(path, 1, 1, "missing header");
    return t;
}

inline double parse_double(std::string_view cell, const std::string& file, std::size_t line, std::size_t column) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || cell.empty()) {
        throw ParseError(file, line, column, "not a number: '" + std::string(cell) + "'");
    }
    if (!std::isfinite(v)) throw ParseError(file, line, column, "non-finite value: '" + std::string(cell) + "'");
    return v;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw ContractError("format_double: conversion failed");
    return std::string(buf, ptr);
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << content;
    if (!out) throw DataError("write failed for " + path);
}

}  // namespace sdagrin::csv
