#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "branchsched/errors.hpp"

// Minimal CSV support. All files produced here use plain comma separation
// with no quoting; no field ever contains a comma or newline.

namespace branchsched::detail {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index by name, or throws naming the column.
    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ParameterError("csv: missing column '" + name + "'");
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("csv: cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw ParameterError("csv: empty file '" + path + "'");
    table.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != table.header.size())
            throw ParameterError("csv: ragged row in '" + path + "'");
        table.rows.push_back(std::move(cells));
    }
    return table;
}

inline double parse_double(const std::string& s) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw ParameterError("csv: trailing junk in number '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        throw ParameterError("csv: not a number: '" + s + "'");
    } catch (const std::out_of_range&) {
        throw ParameterError("csv: number out of range: '" + s + "'");
    }
}

inline int parse_int(const std::string& s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParameterError("csv: not an integer: '" + s + "'");
    return v;
}

// Fixed-format float rendering so repeated runs emit byte-identical files.
// %.9g round-trips every latency/accuracy value we produce at the precision
// anyone consumes them.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) os << ',';
        os << cells[i];
    }
    os << '\n';
}

}  // namespace branchsched::detail
