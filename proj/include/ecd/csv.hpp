#pragma once

// Small CSV helpers: '#' comment lines, an optional header row, numeric cells.

#include "ecd/core.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ecd::csv {

using Manifest = std::vector<std::pair<std::string, std::string>>;

inline std::string num(double v, int digits = 10) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline std::string manifest_line(const Manifest& fields) {
    std::string out = "# manifest:";
    for (std::size_t i = 0; i < fields.size(); ++i) {
        out += i == 0 ? " " : "; ";
        out += fields[i].first + "=" + fields[i].second;
    }
    return out;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, sep)) cells.push_back(cell);
    if (!line.empty() && line.back() == sep) cells.emplace_back();
    return cells;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    while (end && (*end == ' ' || *end == '\r' || *end == '\t')) ++end;
    return end && *end == '\0';
}

struct Table {
    std::vector<std::string> header;
    DataMatrix data;
};

/// Reads a numeric table. Comment lines start with '#'; a first non-comment line
/// that does not parse as numbers is taken as the header.
inline Table read_table(std::istream& in, const std::string& what = "csv") {
    Table t;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split(line);
        std::vector<double> row(cells.size());
        bool numeric = true;
        for (std::size_t i = 0; i < cells.size(); ++i) numeric = numeric && parse_double(cells[i], row[i]);
        if (!numeric) {
            if (rows.empty() && t.header.empty()) {
                t.header = cells;
                continue;
            }
            throw Error(what + ": non-numeric cell on line " + std::to_string(lineno));
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw Error(what + ": ragged row on line " + std::to_string(lineno));
        rows.push_back(std::move(row));
    }
    const auto cols = rows.empty() ? static_cast<Eigen::Index>(t.header.size())
                                   : static_cast<Eigen::Index>(rows.front().size());
    t.data.resize(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (Eigen::Index j = 0; j < cols; ++j) t.data(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    return t;
}

inline Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_table(in, path);
}

inline void write_table(std::ostream& out, const std::vector<std::string>& header, const Eigen::Ref<const DataMatrix>& data,
                        int digits = 17) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.cols(); ++j) out << (j ? "," : "") << num(data(i, j), digits);
        out << '\n';
    }
}

}  // namespace ecd::csv
