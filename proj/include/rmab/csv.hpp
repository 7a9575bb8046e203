#pragma once

// Deterministic CSV emission: fixed schema header, 12-significant-digit
// doubles, LF line endings, single buffered write.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "rmab/core.hpp"

namespace rmab {

using CsvCell = std::variant<long long, double, std::string>;
using CsvRow = std::vector<CsvCell>;

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string format_cell(const CsvCell& cell) {
    if (std::holds_alternative<long long>(cell)) return std::to_string(std::get<long long>(cell));
    if (std::holds_alternative<double>(cell)) return format_double(std::get<double>(cell));
    return csv_escape(std::get<std::string>(cell));
}

inline void emit_csv(const std::string& path, const std::vector<std::string>& schema,
                     const std::vector<CsvRow>& rows) {
    std::string out;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(schema[i]);
    }
    out += '\n';
    for (const CsvRow& row : rows) {
        if (row.size() != schema.size())
            throw std::invalid_argument("emit_csv: row width does not match schema");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_cell(row[i]);
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed: " + path);
}

struct CsvFile {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Minimal reader for round-trip tests and golden files; handles quoted cells.
inline CsvFile parse_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path);
    CsvFile out;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::string> cells;
        std::string cur;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            char c = line[i];
            if (quoted) {
                if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else if (c == '"') {
                    quoted = false;
                } else {
                    cur += c;
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        cells.push_back(cur);
        if (first) {
            out.header = cells;
            first = false;
        } else {
            out.rows.push_back(cells);
        }
    }
    return out;
}

}  // namespace rmab
