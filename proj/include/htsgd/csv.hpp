#pragma once

// Rectangular tables written as RFC-4180-style CSV: header row, '.' decimal
// separator, 17 significant digits for reals (bit-exact round trip), LF line
// endings.

#include "htsgd/common.hpp"

#include <cstdio>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

namespace htsgd::io {

struct Column {
    std::string name;
    std::vector<double> values;
    bool integral = false; // format as long long

    static Column real(std::string name, std::vector<double> values = {}) {
        return Column{std::move(name), std::move(values), false};
    }
    static Column integer(std::string name, std::vector<double> values = {}) {
        return Column{std::move(name), std::move(values), true};
    }
};

struct Table {
    std::vector<Column> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().values.size(); }

    void validate() const {
        for (const auto& column : columns)
            if (column.values.size() != rows())
                throw ConfigError("Table: column '" + column.name + "' has a mismatched length");
    }
};

inline std::string format_real(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char c : field) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

inline void write_csv(const Table& table, const std::string& path) {
    table.validate();
    std::ofstream out(path, std::ios::binary); // binary: LF endings everywhere
    if (!out) throw ConfigError("write_csv: cannot open " + path);
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        if (c > 0) out << ',';
        out << csv_escape(table.columns[c].name);
    }
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            if (c > 0) out << ',';
            const auto& column = table.columns[c];
            if (column.integral)
                out << static_cast<long long>(column.values[r]);
            else
                out << format_real(column.values[r]);
        }
        out << '\n';
    }
    if (!out) throw ConfigError("write_csv: write failed for " + path);
}

} // namespace htsgd::io
