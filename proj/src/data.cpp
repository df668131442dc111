#include "flotapinn/data.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "flotapinn/errors.hpp"

namespace flotapinn::data {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view token, const std::string& context) {
    double value = 0.0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size())
        throw FormatError("csv: unparsable number '" + std::string(token) + "' in " + context);
    return value;
}

namespace {

std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

} // namespace

void export_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw FormatError("csv: cannot open '" + path.string() + "' for writing");

    for (int c = 0; c < kNumColumns; ++c) {
        if (c) out << ',';
        out << kColumnNames[c];
    }
    out << '\n';
    for (const Row& row : ds.rows) {
        for (int c = 0; c < kNumColumns; ++c) {
            if (c) out << ',';
            out << format_double(row[c]);
        }
        out << '\n';
    }
    if (!out)
        throw FormatError("csv: write to '" + path.string() + "' failed");
}

Dataset import_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw FormatError("csv: cannot open '" + path.string() + "' for reading");

    std::string line;
    if (!std::getline(in, line))
        throw FormatError("csv: '" + path.string() + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_line(line);
    if (header.size() != kNumColumns)
        throw FormatError("csv: expected " + std::to_string(kNumColumns) + " columns, found " +
                          std::to_string(header.size()) + " in '" + path.string() + "'");
    for (int c = 0; c < kNumColumns; ++c) {
        if (header[c] != kColumnNames[c])
            throw FormatError("csv: expected column '" + std::string(kColumnNames[c]) +
                              "' at position " + std::to_string(c) + ", found '" +
                              std::string(header[c]) + "'");
    }

    Dataset ds;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != kNumColumns)
            throw FormatError("csv: line " + std::to_string(line_no) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(kNumColumns));
        Row row;
        for (int c = 0; c < kNumColumns; ++c) {
            row[c] = parse_double(fields[c], "line " + std::to_string(line_no) + ", column '" +
                                                 std::string(kColumnNames[c]) + "'");
        }
        ds.rows.push_back(row);
    }
    return ds;
}

} // namespace flotapinn::data
