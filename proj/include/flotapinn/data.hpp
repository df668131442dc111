#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace flotapinn::data {

// Canonical column order of every dataset CSV.  The first twelve columns are
// the model inputs (time plus eleven exogenous variables), the last two are
// the targets.
enum Col : int {
    kT = 0,
    kQAir,
    kH,
    kCS,
    kRSFeed,
    kCFeed,
    kRAuFeed,
    kP80,
    kQFeed,
    kFSFeed,
    kQT,
    kQC,
    kCPTail,
    kCFConc,
};

inline constexpr int kNumColumns = 14;
inline constexpr int kNumInputs = 12;
inline constexpr int kNumTargets = 2;

inline constexpr std::array<std::string_view, kNumColumns> kColumnNames = {
    "t",      "Q_air",     "h",   "C_s",    "R_s_feed", "C_feed",   "R_Au_feed",
    "P80",    "Q_feed",    "F_s_feed", "Q_t", "Q_c",    "C_p_tail", "C_f_conc",
};

using Row = std::array<double, kNumColumns>;

struct Dataset {
    std::vector<Row> rows;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }

    std::array<double, kNumInputs> inputs(std::size_t i) const {
        std::array<double, kNumInputs> out;
        for (int c = 0; c < kNumInputs; ++c) out[c] = rows[i][c];
        return out;
    }
    std::array<double, kNumTargets> targets(std::size_t i) const {
        return {rows[i][kCPTail], rows[i][kCFConc]};
    }
};

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

// Strict parse of a full token; context names the location in errors.
double parse_double(std::string_view token, const std::string& context);

// Writes the canonical header plus one line per row.  Doubles round-trip
// exactly through export followed by import.
void export_csv(const Dataset& ds, const std::filesystem::path& path);

// Reads a CSV produced by export_csv.  A reordered or renamed header, a row
// of the wrong width, and an unparsable number are format errors that name
// the offending column or line.
Dataset import_csv(const std::filesystem::path& path);

} // namespace flotapinn::data
