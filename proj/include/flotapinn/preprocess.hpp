#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "flotapinn/data.hpp"

namespace flotapinn::preprocess {

// Box-plot quantities for one column, fences at 1.5 IQR beyond the quartile
// box.  outlier_count is the number of values outside the fences.
struct ColumnStats {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double iqr = 0.0;
    double lower_fence = 0.0;
    double upper_fence = 0.0;
    std::size_t outlier_count = 0;
};

// Quantile at fractional index p * (n - 1) of the sorted values, linearly
// interpolated between neighbors.  Requires at least 2 finite values.
double quantile(std::span<const double> values, double p);

// (q1, q3) per the same interpolation rule.
std::pair<double, double> quartiles(std::span<const double> values);

ColumnStats column_stats(std::span<const double> values);

// Every schema column except time, the default filtering set.
std::vector<int> default_filter_columns();

struct FilterResult {
    data::Dataset filtered;
    std::vector<int> columns;            // selection, in call order
    std::vector<ColumnStats> stats;      // aligned with columns
    std::vector<std::size_t> removed;    // input-row indices, ascending
};

// Single-pass IQR row filter: fences come from the input dataset only, and
// a row is removed when ANY selected column falls outside its own fences.
FilterResult iqr_filter(const data::Dataset& ds, std::span<const int> columns);

// Min-max scaling to [0, 1] for report emission.  Training consumes raw
// values; nothing in the train path calls this.
struct ScaledColumn {
    std::vector<double> values;
    double min = 0.0;
    double max = 1.0;

    double unscale(double s) const { return min + s * (max - min); }
};

ScaledColumn minmax_scale(std::span<const double> values);

// One row per filtered column with its ColumnStats fields.
void export_stats_csv(const FilterResult& result, const std::filesystem::path& path);

} // namespace flotapinn::preprocess
