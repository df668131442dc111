#include "flotapinn/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "flotapinn/errors.hpp"

namespace flotapinn::preprocess {

namespace {

std::vector<double> sorted_finite(std::span<const double> values) {
    if (values.size() < 2)
        throw DataError("quantile: need at least 2 values, got " + std::to_string(values.size()));
    std::vector<double> v(values.begin(), values.end());
    for (double x : v)
        if (!std::isfinite(x)) throw DataError("quantile: non-finite value in column");
    std::sort(v.begin(), v.end());
    return v;
}

double quantile_of_sorted(const std::vector<double>& v, double p) {
    const double idx = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(idx);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = idx - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

} // namespace

double quantile(std::span<const double> values, double p) {
    if (p < 0.0 || p > 1.0) throw UsageError("quantile: p must be in [0, 1]");
    return quantile_of_sorted(sorted_finite(values), p);
}

std::pair<double, double> quartiles(std::span<const double> values) {
    const std::vector<double> v = sorted_finite(values);
    return {quantile_of_sorted(v, 0.25), quantile_of_sorted(v, 0.75)};
}

ColumnStats column_stats(std::span<const double> values) {
    const std::vector<double> v = sorted_finite(values);
    ColumnStats s;
    s.min = v.front();
    s.q1 = quantile_of_sorted(v, 0.25);
    s.median = quantile_of_sorted(v, 0.5);
    s.q3 = quantile_of_sorted(v, 0.75);
    s.max = v.back();
    s.iqr = s.q3 - s.q1;
    s.lower_fence = s.q1 - 1.5 * s.iqr;
    s.upper_fence = s.q3 + 1.5 * s.iqr;
    for (double x : v)
        if (x < s.lower_fence || x > s.upper_fence) ++s.outlier_count;
    return s;
}

std::vector<int> default_filter_columns() {
    std::vector<int> cols;
    for (int c = 1; c < data::kNumColumns; ++c) cols.push_back(c);
    return cols;
}

FilterResult iqr_filter(const data::Dataset& ds, std::span<const int> columns) {
    if (ds.empty()) throw DataError("iqr_filter: empty dataset");
    if (columns.empty()) throw UsageError("iqr_filter: no columns selected");
    for (int c : columns) {
        if (c == data::kT) throw UsageError("iqr_filter: time column is not filterable");
        if (c < 0 || c >= data::kNumColumns)
            throw UsageError("iqr_filter: column index " + std::to_string(c) + " out of range");
    }

    FilterResult result;
    result.columns.assign(columns.begin(), columns.end());

    // Fences come from the input dataset once; no re-filtering.
    std::vector<double> buf(ds.size());
    for (int c : columns) {
        for (std::size_t i = 0; i < ds.size(); ++i) buf[i] = ds.rows[i][c];
        result.stats.push_back(column_stats(buf));
    }

    for (std::size_t i = 0; i < ds.size(); ++i) {
        bool out = false;
        for (std::size_t k = 0; k < result.columns.size() && !out; ++k) {
            const double v = ds.rows[i][result.columns[k]];
            out = v < result.stats[k].lower_fence || v > result.stats[k].upper_fence;
        }
        if (out)
            result.removed.push_back(i);
        else
            result.filtered.rows.push_back(ds.rows[i]);
    }
    return result;
}

ScaledColumn minmax_scale(std::span<const double> values) {
    if (values.empty()) throw DataError("minmax_scale: empty column");
    double lo = values[0], hi = values[0];
    for (double v : values) {
        if (!std::isfinite(v)) throw DataError("minmax_scale: non-finite value in column");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi)
        throw ScalingError("minmax_scale: column is constant at " + data::format_double(lo));

    ScaledColumn out;
    out.min = lo;
    out.max = hi;
    out.values.reserve(values.size());
    const double span = hi - lo;
    for (double v : values) out.values.push_back((v - lo) / span);
    return out;
}

void export_stats_csv(const FilterResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw FormatError("stats csv: cannot open '" + path.string() + "' for writing");
    out << "column,min,q1,median,q3,max,iqr,lower_fence,upper_fence,outlier_count\n";
    for (std::size_t k = 0; k < result.columns.size(); ++k) {
        const ColumnStats& s = result.stats[k];
        out << data::kColumnNames[result.columns[k]] << ',' << data::format_double(s.min) << ','
            << data::format_double(s.q1) << ',' << data::format_double(s.median) << ','
            << data::format_double(s.q3) << ',' << data::format_double(s.max) << ','
            << data::format_double(s.iqr) << ',' << data::format_double(s.lower_fence) << ','
            << data::format_double(s.upper_fence) << ',' << s.outlier_count << '\n';
    }
    if (!out)
        throw FormatError("stats csv: write to '" + path.string() + "' failed");
}

} // namespace flotapinn::preprocess
