#include "flotapinn/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "flotapinn/errors.hpp"
#include "flotapinn/rng.hpp"
#include "flotapinn/simulator.hpp"
#include "oracles.hpp"

using namespace flotapinn;
using preprocess::ColumnStats;
using preprocess::FilterResult;

namespace {

// Dataset with one interesting column and everything else benign.
data::Dataset column_dataset(int col, const std::vector<double>& values) {
    data::Dataset ds;
    for (double v : values) {
        data::Row row{};
        for (int c = 0; c < data::kNumColumns; ++c) row[c] = 1.0;
        row[data::kT] = 5.0 * static_cast<double>(ds.rows.size());
        row[col] = v;
        ds.rows.push_back(row);
    }
    return ds;
}

} // namespace

TEST_CASE("quartiles follow the fractional-index interpolation rule") {
    const std::vector<double> v{1, 2, 3, 4, 5, 100};
    const auto [q1, q3] = preprocess::quartiles(v);
    CHECK(q1 == 2.25);
    CHECK(q3 == 4.75);

    const std::vector<double> shuffled{100, 3, 1, 5, 2, 4};
    const auto [s1, s3] = preprocess::quartiles(shuffled);
    CHECK(s1 == q1);
    CHECK(s3 == q3);

    const std::vector<double> constant{5, 5, 5, 5};
    const auto [c1, c3] = preprocess::quartiles(constant);
    CHECK(c1 == 5.0);
    CHECK(c3 == 5.0);

    const std::vector<double> pair{1, 3};
    CHECK(preprocess::quantile(pair, 0.5) == 2.0);
    CHECK(preprocess::quantile(pair, 0.0) == 1.0);
    CHECK(preprocess::quantile(pair, 1.0) == 3.0);
}

TEST_CASE("quantiles agree with the reference implementation on random columns") {
    Rng rng(5);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 2 + rng.below(600);
        std::vector<double> v(n);
        for (double& x : v) x = rng.uniform(-50.0, 50.0);

        std::vector<double> sorted = v;
        std::sort(sorted.begin(), sorted.end());
        for (double p : {0.25, 0.5, 0.75}) {
            const double want = oracle::quantile_sorted(sorted, p);
            const double got = preprocess::quantile(v, p);
            CHECK(oracle::rel_err(got, want, 1e-9) < 1e-12);
        }
    }
}

TEST_CASE("quantile rejects short and non-finite input") {
    CHECK_THROWS_AS(preprocess::quantile(std::vector<double>{}, 0.5), DataError);
    CHECK_THROWS_AS(preprocess::quantile(std::vector<double>{1.0}, 0.5), DataError);
    CHECK_THROWS_AS(preprocess::quantile(std::vector<double>{1.0, std::nan("")}, 0.5), DataError);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(preprocess::quartiles(std::vector<double>{1.0, 2.0, inf}), DataError);
    CHECK_THROWS_AS(preprocess::quantile(std::vector<double>{1.0, 2.0}, 1.5), UsageError);
}

TEST_CASE("column stats carry the box-plot quantities") {
    const std::vector<double> v{1, 2, 3, 4, 5, 100};
    const ColumnStats s = preprocess::column_stats(v);
    CHECK(s.min == 1.0);
    CHECK(s.q1 == 2.25);
    CHECK(s.median == 3.5);
    CHECK(s.q3 == 4.75);
    CHECK(s.max == 100.0);
    CHECK(s.iqr == 2.5);
    CHECK(s.lower_fence == -1.5);
    CHECK(s.upper_fence == 8.5);
    CHECK(s.outlier_count == 1);
    CHECK(s.q1 <= s.median);
    CHECK(s.median <= s.q3);
}

TEST_CASE("iqr filter removes the fence violators of one column") {
    const data::Dataset ds = column_dataset(data::kH, {1, 2, 3, 4, 5, 100});
    const std::vector<int> cols{data::kH};
    const FilterResult r = preprocess::iqr_filter(ds, cols);

    REQUIRE(r.removed.size() == 1);
    CHECK(r.removed[0] == 5);
    CHECK(r.filtered.size() == 5);
    CHECK(r.stats[0].lower_fence == -1.5);
    CHECK(r.stats[0].upper_fence == 8.5);
    CHECK(r.filtered.size() + r.removed.size() == ds.size());
}

TEST_CASE("a constant column rejects any deviating value") {
    const data::Dataset ds = column_dataset(data::kCS, {7, 7, 7, 7, 7.001, 7});
    const std::vector<int> cols{data::kCS};
    const FilterResult r = preprocess::iqr_filter(ds, cols);
    REQUIRE(r.removed.size() == 1);
    CHECK(r.removed[0] == 4);
    CHECK(r.stats[0].iqr == 0.0);
    CHECK(r.stats[0].lower_fence == 7.0);
    CHECK(r.stats[0].upper_fence == 7.0);
}

TEST_CASE("a dataset inside all fences passes through untouched") {
    Rng rng(19);
    data::Dataset ds;
    for (int i = 0; i < 100; ++i) {
        data::Row row;
        for (int c = 0; c < data::kNumColumns; ++c) row[c] = rng.uniform(0.0, 1.0);
        ds.rows.push_back(row);
    }
    // Uniform data has no 1.5 IQR violators: fences span 2.5x the box.
    const std::vector<int> cols = preprocess::default_filter_columns();
    const FilterResult r = preprocess::iqr_filter(ds, cols);
    CHECK(r.removed.empty());
    REQUIRE(r.filtered.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(r.filtered.rows[i] == ds.rows[i]);
}

TEST_CASE("rows are removed when any selected column violates its own fences") {
    std::vector<double> base(40);
    for (std::size_t i = 0; i < base.size(); ++i) base[i] = static_cast<double>(i % 10);

    data::Dataset ds = column_dataset(data::kQAir, base);
    for (std::size_t i = 0; i < ds.size(); ++i) ds.rows[i][data::kP80] = base[i];
    ds.rows[3][data::kQAir] = 500.0; // violates Q_air only
    ds.rows[8][data::kP80] = -400.0; // violates P80 only

    const std::vector<int> both{data::kQAir, data::kP80};
    const FilterResult r_both = preprocess::iqr_filter(ds, both);
    CHECK(r_both.removed == std::vector<std::size_t>{3, 8});
    CHECK(r_both.stats[0].outlier_count == 1);
    CHECK(r_both.stats[1].outlier_count == 1);

    const std::vector<int> only_air{data::kQAir};
    const FilterResult r_air = preprocess::iqr_filter(ds, only_air);
    CHECK(r_air.removed == std::vector<std::size_t>{3});
}

TEST_CASE("fences come from the input data in a single pass") {
    Rng rng(23);
    const std::vector<int> cols = preprocess::default_filter_columns();
    for (int rep = 0; rep < 20; ++rep) {
        data::Dataset ds;
        const std::size_t n = 30 + rng.below(200);
        for (std::size_t i = 0; i < n; ++i) {
            data::Row row;
            row[data::kT] = 5.0 * static_cast<double>(i);
            for (int c = 1; c < data::kNumColumns; ++c) {
                row[c] = rng.normal(10.0 * c, 2.0);
                if (rng.below(40) == 0) row[c] *= 8.0; // sprinkle gross errors
            }
            ds.rows.push_back(row);
        }

        // Oracle: fences from the ORIGINAL columns; expected removals are
        // exactly the rows violating those fences.
        std::vector<std::pair<double, double>> fences;
        for (int c : cols) {
            std::vector<double> col(n);
            for (std::size_t i = 0; i < n; ++i) col[i] = ds.rows[i][c];
            std::sort(col.begin(), col.end());
            const double q1 = oracle::quantile_sorted(col, 0.25);
            const double q3 = oracle::quantile_sorted(col, 0.75);
            fences.emplace_back(q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1));
        }
        std::vector<std::size_t> want_removed;
        for (std::size_t i = 0; i < n; ++i) {
            bool out = false;
            for (std::size_t k = 0; k < cols.size() && !out; ++k) {
                const double v = ds.rows[i][cols[k]];
                out = v < fences[k].first || v > fences[k].second;
            }
            if (out) want_removed.push_back(i);
        }

        const FilterResult r = preprocess::iqr_filter(ds, cols);
        CHECK(r.removed == want_removed);
        CHECK(r.filtered.size() + r.removed.size() == ds.size());

        // Survivors keep their original order and values.
        std::size_t j = 0;
        std::set<std::size_t> removed_set(want_removed.begin(), want_removed.end());
        for (std::size_t i = 0; i < n; ++i) {
            if (removed_set.count(i)) continue;
            CHECK(r.filtered.rows[j] == ds.rows[i]);
            ++j;
        }
    }
}

TEST_CASE("iqr filter rejects bad selections") {
    const data::Dataset ds = column_dataset(data::kH, {1, 2, 3});
    CHECK_THROWS_AS(preprocess::iqr_filter(data::Dataset{}, std::vector<int>{data::kH}),
                    DataError);
    CHECK_THROWS_AS(preprocess::iqr_filter(ds, std::vector<int>{}), UsageError);
    CHECK_THROWS_AS(preprocess::iqr_filter(ds, std::vector<int>{data::kT}), UsageError);
    CHECK_THROWS_AS(preprocess::iqr_filter(ds, std::vector<int>{14}), UsageError);

    const std::vector<int> defaults = preprocess::default_filter_columns();
    CHECK(defaults.size() == data::kNumColumns - 1);
    CHECK(std::find(defaults.begin(), defaults.end(), data::kT) == defaults.end());
}

TEST_CASE("tagged simulator outliers are caught without purging good rows") {
    // Recall and false-positive rate of the default filter against the
    // injected ground truth, averaged across seeds.
    double recall_sum = 0.0, fpr_sum = 0.0;
    const std::vector<int> cols = preprocess::default_filter_columns();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        sim::SimConfig config = sim::desk_config();
        config.seed = seed;
        const sim::SplitResult split = sim::simulate_split(config, sim::Split::kTrain);
        const FilterResult r = preprocess::iqr_filter(split.noisy.dataset, cols);

        std::size_t tp = 0, fp = 0;
        for (std::size_t i : r.removed) {
            if (split.noisy.outlier_tag[i])
                ++tp;
            else
                ++fp;
        }
        const auto n_tagged = split.noisy.n_outliers;
        const auto n_clean = split.noisy.dataset.size() - n_tagged;
        REQUIRE(n_tagged > 0);
        recall_sum += static_cast<double>(tp) / static_cast<double>(n_tagged);
        fpr_sum += static_cast<double>(fp) / static_cast<double>(n_clean);
    }
    CHECK(recall_sum / 20.0 >= 0.9);
    CHECK(fpr_sum / 20.0 <= 0.05);
}

TEST_CASE("minmax scaling maps to the unit interval and inverts exactly") {
    const auto scaled = preprocess::minmax_scale(std::vector<double>{2, 4, 6});
    CHECK(scaled.values == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(scaled.min == 2.0);
    CHECK(scaled.max == 6.0);

    Rng rng(29);
    std::vector<double> v(500);
    for (double& x : v) x = rng.uniform(-1000.0, 1000.0);
    const auto s = preprocess::minmax_scale(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(s.values[i] >= 0.0);
        CHECK(s.values[i] <= 1.0);
        CHECK(oracle::rel_err(s.unscale(s.values[i]), v[i], 1e-9) < 1e-12);
    }
}

TEST_CASE("minmax scaling rejects constant and empty columns") {
    CHECK_THROWS_AS(preprocess::minmax_scale(std::vector<double>{3, 3, 3}), ScalingError);
    CHECK_THROWS_AS(preprocess::minmax_scale(std::vector<double>{}), DataError);
    CHECK_THROWS_AS(preprocess::minmax_scale(std::vector<double>{1.0, std::nan("")}), DataError);
}

TEST_CASE("stats csv lists one labeled row per filtered column") {
    const data::Dataset ds = column_dataset(data::kH, {1, 2, 3, 4, 5, 100});
    const std::vector<int> cols{data::kH, data::kQC};
    const FilterResult r = preprocess::iqr_filter(ds, cols);

    const auto path = std::filesystem::temp_directory_path() / "flotapinn-stats.csv";
    preprocess::export_stats_csv(r, path);

    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "column,min,q1,median,q3,max,iqr,lower_fence,upper_fence,outlier_count");
    REQUIRE(std::getline(in, line));
    CHECK(line == "h,1,2.25,3.5,4.75,100,2.5,-1.5,8.5,1");
    REQUIRE(std::getline(in, line));
    CHECK(line.rfind("Q_c,", 0) == 0);
    CHECK(!std::getline(in, line));
}
