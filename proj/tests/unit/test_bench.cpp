#include "pcegp/bench.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"

using namespace pcegp;
namespace t = pcegp::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string &name) {
    const fs::path dir = fs::temp_directory_path() / ("pcegp_bench_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_synthetic(const fs::path &dir, std::uint64_t seed, Index n = 40) {
    Rng rng(seed);
    const fs::path path = dir / "synthetic.csv";
    std::ofstream out(path);
    out << "a,b,y\n";
    for (Index i = 0; i < n; ++i) {
        const double a = rng.uniform(), b = rng.uniform();
        out << format_double(a) << "," << format_double(b) << "," << format_double(std::sin(3 * a) + b) << "\n";
    }
    return path;
}

RunConfig tiny_config(const fs::path &csv, const std::string &mode) {
    json j = default_config();
    for (const std::string o : {"trials=3", "initial_trials=2", "iterations=5", "folds=3", "inner_folds=2", "seed=4",
                                "model.degree_min=1", "model.degree_max=3", "baseline.iterations=40"})
        apply_override(j, o);
    apply_override(j, "mode=" + mode);
    j["dataset"] = csv.string();
    j["target"] = "y";
    return parse_run_config(j);
}

}  // namespace

TEST(MeanAndStd, HandValues) {
    const auto [m, s] = mean_and_std({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(m, 2.5);
    EXPECT_NEAR(s, std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(mean_and_std({7.0}).second, 0.0);
    EXPECT_THROW(mean_and_std({}), std::invalid_argument);
}

TEST(Benchmark, ReportMeanMatchesFolds) {
    const auto dir = scratch_dir("mean");
    const auto csv = write_synthetic(dir, 1);
    for (const std::string mode : {"global", "nested"}) {
        const BenchmarkReport r = run_benchmark(tiny_config(csv, mode));
        ASSERT_EQ(r.folds.size(), 3u);
        double sum = 0.0;
        Index rows = 0;
        for (const auto &f : r.folds) {
            EXPECT_GE(f.rmse, 0.0);
            sum += f.rmse;
            rows += f.test_rows;
        }
        EXPECT_NEAR(r.mean_rmse, sum / 3.0, 1e-12);
        EXPECT_EQ(rows, 40);
        EXPECT_EQ(r.rows, 40);
        EXPECT_EQ(r.columns, 2);
    }
}

TEST(Benchmark, ReportIsDeterministic) {
    const auto dir = scratch_dir("determinism");
    const auto csv = write_synthetic(dir, 2);
    const RunConfig c = tiny_config(csv, "nested");
    EXPECT_EQ(report_json(run_benchmark(c)), report_json(run_benchmark(c)));
    EXPECT_EQ(report_json(run_baseline(c)), report_json(run_baseline(c)));
}

TEST(Benchmark, HeldOutTargetsNeverReachTraining) {
    // Corrupt the targets of outer fold 0: every other fold's theta and RMSE,
    // and fold 0's theta, must be unchanged.
    const auto dir = scratch_dir("hygiene");
    const auto csv = write_synthetic(dir, 3);
    const RunConfig c = tiny_config(csv, "nested");
    const BenchmarkReport clean = run_benchmark(c);

    const CsvTable table = read_csv_table(csv.string());
    const FoldPlan plan = make_folds(40, 3, Rng(c.search.seed).split(1).next());
    const fs::path dirty = dir / "dirty.csv";
    {
        std::ofstream out(dirty);
        out << "a,b,y\n";
        for (Index i = 0; i < 40; ++i) {
            const double y = plan.assignments[static_cast<std::size_t>(i)] == 0 ? 1e3 : table.values(i, 2);
            out << format_double(table.values(i, 0)) << "," << format_double(table.values(i, 1)) << "," << format_double(y) << "\n";
        }
    }
    RunConfig d = c;
    d.dataset = dirty.string();
    const BenchmarkReport corrupted = run_benchmark(d);
    EXPECT_EQ(corrupted.folds[0].theta, clean.folds[0].theta);
    EXPECT_GT(corrupted.folds[0].rmse, 100.0);
    for (std::size_t f = 1; f < 3; ++f) {
        EXPECT_NE(corrupted.folds[f].theta, clean.folds[f].theta);  // fold 0 rows are training data here
    }
}

TEST(Benchmark, CheckpointResumesToSameReport) {
    const auto dir = scratch_dir("checkpoint");
    const auto csv = write_synthetic(dir, 5);
    const RunConfig c = tiny_config(csv, "nested");
    const std::string fresh = report_json(run_benchmark(c));

    const fs::path ck = dir / "checkpoint.json";
    const fs::path mid = dir / "mid.json";
    int seen = 0;
    EXPECT_EQ(report_json(run_benchmark(c, ck, [&](const std::string &line) {
                  // first trial of outer fold 1
                  if (line.starts_with("trial") && ++seen == 4) fs::copy_file(ck, mid);
              })),
              fresh);
    const json j = json::parse(read_text_file(mid));
    ASSERT_EQ(j["folds"].size(), 1u);
    ASSERT_EQ(j["history"].size(), 1u);
    fs::copy_file(mid, ck, fs::copy_options::overwrite_existing);
    int trials_run = 0;
    const std::string resumed = report_json(run_benchmark(c, ck, [&](const std::string &line) {
        if (line.starts_with("trial")) ++trials_run;
    }));
    EXPECT_EQ(resumed, fresh);
    EXPECT_EQ(trials_run, 3 + 3);  // fold 1 replays its first trial, fold 2 runs fresh

    RunConfig other = c;
    other.resolved["seed"] = 99;
    EXPECT_THROW(run_benchmark(other, ck), ConfigError);
}

TEST(Benchmark, MissingDatasetKeysAreConfigErrors) {
    RunConfig c = parse_run_config(default_config());
    EXPECT_THROW(run_benchmark(c), ConfigError);
    EXPECT_THROW(run_baseline(c), ConfigError);
}

TEST(Baseline, SharesOuterFolds) {
    const auto dir = scratch_dir("baseline");
    const auto csv = write_synthetic(dir, 6, 60);
    const RunConfig c = tiny_config(csv, "global");
    const BenchmarkReport pce = run_benchmark(c);
    const BenchmarkReport base = run_baseline(c);
    ASSERT_EQ(base.folds.size(), pce.folds.size());
    for (std::size_t f = 0; f < base.folds.size(); ++f) EXPECT_EQ(base.folds[f].test_rows, pce.folds[f].test_rows);
    EXPECT_EQ(base.folds[0].theta.size(), 4);  // two lengthscales, variance, noise
    EXPECT_LT(base.mean_rmse, 0.2);
}
