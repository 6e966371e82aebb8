#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pcegp/baseline.hpp"
#include "pcegp/config.hpp"
#include "pcegp/io.hpp"
#include "pcegp/optim.hpp"

namespace pcegp {

struct FoldResult {
    int fold = 0;
    Index test_rows = 0;
    double rmse = 0.0;
    Vector theta;  // refined PCEGP theta, or baseline [lengthscales, variance, noise]
    int best_trial = -1;
    double best_loss = std::numeric_limits<double>::infinity();
};

struct BenchmarkReport {
    std::string method;  // "pcegp" or "baseline"
    BenchMode mode = BenchMode::global;
    std::string dataset;
    std::string target;
    Index rows = 0;
    Index columns = 0;
    std::vector<FoldResult> folds;
    double mean_rmse = 0.0;
    double std_rmse = 0.0;  // sample standard deviation over folds
    Vector best_theta;      // global mode only
    json config;
};

inline std::pair<double, double> mean_and_std(const std::vector<double> &v) {
    if (v.empty()) throw std::invalid_argument("mean_and_std: empty input");
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline void finish_report(BenchmarkReport &r) {
    std::vector<double> values;
    for (const auto &f : r.folds) values.push_back(f.rmse);
    std::tie(r.mean_rmse, r.std_rmse) = mean_and_std(values);
}

inline json fold_result_json(const FoldResult &f) {
    json j{{"fold", f.fold}, {"test_rows", f.test_rows}, {"rmse", number_json(f.rmse)}};
    if (f.best_trial >= 0) {
        j["best_trial"] = f.best_trial;
        j["best_loss"] = number_json(f.best_loss);
    }
    if (f.theta.size() > 0) j["theta"] = vector_json(f.theta);
    return j;
}

inline FoldResult fold_result_from_json(const json &j) {
    FoldResult f;
    f.fold = j.at("fold").get<int>();
    f.test_rows = j.at("test_rows").get<Index>();
    f.rmse = number_from_json(j.at("rmse"));
    if (j.contains("best_trial")) {
        f.best_trial = j["best_trial"].get<int>();
        f.best_loss = number_from_json(j["best_loss"]);
    }
    if (j.contains("theta")) f.theta = vector_from_json(j["theta"]);
    return f;
}

/// Machine-readable report. Holds no timing so repeated runs compare equal.
inline std::string report_json(const BenchmarkReport &r) {
    json j;
    j["method"] = r.method;
    j["mode"] = to_string(r.mode);
    j["dataset"] = json{{"file", r.dataset}, {"target", r.target}, {"rows", r.rows}, {"columns", r.columns}};
    json folds = json::array();
    for (const auto &f : r.folds) folds.push_back(fold_result_json(f));
    j["folds"] = std::move(folds);
    j["mean_rmse"] = number_json(r.mean_rmse);
    j["std_rmse"] = number_json(r.std_rmse);
    if (r.best_theta.size() > 0) j["best_theta"] = vector_json(r.best_theta);
    j["config"] = r.config;
    return j.dump(2) + "\n";
}

inline std::string report_table(const BenchmarkReport &r) {
    std::ostringstream os;
    os << r.method << " " << to_string(r.mode) << " | " << std::filesystem::path(r.dataset).filename().string() << " ("
       << r.rows << " rows, " << r.columns << " inputs) target " << r.target << " | seed "
       << r.config.value("seed", 0) << "\n";
    os << "fold  rows        rmse\n";
    os << std::fixed;
    for (const auto &f : r.folds)
        os << std::setw(4) << f.fold << std::setw(6) << f.test_rows << std::setw(12) << std::setprecision(4) << f.rmse
           << "\n";
    os << "mean " << std::setprecision(4) << r.mean_rmse << "  std " << r.std_rmse << "\n";
    return os.str();
}

/// Progress sink: one line per finished trial or fold.
using ProgressFn = std::function<void(const std::string &)>;

namespace detail {

inline Dataset load_benchmark_data(const RunConfig &cfg) {
    if (cfg.dataset.empty()) throw ConfigError("config key 'dataset' is not set");
    if (cfg.target.empty()) throw ConfigError("config key 'target' is not set");
    return load_csv(cfg.dataset, cfg.target);
}

inline BenchmarkReport report_header(const std::string &method, const RunConfig &cfg, const Dataset &data) {
    BenchmarkReport r;
    r.method = method;
    r.mode = cfg.mode;
    r.dataset = cfg.dataset;
    r.target = cfg.target;
    r.rows = data.size();
    r.columns = data.n_inputs();
    r.config = cfg.resolved;
    return r;
}

/// Checkpoint file: the resolved config plus finished folds and the trial
/// history of the search in progress.
struct Checkpoint {
    std::filesystem::path path;
    json config;
    std::vector<FoldResult> done;
    std::vector<TrialRecord> history;

    void load_if_present() {
        if (path.empty() || !std::filesystem::exists(path)) return;
        const json j = json::parse(read_text_file(path));
        if (j.at("config") != config)
            throw ConfigError("checkpoint '" + path.string() + "' was written for a different configuration");
        for (const auto &f : j.at("folds")) done.push_back(fold_result_from_json(f));
        history = history_from_json(j.at("history"));
    }

    void save() const {
        if (path.empty()) return;
        json folds = json::array();
        for (const auto &f : done) folds.push_back(fold_result_json(f));
        write_text_file(path, json{{"config", config}, {"folds", folds}, {"history", history_json(history)}}.dump(1) + "\n");
    }
};

inline std::string trial_line(const TrialRecord &t) {
    std::ostringstream os;
    os << "trial " << t.trial_index << " " << to_string(t.stage) << " q=" << theta_q(t.theta) << " loss "
       << format_double(t.loss);
    if (t.failed) os << " (failed: " << t.failure << ")";
    return os.str();
}

}  // namespace detail

/// PCEGP cross-validated RMSE. Global mode tunes once with the outer folds as
/// the search folds and reports the winning trial's per-fold RMSE; nested mode
/// runs a full search inside every outer training portion.
inline BenchmarkReport run_benchmark(const RunConfig &cfg, const std::filesystem::path &checkpoint_path = {},
                                     const ProgressFn &progress = {}) {
    const Dataset data = detail::load_benchmark_data(cfg);
    BenchmarkReport report = detail::report_header("pcegp", cfg, data);
    detail::Checkpoint ck{checkpoint_path, cfg.resolved, {}, {}};
    ck.load_if_present();
    // Replayed trials are not written back, so a resume that diverges leaves the file intact.
    std::size_t replaying = ck.history.size();
    auto on_trial = [&](const std::vector<TrialRecord> &history) {
        if (history.size() > replaying) {
            ck.history = history;
            ck.save();
            replaying = 0;
        }
        if (progress) progress(detail::trial_line(history.back()));
    };

    if (cfg.mode == BenchMode::global) {
        SearchSettings s = cfg.search;
        const SearchResult res = run_search(data, cfg.space, s, {}, on_trial, ck.history);
        const auto &best = res.history[static_cast<std::size_t>(res.best_trial)];
        for (int f = 0; f < s.n_folds; ++f) {
            FoldResult fr;
            fr.fold = f;
            fr.test_rows = static_cast<Index>(res.folds.validation_indices(f).size());
            fr.rmse = best.fold_rmse[static_cast<std::size_t>(f)];
            fr.best_trial = res.best_trial;
            fr.best_loss = best.fold_losses[static_cast<std::size_t>(f)];
            report.folds.push_back(fr);
        }
        report.best_theta = res.best_theta;
        finish_report(report);
        return report;
    }

    Rng master(cfg.search.seed);
    const FoldPlan outer = make_folds(data.size(), cfg.search.n_folds, master.split(1).next());
    report.folds = ck.done;
    for (int f = static_cast<int>(ck.done.size()); f < cfg.search.n_folds; ++f) {
        const auto train = outer.train_indices(f);
        const auto test = outer.validation_indices(f);
        const Dataset inner = data.subset(train);
        SearchSettings s = cfg.search;
        s.n_folds = cfg.inner_folds;
        s.seed = master.split(100 + static_cast<std::uint64_t>(f)).next();
        s.refine_best = false;
        const SearchResult res = run_search(inner, cfg.space, s, {}, on_trial, ck.history);
        std::vector<Index> all(static_cast<std::size_t>(inner.size()));
        std::iota(all.begin(), all.end(), Index{0});
        const auto scalers = fit_scalers(inner, all, s.input_scaler, s.output_scaler);
        const FittedModel fitted = fit_theta(cfg.space, res.best_suggested, inner, all, scalers.first, scalers.second,
                                             s.n_iterations, s.adam);
        const Dataset held = data.subset(test);
        const auto preds = fitted.model.predict_batch(held.inputs);
        std::vector<double> means;
        for (const auto &p : preds) means.push_back(p.mean);
        FoldResult fr;
        fr.fold = f;
        fr.test_rows = static_cast<Index>(test.size());
        fr.rmse = rmse(means, std::vector<double>(held.outputs.data(), held.outputs.data() + held.outputs.size()));
        fr.theta = fitted.theta;
        fr.best_trial = res.best_trial;
        fr.best_loss = res.best_loss;
        report.folds.push_back(fr);
        ck.done = report.folds;
        ck.history.clear();
        ck.save();
        if (progress) progress("outer fold " + std::to_string(f) + " rmse " + format_double(fr.rmse));
    }
    finish_report(report);
    return report;
}

/// Stationary ARD squared-exponential GP on the same outer folds.
inline BenchmarkReport run_baseline(const RunConfig &cfg, const ProgressFn &progress = {}) {
    const Dataset data = detail::load_benchmark_data(cfg);
    BenchmarkReport report = detail::report_header("baseline", cfg, data);
    Rng master(cfg.search.seed);
    const FoldPlan outer = make_folds(data.size(), cfg.search.n_folds, master.split(1).next());
    std::vector<FoldResult> results(static_cast<std::size_t>(cfg.search.n_folds));
    parallel_for(cfg.search.n_folds, cfg.search.threads, [&](int f) {
        const auto test = outer.validation_indices(f);
        const BaselineModel model = fit_baseline(data, outer.train_indices(f), cfg.baseline);
        const Dataset held = data.subset(test);
        const auto preds = model.predict_batch(held.inputs);
        std::vector<double> means;
        for (const auto &p : preds) means.push_back(p.mean);
        FoldResult &fr = results[static_cast<std::size_t>(f)];
        fr.fold = f;
        fr.test_rows = static_cast<Index>(test.size());
        fr.rmse = rmse(means, std::vector<double>(held.outputs.data(), held.outputs.data() + held.outputs.size()));
        const auto &p = model.params();
        fr.theta.resize(p.lengthscales.size() + 2);
        fr.theta << p.lengthscales, p.variance, p.noise;
    });
    report.folds = std::move(results);
    if (progress)
        for (const auto &f : report.folds) progress("fold " + std::to_string(f.fold) + " rmse " + format_double(f.rmse));
    finish_report(report);
    return report;
}

}  // namespace pcegp
