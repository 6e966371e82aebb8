#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcegp/bench.hpp"
#include "pcegp/config.hpp"
#include "pcegp/io.hpp"
#include "pcegp/optim.hpp"

namespace fs = std::filesystem;
using namespace pcegp;

namespace {

struct CommonArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string output;
    bool quiet = false;
};

void add_common(CLI::App *cmd, CommonArgs &a) {
    cmd->add_option("--config", a.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", a.overrides, "Override a config value, dotted key=value (repeatable)")->take_all();
    cmd->add_option("--seed", a.seed, "Master seed");
    cmd->add_option("--threads", a.threads, "Worker threads")->envname("PCEGP_THREADS")->check(CLI::PositiveNumber);
    cmd->add_flag("--quiet,-q", a.quiet, "No progress output");
}

RunConfig resolve(const CommonArgs &a) {
    std::vector<std::string> overrides = a.overrides;
    if (a.seed) overrides.push_back("seed=" + std::to_string(*a.seed));
    if (a.threads) overrides.push_back("threads=" + std::to_string(*a.threads));
    return load_run_config(a.config, overrides);
}

ProgressFn progress_sink(bool quiet) {
    if (quiet) return {};
    return [](const std::string &line) { std::cerr << line << "\n"; };
}

fs::path require_output(const CommonArgs &a, const char *cmd) {
    if (a.output.empty()) throw ConfigError(std::string(cmd) + " needs --output DIR");
    return fs::path(a.output);
}

int cmd_fit(const CommonArgs &a) {
    const RunConfig cfg = resolve(a);
    const fs::path out = require_output(a, "fit");
    if (cfg.dataset.empty()) throw ConfigError("config key 'dataset' is not set");
    if (cfg.target.empty()) throw ConfigError("config key 'target' is not set");
    const Dataset data = load_csv(cfg.dataset, cfg.target);
    const auto progress = progress_sink(a.quiet);
    auto flush = [&](const std::vector<TrialRecord> &history) {
        write_text_file(out / "history.json", history_json(history).dump(1) + "\n");
        if (progress) progress("trial " + std::to_string(history.back().trial_index) + " loss " +
                               format_double(history.back().loss));
    };
    SearchResult res;
    try {
        res = run_search(data, cfg.space, cfg.search, {}, flush);
    } catch (const SearchFailed &e) {
        write_text_file(out / "history.json", history_json(e.history()).dump(1) + "\n");
        throw;
    }
    std::vector<Index> all(static_cast<std::size_t>(data.size()));
    std::iota(all.begin(), all.end(), Index{0});
    const auto scalers = fit_scalers(data, all, cfg.search.input_scaler, cfg.search.output_scaler);
    const FittedModel fitted = fit_theta(cfg.space, res.best_theta, data, all, scalers.first, scalers.second, 0, cfg.search.adam);
    TrainingReference ref{fs::absolute(cfg.dataset).lexically_normal().string(), cfg.target, data.column_names, data.size()};
    write_text_file(out / "model.json", model_document(fitted.model, fitted.theta, ref));
    std::cout << "best trial " << res.best_trial << " loss " << format_double(res.best_loss) << "\n"
              << "wrote " << (out / "model.json").string() << "\n";
    return 0;
}

int cmd_predict(const std::string &model_path, const std::string &input_path, const std::string &output) {
    const LoadedModel loaded = load_model(read_text_file(model_path));
    const Matrix X = load_inputs_csv(input_path, loaded.training.columns, loaded.training.target);
    std::string text = "mean,variance\n";
    if (X.rows() > 0) {
        for (const auto &p : loaded.model.predict_batch(X)) text += format_double(p.mean) + "," + format_double(p.variance) + "\n";
    }
    if (output.empty()) {
        std::cout << text;
    } else {
        write_text_file(output, text);
    }
    return 0;
}

int cmd_inspect(const std::string &model_path, const std::string &output) {
    const LoadedModel loaded = load_model(read_text_file(model_path));
    const std::string text = inspect_report(loaded.model);
    if (output.empty()) {
        std::cout << text;
    } else {
        write_text_file(output, text);
    }
    return 0;
}

int cmd_benchmark(const CommonArgs &a, bool baseline) {
    const RunConfig cfg = resolve(a);
    const fs::path out = require_output(a, baseline ? "baseline" : "benchmark");
    fs::create_directories(out);
    const auto progress = progress_sink(a.quiet);
    const std::string stem = baseline ? "baseline" : "report";
    BenchmarkReport report;
    if (baseline) {
        report = run_baseline(cfg, progress);
    } else {
        const fs::path ck = out / "checkpoint.json";
        if (!a.quiet) std::cerr << "checkpoint " << ck.string() << " (rerun the same command to resume)\n";
        report = run_benchmark(cfg, ck, progress);
    }
    write_text_file(out / (stem + ".json"), report_json(report));
    const std::string table = report_table(report);
    write_text_file(out / (stem + ".txt"), table);
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    tune_allocator();
    CLI::App app{"PCEGP: Gaussian process regression with polynomial chaos lengthscales"};
    app.require_subcommand(1);

    CommonArgs fit_args;
    auto *fit = app.add_subcommand("fit", "Search hyperparameters and write a model file");
    add_common(fit, fit_args);
    fit->add_option("--output,-o", fit_args.output, "Output directory (model.json, history.json)");

    std::string model_path, input_path, predict_out;
    auto *predict = app.add_subcommand("predict", "Predict mean and variance for a CSV of inputs");
    predict->add_option("--model,-m", model_path, "Model file")->required()->check(CLI::ExistingFile);
    predict->add_option("--input,-i", input_path, "Input CSV")->required()->check(CLI::ExistingFile);
    predict->add_option("--output,-o", predict_out, "Output CSV (default stdout)");

    CommonArgs bench_args;
    auto *bench = app.add_subcommand("benchmark", "Cross-validated RMSE of PCEGP");
    add_common(bench, bench_args);
    bench->add_option("--output,-o", bench_args.output, "Output directory (report.json, report.txt, checkpoint.json)");

    CommonArgs base_args;
    auto *base = app.add_subcommand("baseline", "Cross-validated RMSE of a stationary ARD squared-exponential GP");
    add_common(base, base_args);
    base->add_option("--output,-o", base_args.output, "Output directory (baseline.json, baseline.txt)");

    std::string inspect_model, inspect_out;
    auto *inspect = app.add_subcommand("inspect", "Print the fitted hyperparameter polynomials");
    inspect->add_option("--model,-m", inspect_model, "Model file")->required()->check(CLI::ExistingFile);
    inspect->add_option("--output,-o", inspect_out, "Write the report here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 2;
    }

    try {
        if (fit->parsed()) return cmd_fit(fit_args);
        if (predict->parsed()) return cmd_predict(model_path, input_path, predict_out);
        if (bench->parsed()) return cmd_benchmark(bench_args, false);
        if (base->parsed()) return cmd_benchmark(base_args, true);
        if (inspect->parsed()) return cmd_inspect(inspect_model, inspect_out);
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
