#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pcegp/baseline.hpp"
#include "pcegp/io.hpp"
#include "pcegp/optim.hpp"

namespace pcegp {

enum class BenchMode { global, nested };

inline std::string to_string(BenchMode m) { return m == BenchMode::global ? "global" : "nested"; }

inline BenchMode parse_bench_mode(std::string_view text) {
    if (text == "global") return BenchMode::global;
    if (text == "nested") return BenchMode::nested;
    throw ConfigError("mode must be 'global' or 'nested', got '" + std::string(text) + "'");
}

/// Everything a run needs. `resolved` is the merged JSON the values came from.
struct RunConfig {
    std::string dataset;
    std::string target;
    BenchMode mode = BenchMode::global;
    int inner_folds = 10;
    SearchSpace space;
    SearchSettings search;
    BaselineSettings baseline;
    json resolved;
};

/// Every accepted key with its default. Keys outside this tree are rejected.
inline json default_config() {
    return json::parse(R"({
  "dataset": null,
  "target": null,
  "seed": 0,
  "threads": 1,
  "folds": 10,
  "trials": 100,
  "initial_trials": 20,
  "iterations": 100,
  "mode": "global",
  "inner_folds": 10,
  "global_scaling": false,
  "refine_best": true,
  "scaling": {"inputs": "min_max", "output": "z_normalize"},
  "model": {
    "kernels": ["squared_exponential", "absolute_exponential", "matern_3_2", "rational_quadratic"],
    "rq_shape": 1.0,
    "lengthscale_bases": ["legendre_shifted_01"],
    "degree_min": 5,
    "degree_max": 10,
    "coefficient_min": -2.0,
    "coefficient_max": 2.0,
    "variance_min": 0.001,
    "variance_max": 10.0,
    "noise": {
      "mode": "fixed",
      "value": 0.0001,
      "bases": ["legendre_shifted_01"],
      "degree_min": 0,
      "degree_max": 2,
      "floor": 1e-8
    }
  },
  "adam": {"step_size": 0.01, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8},
  "tpe": {"gamma": 0.25, "candidates": 24},
  "baseline": {"iterations": 300, "step_size": 0.05}
})");
}

namespace detail {

inline void merge_into(json &base, const json &user, const std::string &prefix) {
    if (!user.is_object()) throw ConfigError("config" + (prefix.empty() ? "" : " key '" + prefix + "'") + " must be an object");
    for (const auto &[key, value] : user.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
        if (base[key].is_object()) {
            merge_into(base[key], value, path);
        } else {
            base[key] = value;
        }
    }
}

template <class T>
T get_as(const json &root, const std::string &path) {
    const json *node = &root;
    std::size_t pos = 0;
    while (true) {
        const auto dot = path.find('.', pos);
        node = &node->at(path.substr(pos, dot - pos));
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    try {
        return node->get<T>();
    } catch (const json::exception &) {
        throw ConfigError("config key '" + path + "' has the wrong type: " + node->dump());
    }
}

}  // namespace detail

/// Applies one dotted `key=value` override. The value is read as JSON when it
/// parses, otherwise as a string.
inline void apply_override(json &config, const std::string &assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    std::vector<std::string> parts;
    for (std::size_t pos = 0;;) {
        const auto dot = key.find('.', pos);
        parts.push_back(key.substr(pos, dot - pos));
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    const json *probe = &config;
    std::string walked;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        walked += (i ? "." : "") + parts[i];
        if (!probe->is_object() || !probe->contains(parts[i])) throw ConfigError("unknown config key '" + walked + "'");
        probe = &(*probe)[parts[i]];
    }
    if (probe->is_object()) {
        if (!value.is_object()) throw ConfigError("config key '" + key + "' expects an object");
        json target = *probe;
        detail::merge_into(target, value, key);
        value = target;
    }
    json *node = &config;
    for (const auto &p : parts) node = &(*node)[p];
    *node = value;
}

/// Turns merged JSON into typed settings, validating every value.
inline RunConfig parse_run_config(const json &resolved) {
    using detail::get_as;
    RunConfig c;
    c.resolved = resolved;
    try {
        if (!resolved.at("dataset").is_null()) c.dataset = get_as<std::string>(resolved, "dataset");
        if (!resolved.at("target").is_null()) c.target = get_as<std::string>(resolved, "target");
        c.mode = parse_bench_mode(get_as<std::string>(resolved, "mode"));
        c.inner_folds = get_as<int>(resolved, "inner_folds");

        auto &s = c.search;
        s.seed = get_as<std::uint64_t>(resolved, "seed");
        s.threads = get_as<int>(resolved, "threads");
        s.n_folds = get_as<int>(resolved, "folds");
        s.n_trials = get_as<int>(resolved, "trials");
        s.n_initial = get_as<int>(resolved, "initial_trials");
        s.n_iterations = get_as<int>(resolved, "iterations");
        s.global_scaling = get_as<bool>(resolved, "global_scaling");
        s.refine_best = get_as<bool>(resolved, "refine_best");
        s.input_scaler = parse_scaler_kind(get_as<std::string>(resolved, "scaling.inputs"));
        s.output_scaler = parse_scaler_kind(get_as<std::string>(resolved, "scaling.output"));
        s.adam = {get_as<double>(resolved, "adam.step_size"), get_as<double>(resolved, "adam.beta1"),
                  get_as<double>(resolved, "adam.beta2"), get_as<double>(resolved, "adam.epsilon")};
        s.tpe = {get_as<double>(resolved, "tpe.gamma"), get_as<int>(resolved, "tpe.candidates")};

        auto &sp = c.space;
        sp.kernels.clear();
        const double rq_shape = get_as<double>(resolved, "model.rq_shape");
        for (const auto &name : get_as<std::vector<std::string>>(resolved, "model.kernels")) {
            const auto family = parse_kernel_family(name);
            sp.kernels.push_back(KernelForm{family, family == KernelFamily::rational_quadratic ? rq_shape : 1.0});
        }
        sp.lengthscale_bases.clear();
        for (const auto &name : get_as<std::vector<std::string>>(resolved, "model.lengthscale_bases"))
            sp.lengthscale_bases.push_back(parse_basis_kind(name));
        sp.q_min = get_as<int>(resolved, "model.degree_min");
        sp.q_max = get_as<int>(resolved, "model.degree_max");
        sp.coeff_lo = get_as<double>(resolved, "model.coefficient_min");
        sp.coeff_hi = get_as<double>(resolved, "model.coefficient_max");
        sp.scale_lo = get_as<double>(resolved, "model.variance_min");
        sp.scale_hi = get_as<double>(resolved, "model.variance_max");
        sp.noise_mode = parse_noise_mode(get_as<std::string>(resolved, "model.noise.mode"));
        sp.noise_value = get_as<double>(resolved, "model.noise.value");
        sp.noise_bases.clear();
        for (const auto &name : get_as<std::vector<std::string>>(resolved, "model.noise.bases"))
            sp.noise_bases.push_back(parse_basis_kind(name));
        sp.r_min = get_as<int>(resolved, "model.noise.degree_min");
        sp.r_max = get_as<int>(resolved, "model.noise.degree_max");
        sp.noise_floor = get_as<double>(resolved, "model.noise.floor");

        c.baseline.n_iterations = get_as<int>(resolved, "baseline.iterations");
        c.baseline.adam.step_size = get_as<double>(resolved, "baseline.step_size");
        c.baseline.input_scaler = s.input_scaler;
        c.baseline.output_scaler = s.output_scaler;

        if (c.inner_folds < 2) throw ConfigError("inner_folds must be >= 2");
        sp.validate();
        s.validate();
        c.baseline.validate();
    } catch (const std::invalid_argument &e) {
        throw ConfigError(e.what());
    }
    return c;
}

/// Defaults, then the config file (if any), then overrides in order. A
/// relative dataset path in the file resolves against the file's directory
/// and is stored absolute.
inline RunConfig load_run_config(const std::string &path, const std::vector<std::string> &overrides) {
    json merged = default_config();
    if (!path.empty()) {
        json user;
        try {
            user = json::parse(read_text_file(path));
        } catch (const json::exception &e) {
            throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
        } catch (const std::runtime_error &e) {
            throw ConfigError(e.what());
        }
        detail::merge_into(merged, user, "");
        if (merged["dataset"].is_string()) {
            std::filesystem::path p(merged["dataset"].get<std::string>());
            if (p.is_relative())
                merged["dataset"] = (std::filesystem::absolute(path).parent_path() / p).lexically_normal().string();
        }
    }
    for (const auto &o : overrides) apply_override(merged, o);
    return parse_run_config(merged);
}

}  // namespace pcegp
