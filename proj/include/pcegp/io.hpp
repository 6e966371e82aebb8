#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcegp/data.hpp"
#include "pcegp/gp.hpp"
#include "pcegp/optim.hpp"

namespace pcegp {

using json = nlohmann::ordered_json;

/// Shortest decimal that reads back to the same double, with a compact
/// exponent ("1e-4" rather than "1e-04").
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    const auto e = s.find('e');
    if (e != std::string::npos) {
        std::string mant = s.substr(0, e);
        std::string exp = s.substr(e + 1);
        std::string sign;
        if (!exp.empty() && (exp[0] == '-' || exp[0] == '+')) {
            if (exp[0] == '-') sign = "-";
            exp.erase(0, 1);
        }
        exp.erase(0, std::min(exp.find_first_not_of('0'), exp.size() - 1));
        s = mant + "e" + sign + exp;
    }
    return s;
}

inline double parse_double(std::string_view text) {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    if (text == "inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw std::invalid_argument("not a number: '" + std::string(text) + "'");
    return v;
}

// Non-finite values become null.
inline json number_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_from_json(const json &j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline json vector_json(const Vector &v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(number_json(v[i]));
    return a;
}

inline Vector vector_from_json(const json &j) {
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = number_from_json(j[i]);
    return v;
}

inline json doubles_json(const std::vector<double> &v) {
    json a = json::array();
    for (double x : v) a.push_back(number_json(x));
    return a;
}

inline std::vector<double> doubles_from_json(const json &j) {
    std::vector<double> out;
    for (const auto &x : j) out.push_back(number_from_json(x));
    return out;
}

/// Writes through a temporary file so readers never see a half-written file.
inline void write_text_file(const std::filesystem::path &path, const std::string &text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << text;
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_text_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------- records

inline json trial_json(const TrialRecord &t, bool with_time = true) {
    json j;
    j["trial"] = t.trial_index;
    j["stage"] = to_string(t.stage);
    j["theta"] = vector_json(t.theta);
    j["fold_losses"] = doubles_json(t.fold_losses);
    j["fold_rmse"] = doubles_json(t.fold_rmse);
    j["loss"] = number_json(t.loss);
    j["failed"] = t.failed;
    if (t.failed) j["failure"] = t.failure;
    if (with_time) j["wall_seconds"] = t.wall_seconds;
    return j;
}

inline TrialRecord trial_from_json(const json &j) {
    TrialRecord t;
    t.trial_index = j.at("trial").get<int>();
    t.stage = j.at("stage").get<std::string>() == "tpe" ? TrialStage::tpe : TrialStage::random;
    t.theta = vector_from_json(j.at("theta"));
    t.fold_losses = doubles_from_json(j.at("fold_losses"));
    t.fold_rmse = doubles_from_json(j.at("fold_rmse"));
    t.loss = number_from_json(j.at("loss"));
    t.failed = j.at("failed").get<bool>();
    if (j.contains("failure")) t.failure = j["failure"].get<std::string>();
    if (j.contains("wall_seconds")) t.wall_seconds = j["wall_seconds"].get<double>();
    return t;
}

inline json history_json(const std::vector<TrialRecord> &history) {
    json a = json::array();
    for (const auto &t : history) a.push_back(trial_json(t));
    return a;
}

inline std::vector<TrialRecord> history_from_json(const json &j) {
    std::vector<TrialRecord> out;
    for (const auto &t : j) out.push_back(trial_from_json(t));
    return out;
}

inline json scaler_json(const ScalerState &s) {
    return json{{"kind", to_string(s.kind)}, {"offset", vector_json(s.offset)}, {"scale", vector_json(s.scale)}};
}

inline ScalerState scaler_from_json(const json &j) {
    ScalerState s;
    s.kind = parse_scaler_kind(j.at("kind").get<std::string>());
    s.offset = vector_from_json(j.at("offset"));
    s.scale = vector_from_json(j.at("scale"));
    if (s.offset.size() != s.scale.size()) throw DataError("scaler offset and scale differ in length");
    return s;
}

inline json terms_json(const std::vector<BasisTerm> &terms) {
    json a = json::array();
    for (const auto &t : terms) a.push_back(json{{"basis", to_string(t.kind)}, {"coefficients", vector_json(t.coefficients)}});
    return a;
}

inline std::vector<BasisTerm> terms_from_json(const json &j) {
    std::vector<BasisTerm> out;
    for (const auto &t : j)
        out.push_back({parse_basis_kind(t.at("basis").get<std::string>()), vector_from_json(t.at("coefficients"))});
    return out;
}

inline json stack_json(const KernelStack &stack) {
    json a = json::array();
    for (const auto &e : stack.entries()) {
        json k{{"family", to_string(e.form.family)}};
        if (e.form.family == KernelFamily::rational_quadratic) k["shape"] = e.form.shape;
        k["variance"] = e.variance;
        k["lengthscale"] = terms_json(e.lengthscale.terms());
        a.push_back(std::move(k));
    }
    return a;
}

inline KernelStack stack_from_json(const json &j, Index n_inputs) {
    std::vector<KernelEntry> entries;
    for (const auto &k : j) {
        KernelForm form{parse_kernel_family(k.at("family").get<std::string>()), k.value("shape", 1.0)};
        entries.push_back({form, k.at("variance").get<double>(),
                           LengthscaleField(terms_from_json(k.at("lengthscale")), n_inputs)});
    }
    return KernelStack(std::move(entries));
}

inline json noise_json(const NoiseField &noise) {
    if (noise.is_fixed()) return json{{"mode", "fixed"}, {"value", noise.fixed_value()}, {"floor", noise.floor()}};
    return json{{"mode", "pce"}, {"terms", terms_json(noise.terms())}, {"floor", noise.floor()}};
}

inline NoiseField noise_from_json(const json &j) {
    const double floor = j.value("floor", NoiseField::default_floor);
    if (j.at("mode").get<std::string>() == "fixed") return NoiseField::fixed(j.at("value").get<double>(), floor);
    return NoiseField::pce(terms_from_json(j.at("terms")), floor);
}

// ---------------------------------------------------------------- model file

/// Where the training rows of a saved model come from.
struct TrainingReference {
    std::string dataset;  // path as written in the config
    std::string target;
    std::vector<std::string> columns;
    Index rows = 0;
};

inline std::string model_document(const PcegpModel &model, const Vector &theta, const TrainingReference &ref) {
    json doc;
    doc["format"] = "pcegp-model";
    doc["version"] = 1;
    doc["training"] = json{{"dataset", ref.dataset}, {"target", ref.target}, {"columns", ref.columns}, {"rows", ref.rows}};
    doc["theta"] = vector_json(theta);
    doc["kernels"] = stack_json(model.stack());
    doc["noise"] = noise_json(model.noise());
    doc["input_scaler"] = scaler_json(model.input_scaler());
    doc["output_scaler"] = scaler_json(model.output_scaler());
    return doc.dump(2) + "\n";
}

struct LoadedModel {
    PcegpModel model;
    Vector theta;
    TrainingReference training;
};

/// Parses a model document and refits it on the referenced training data.
/// Relative dataset paths resolve against `base_dir`.
inline LoadedModel load_model(const std::string &text, const std::filesystem::path &base_dir = {}) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception &e) {
        throw DataError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (doc.value("format", "") != "pcegp-model") throw DataError("not a pcegp model file");
        TrainingReference ref;
        const auto &tr = doc.at("training");
        ref.dataset = tr.at("dataset").get<std::string>();
        ref.target = tr.at("target").get<std::string>();
        ref.columns = tr.at("columns").get<std::vector<std::string>>();
        ref.rows = tr.at("rows").get<Index>();
        std::filesystem::path data_path(ref.dataset);
        if (data_path.is_relative() && !base_dir.empty()) data_path = base_dir / data_path;
        const Dataset data = load_csv(data_path.string(), ref.target);
        if (data.column_names != ref.columns)
            throw DataError("training data '" + data_path.string() + "' no longer has the columns the model was fit on");
        if (data.size() != ref.rows)
            throw DataError("training data '" + data_path.string() + "' has " + std::to_string(data.size()) +
                            " rows, model was fit on " + std::to_string(ref.rows));
        KernelStack stack = stack_from_json(doc.at("kernels"), data.n_inputs());
        NoiseField noise = noise_from_json(doc.at("noise"));
        PcegpModel model = fit_precompute(std::move(stack), std::move(noise), scaler_from_json(doc.at("input_scaler")),
                                          scaler_from_json(doc.at("output_scaler")), data.inputs, data.outputs);
        return {std::move(model), vector_from_json(doc.at("theta")), std::move(ref)};
    } catch (const json::exception &e) {
        throw DataError(std::string("corrupt model file: ") + e.what());
    } catch (const std::invalid_argument &e) {
        throw DataError(std::string("corrupt model file: ") + e.what());
    }
}

// ---------------------------------------------------------------- inspect

inline std::string polynomial_text(const Vector &coefficients) {
    std::string s;
    for (Index i = 0; i < coefficients.size(); ++i) {
        if (i) s += " + ";
        s += format_double(coefficients[i]) + " · φ_" + std::to_string(i);
    }
    return s;
}

/// Human-readable listing of every hyperparameter as explicit polynomial terms.
inline std::string inspect_report(const PcegpModel &model) {
    std::ostringstream os;
    const auto &entries = model.stack().entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const auto &e = entries[k];
        os << "kernel " << k << ": " << to_string(e.form.family);
        if (e.form.family == KernelFamily::rational_quadratic) os << " shape " << format_double(e.form.shape);
        os << "\n  variance: " << format_double(e.variance) << "\n";
        for (const auto &t : e.lengthscale.terms())
            os << "  lengthscale " << to_string(t.kind) << ": " << polynomial_text(t.coefficients) << "\n";
    }
    const auto &noise = model.noise();
    if (noise.is_fixed()) {
        os << "noise: fixed " << format_double(noise.fixed_value()) << "\n";
    } else {
        os << "noise: pce floor " << format_double(noise.floor()) << "\n";
        for (const auto &t : noise.terms()) os << "  noise " << to_string(t.kind) << ": " << polynomial_text(t.coefficients) << "\n";
    }
    const auto &out = model.output_scaler();
    os << "output scaler: " << to_string(out.kind) << " offset " << format_double(out.offset[0]) << " scale "
       << format_double(out.scale[0]) << "\n";
    return os.str();
}

struct InspectedKernel {
    std::string family;
    double variance = 0.0;
    std::vector<BasisTerm> lengthscale;
};

struct InspectedModel {
    std::vector<InspectedKernel> kernels;
    bool noise_fixed = true;
    double noise_value = 0.0;
    std::vector<BasisTerm> noise_terms;
};

inline Vector parse_polynomial(std::string_view text) {
    std::vector<double> coeffs;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find(" + ", pos);
        if (end == std::string_view::npos) end = text.size();
        const auto term = text.substr(pos, end - pos);
        const auto dot = term.find(" · φ_");
        if (dot == std::string_view::npos) throw std::invalid_argument("malformed term '" + std::string(term) + "'");
        if (std::stoul(std::string(term.substr(dot + std::string_view(" · φ_").size()))) != coeffs.size())
            throw std::invalid_argument("terms out of order in '" + std::string(text) + "'");
        coeffs.push_back(parse_double(term.substr(0, dot)));
        pos = end + 3;
    }
    return Eigen::Map<const Vector>(coeffs.data(), static_cast<Index>(coeffs.size()));
}

/// Reads an inspect_report back into coefficients.
inline InspectedModel parse_inspect_report(const std::string &text) {
    InspectedModel out;
    std::istringstream in(text);
    std::string line;
    auto after = [](const std::string &s, const std::string &prefix) { return s.substr(prefix.size()); };
    while (std::getline(in, line)) {
        if (line.starts_with("kernel ")) {
            InspectedKernel k;
            const auto colon = line.find(": ");
            std::string rest = line.substr(colon + 2);
            k.family = rest.substr(0, rest.find(' '));
            out.kernels.push_back(std::move(k));
        } else if (line.starts_with("  variance: ")) {
            out.kernels.back().variance = parse_double(after(line, "  variance: "));
        } else if (line.starts_with("  lengthscale ") || line.starts_with("  noise ")) {
            const bool ls = line.starts_with("  lengthscale ");
            const std::string body = after(line, ls ? "  lengthscale " : "  noise ");
            const auto colon = body.find(": ");
            BasisTerm t{parse_basis_kind(body.substr(0, colon)), parse_polynomial(body.substr(colon + 2))};
            (ls ? out.kernels.back().lengthscale : out.noise_terms).push_back(std::move(t));
        } else if (line.starts_with("noise: fixed ")) {
            out.noise_fixed = true;
            out.noise_value = parse_double(after(line, "noise: fixed "));
        } else if (line.starts_with("noise: pce")) {
            out.noise_fixed = false;
        }
    }
    return out;
}

}  // namespace pcegp
