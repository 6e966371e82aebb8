#pragma once

// Tabular data ingestion, scaling and shuffled k-fold plans.

#include "pcegp/common.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pcegp {

struct Dataset {
    Matrix inputs;  // N x n_x, raw units
    Vector outputs;
    std::vector<std::string> column_names;  // input columns
    std::string target_name;

    Index size() const { return inputs.rows(); }
    Index n_inputs() const { return inputs.cols(); }

    void validate() const {
        if (inputs.rows() < 2) throw DataError("dataset needs at least 2 rows, got " + std::to_string(inputs.rows()));
        if (inputs.cols() < 1) throw DataError("dataset needs at least one input column");
        if (outputs.size() != inputs.rows())
            throw DataError("dataset has " + std::to_string(inputs.rows()) + " input rows but " +
                            std::to_string(outputs.size()) + " outputs");
        if (!inputs.allFinite() || !outputs.allFinite()) throw DataError("dataset contains non-finite values");
    }

    Dataset subset(const std::vector<Index> &rows) const {
        Dataset out;
        out.inputs.resize(static_cast<Index>(rows.size()), inputs.cols());
        out.outputs.resize(static_cast<Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.inputs.row(static_cast<Index>(i)) = inputs.row(rows[i]);
            out.outputs[static_cast<Index>(i)] = outputs[rows[i]];
        }
        out.column_names = column_names;
        out.target_name = target_name;
        return out;
    }
};

namespace detail {

inline std::string trim_cell(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

inline std::vector<std::string> split_row(const std::string &line, char delim) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') quoted = !quoted;
        if (c == delim && !quoted) {
            cells.push_back(trim_cell(cell));
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    cells.push_back(trim_cell(cell));
    return cells;
}

inline bool parse_number(const std::string &cell, double &value) {
    if (cell.empty()) return false;
    char *end = nullptr;
    value = std::strtod(cell.c_str(), &end);
    return end == cell.c_str() + cell.size() && std::isfinite(value);
}

}  // namespace detail

/// Header plus numeric rows of a delimited file (comma or semicolon).
struct CsvTable {
    std::vector<std::string> header;
    Matrix values;

    Index column(const std::string &name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<Index>(it - header.begin());
    }
};

inline CsvTable read_csv_table(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("data file '" + path + "' is empty (no header row)");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const char delim = std::count(line.begin(), line.end(), ';') > std::count(line.begin(), line.end(), ',') ? ';' : ',';

    CsvTable table;
    table.header = detail::split_row(line, delim);
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto cells = detail::split_row(line, delim);
        if (cells.size() != table.header.size()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(table.header.size()) +
                            " cells, found " + std::to_string(cells.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (!detail::parse_number(cells[c], row[c])) {
                throw DataError(path + ":" + std::to_string(line_no) + ": column '" + table.header[c] +
                                "' has non-numeric value '" + cells[c] + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(table.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) table.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    return table;
}

/// One Dataset per target column; inputs are every non-target column.
inline std::vector<Dataset> load_csv(const std::string &path, const std::vector<std::string> &target_columns) {
    if (target_columns.empty()) throw DataError("no target column given for '" + path + "'");
    const CsvTable table = read_csv_table(path);
    std::vector<Index> target_idx;
    for (const auto &t : target_columns) {
        const Index c = table.column(t);
        if (c < 0) throw DataError("target column '" + t + "' not found in '" + path + "'");
        target_idx.push_back(c);
    }
    std::vector<Index> input_idx;
    std::vector<std::string> input_names;
    for (Index c = 0; c < static_cast<Index>(table.header.size()); ++c) {
        if (std::find(target_idx.begin(), target_idx.end(), c) == target_idx.end()) {
            input_idx.push_back(c);
            input_names.push_back(table.header[static_cast<std::size_t>(c)]);
        }
    }
    std::vector<Dataset> out;
    for (std::size_t t = 0; t < target_idx.size(); ++t) {
        Dataset d;
        d.inputs = table.values(Eigen::all, input_idx);
        d.outputs = table.values.col(target_idx[t]);
        d.column_names = input_names;
        d.target_name = target_columns[t];
        d.validate();
        out.push_back(std::move(d));
    }
    return out;
}

inline Dataset load_csv(const std::string &path, const std::string &target_column) {
    return std::move(load_csv(path, std::vector<std::string>{target_column}).front());
}

/// Input matrix in the column order of `columns`. A column named `ignored`
/// (the training target) may be present; any other extra column is an error.
inline Matrix load_inputs_csv(const std::string &path, const std::vector<std::string> &columns,
                              const std::string &ignored = {}) {
    const CsvTable table = read_csv_table(path);
    std::vector<Index> idx;
    for (const auto &name : columns) {
        const Index c = table.column(name);
        if (c < 0) throw DataError("input file '" + path + "' is missing column '" + name + "'");
        idx.push_back(c);
    }
    for (const auto &name : table.header) {
        if (name != ignored && std::find(columns.begin(), columns.end(), name) == columns.end())
            throw DataError("input file '" + path + "' has unexpected column '" + name + "'");
    }
    return table.values(Eigen::all, idx);
}

enum class ScalerKind { min_max, z_normalize, identity };

inline std::string to_string(ScalerKind kind) {
    switch (kind) {
        case ScalerKind::min_max: return "min_max";
        case ScalerKind::z_normalize: return "z_normalize";
        case ScalerKind::identity: return "identity";
    }
    return "unknown";
}

inline ScalerKind parse_scaler_kind(const std::string &text) {
    if (text == "min_max") return ScalerKind::min_max;
    if (text == "z_normalize") return ScalerKind::z_normalize;
    if (text == "identity") return ScalerKind::identity;
    throw std::invalid_argument("unknown scaler '" + text + "'");
}

/// Per-column affine map x_s = (x - offset) / scale.
/// min_max: offset = min, scale = max - min. z_normalize: offset = mean,
/// scale = population std.
struct ScalerState {
    ScalerKind kind = ScalerKind::identity;
    Vector offset;
    Vector scale;

    Index dim() const { return offset.size(); }

    static ScalerState identity(Index dim) { return {ScalerKind::identity, Vector::Zero(dim), Vector::Ones(dim)}; }

    Vector apply(const Eigen::Ref<const Vector> &x) const {
        check(x.size());
        return (x - offset).cwiseQuotient(scale);
    }

    Vector inverse(const Eigen::Ref<const Vector> &x_s) const {
        check(x_s.size());
        return x_s.cwiseProduct(scale) + offset;
    }

    /// Row-wise apply.
    Matrix apply_rows(const Matrix &X) const {
        check(X.cols());
        return (X.rowwise() - offset.transpose()).array().rowwise() / scale.transpose().array();
    }

    Matrix inverse_rows(const Matrix &X_s) const {
        check(X_s.cols());
        return (X_s.array().rowwise() * scale.transpose().array()).rowwise() + offset.transpose().array();
    }

private:
    void check(Index n) const {
        if (n != dim()) {
            throw std::invalid_argument("scaler fitted on " + std::to_string(dim()) + " columns, got " +
                                        std::to_string(n));
        }
    }
};

inline ScalerState fit_scaler(ScalerKind kind, const Matrix &data, const std::vector<std::string> &names = {}) {
    const Index cols = data.cols();
    if (data.rows() < 1) throw DataError("cannot fit a scaler on zero rows");
    const auto column_label = [&](Index c) {
        return static_cast<std::size_t>(c) < names.size() ? "'" + names[static_cast<std::size_t>(c)] + "'"
                                                          : "#" + std::to_string(c);
    };
    ScalerState state{kind, Vector::Zero(cols), Vector::Ones(cols)};
    for (Index c = 0; c < cols; ++c) {
        const auto col = data.col(c);
        switch (kind) {
            case ScalerKind::identity: break;
            case ScalerKind::min_max: {
                const double lo = col.minCoeff();
                const double hi = col.maxCoeff();
                if (!(hi > lo)) throw DataError("column " + column_label(c) + " is constant; min-max scaling undefined");
                state.offset[c] = lo;
                state.scale[c] = hi - lo;
                break;
            }
            case ScalerKind::z_normalize: {
                const double mean = col.mean();
                const double sd = std::sqrt((col.array() - mean).square().mean());
                if (!(sd > 0.0)) throw DataError("column " + column_label(c) + " has zero standard deviation");
                state.offset[c] = mean;
                state.scale[c] = sd;
                break;
            }
        }
    }
    return state;
}

inline ScalerState fit_scaler(ScalerKind kind, const Vector &data, const std::string &name = {}) {
    return fit_scaler(kind, Matrix(data), name.empty() ? std::vector<std::string>{} : std::vector<std::string>{name});
}

inline Vector apply_scaler(const ScalerState &state, const Eigen::Ref<const Vector> &point) { return state.apply(point); }

struct ScaledPrediction {
    double mean;
    double variance;
};

/// Mean is inverted affinely; variance scales by the squared scale factor.
inline ScaledPrediction inverse_scale_prediction(const ScalerState &state, double mean_s, double var_s) {
    if (state.dim() != 1) throw std::invalid_argument("output scaler must be one-dimensional");
    const double s = state.scale[0];
    return {mean_s * s + state.offset[0], std::max(0.0, var_s) * s * s};
}

struct FoldPlan {
    int n_folds = 0;
    std::vector<int> assignments;
    std::uint64_t seed = 0;

    std::vector<Index> validation_indices(int fold) const {
        std::vector<Index> out;
        for (std::size_t i = 0; i < assignments.size(); ++i)
            if (assignments[i] == fold) out.push_back(static_cast<Index>(i));
        return out;
    }

    std::vector<Index> train_indices(int fold) const {
        std::vector<Index> out;
        for (std::size_t i = 0; i < assignments.size(); ++i)
            if (assignments[i] != fold) out.push_back(static_cast<Index>(i));
        return out;
    }

    std::vector<std::size_t> fold_sizes() const {
        std::vector<std::size_t> sizes(static_cast<std::size_t>(n_folds), 0);
        for (int a : assignments) ++sizes[static_cast<std::size_t>(a)];
        return sizes;
    }
};

/// Shuffled round-robin assignment: fold sizes differ by at most one.
inline FoldPlan make_folds(Index n, int n_folds, std::uint64_t seed) {
    if (n_folds < 2 || n_folds > n) {
        throw std::invalid_argument("n_folds must be in [2, " + std::to_string(n) + "], got " + std::to_string(n_folds));
    }
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(seed);
    for (Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Index>(rng.next() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    FoldPlan plan{n_folds, std::vector<int>(static_cast<std::size_t>(n)), seed};
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        plan.assignments[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos % static_cast<std::size_t>(n_folds));
    return plan;
}

}  // namespace pcegp
