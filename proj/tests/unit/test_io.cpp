#include "pcegp/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"

using namespace pcegp;
namespace t = pcegp::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string &name) {
    const fs::path dir = fs::temp_directory_path() / ("pcegp_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_dataset(const fs::path &path, const Matrix &X, const Vector &y) {
    std::ofstream out(path);
    for (Index c = 0; c < X.cols(); ++c) out << "x" << c << ",";
    out << "y\n";
    for (Index i = 0; i < X.rows(); ++i) {
        for (Index c = 0; c < X.cols(); ++c) out << format_double(X(i, c)) << ",";
        out << format_double(y[i]) << "\n";
    }
}

PcegpModel small_model(const fs::path &csv, KernelStack stack, NoiseField noise) {
    const Dataset d = load_csv(csv.string(), "y");
    return fit_precompute(std::move(stack), std::move(noise), fit_scaler(ScalerKind::min_max, d.inputs),
                          fit_scaler(ScalerKind::z_normalize, d.outputs), d.inputs, d.outputs);
}

}  // namespace

TEST(FormatDouble, ShortestRoundTrip) {
    EXPECT_EQ(format_double(1e-4), "1e-4");
    EXPECT_EQ(format_double(0.5), "0.5");
    EXPECT_EQ(format_double(-2.0), "-2");
    EXPECT_EQ(format_double(1.5e300), "1.5e300");
    EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const double v = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.uniform_int(-300, 300)));
        EXPECT_EQ(parse_double(format_double(v)), v);
    }
}

TEST(Records, TrialRoundTrip) {
    TrialRecord r;
    r.theta = (Vector(4) << 5, 0, 0.125, -1.0 / 3.0).finished();
    r.loss = 1.0 / 7.0;
    r.trial_index = 3;
    r.stage = TrialStage::tpe;
    r.fold_losses = {0.1, std::numeric_limits<double>::infinity()};
    r.fold_rmse = {2.0, 3.0};
    r.failed = true;
    r.failure = "fold 1: boom";
    const TrialRecord back = trial_from_json(json::parse(trial_json(r).dump()));
    EXPECT_EQ(back.theta, r.theta);
    EXPECT_EQ(back.loss, r.loss);
    EXPECT_EQ(back.stage, TrialStage::tpe);
    EXPECT_EQ(back.fold_losses, r.fold_losses);
    EXPECT_EQ(back.failure, r.failure);
}

TEST(ModelFile, RoundTripIsExact) {
    const auto dir = scratch_dir("roundtrip");
    Rng rng(7);
    const Matrix X = t::random_matrix(rng, 20, 2, 0.0, 5.0);
    const Vector y = t::random_vector(rng, 20);
    write_dataset(dir / "train.csv", X, y);
    std::vector<KernelEntry> entries;
    for (auto family : all_kernel_families) entries.push_back({KernelForm{family, 1.5}, rng.uniform(0.5, 2.0), t::random_field(rng, 2, 3)});
    const NoiseField noise = NoiseField::pce({{BasisKind::legendre_shifted_01(), (Vector(2) << 0.01, 0.002).finished()}});
    const PcegpModel model = small_model(dir / "train.csv", KernelStack(entries), noise);
    const Vector theta = t::random_vector(rng, 5);
    const std::string doc = model_document(model, theta, {(dir / "train.csv").string(), "y", {"x0", "x1"}, 20});
    const LoadedModel loaded = load_model(doc);
    EXPECT_EQ(loaded.theta, theta);
    EXPECT_EQ(model_document(loaded.model, loaded.theta, loaded.training), doc);
    EXPECT_EQ(loaded.model.cholesky(), model.cholesky());
    const Vector q = t::random_vector(rng, 2, 0.0, 5.0);
    EXPECT_EQ(loaded.model.predict(q).mean, model.predict(q).mean);
}

TEST(ModelFile, CorruptAndStaleFilesAreRejected) {
    EXPECT_THROW(load_model("{not json"), DataError);
    EXPECT_THROW(load_model(R"({"format": "something-else"})"), DataError);
    EXPECT_THROW(load_model(R"({"format": "pcegp-model", "training": {}})"), DataError);

    const auto dir = scratch_dir("stale");
    Rng rng(11);
    write_dataset(dir / "train.csv", t::random_matrix(rng, 6, 1), t::random_vector(rng, 6));
    const PcegpModel model = small_model(dir / "train.csv",
                                         KernelStack({{KernelForm::squared_exponential(), 1.0, LengthscaleField::constant(1.0, 1)}}),
                                         NoiseField::fixed(1e-4));
    const std::string doc = model_document(model, Vector(), {(dir / "train.csv").string(), "y", {"x0"}, 6});
    write_dataset(dir / "train.csv", t::random_matrix(rng, 7, 1), t::random_vector(rng, 7));
    EXPECT_THROW(load_model(doc), DataError);
}

TEST(Inspect, ConstantFieldShowsSingleTerm) {
    const auto dir = scratch_dir("inspect");
    Rng rng(13);
    write_dataset(dir / "train.csv", t::random_matrix(rng, 8, 1), t::random_vector(rng, 8));
    const PcegpModel model = small_model(dir / "train.csv",
                                         KernelStack({{KernelForm::squared_exponential(), 2.0, LengthscaleField::constant(0.75, 1)}}),
                                         NoiseField::fixed(1e-4));
    const std::string report = inspect_report(model);
    EXPECT_NE(report.find("lengthscale legendre_shifted_01: 0.75 · φ_0\n"), std::string::npos) << report;
    EXPECT_NE(report.find("noise: fixed 1e-4\n"), std::string::npos) << report;
    EXPECT_NE(report.find("variance: 2\n"), std::string::npos) << report;
}

TEST(Inspect, ReportParsesBackToCoefficients) {
    const auto dir = scratch_dir("inspect_rt");
    Rng rng(17);
    write_dataset(dir / "train.csv", t::random_matrix(rng, 12, 3), t::random_vector(rng, 12));
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<KernelEntry> entries;
        for (auto family : all_kernel_families) {
            std::vector<BasisTerm> terms{{BasisKind::legendre_shifted_01(), t::random_vector(rng, 1 + trial % 6, -2, 2)},
                                         {BasisKind::jacobi(0.5, 1.5), t::random_vector(rng, 3, -0.1, 0.1)}};
            entries.push_back({KernelForm{family, 2.0}, rng.uniform(0.1, 3.0), LengthscaleField(terms, 3)});
        }
        const NoiseField noise =
            trial % 2 ? NoiseField::fixed(rng.uniform(1e-6, 1e-2))
                      : NoiseField::pce({{BasisKind::hermite(), (Vector(3) << 0.05, 1e-3, -2e-4).finished()}});
        const PcegpModel model = small_model(dir / "train.csv", KernelStack(entries), noise);
        const InspectedModel parsed = parse_inspect_report(inspect_report(model));
        ASSERT_EQ(parsed.kernels.size(), entries.size());
        for (std::size_t k = 0; k < entries.size(); ++k) {
            EXPECT_EQ(parsed.kernels[k].family, to_string(entries[k].form.family));
            EXPECT_EQ(parsed.kernels[k].variance, entries[k].variance);
            ASSERT_EQ(parsed.kernels[k].lengthscale.size(), 2u);
            for (std::size_t b = 0; b < 2; ++b) {
                EXPECT_EQ(parsed.kernels[k].lengthscale[b].coefficients, entries[k].lengthscale.terms()[b].coefficients);
                EXPECT_EQ(to_string(parsed.kernels[k].lengthscale[b].kind), to_string(entries[k].lengthscale.terms()[b].kind));
            }
        }
        EXPECT_EQ(parsed.noise_fixed, noise.is_fixed());
        if (noise.is_fixed()) {
            EXPECT_EQ(parsed.noise_value, noise.fixed_value());
        } else {
            ASSERT_EQ(parsed.noise_terms.size(), 1u);
            EXPECT_EQ(parsed.noise_terms[0].coefficients, noise.terms()[0].coefficients);
        }
    }
}
