#include "mecal/cli.hpp"
#include "mecal/csv.hpp"
#include "mecal/model.hpp"
#include "mecal/simulation.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace mecal;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome mecal_run(std::vector<std::string> args) {
    args.insert(args.begin(), "mecal");
    std::ostringstream out, err;
    Outcome o;
    o.code = cli::run(args, out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

using Rows = std::vector<std::map<std::string, std::string>>;

Rows read_csv(const std::string& path) {
    std::istringstream in(oracle::slurp(path));
    std::string line;
    std::getline(in, line);
    const auto header = csv::split_row(line, ',', 1);
    Rows rows;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const auto fields = csv::split_row(line, ',', n);
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = fields.at(i);
        rows.push_back(row);
    }
    return rows;
}

double num(const std::string& s) { return std::stod(s); }

void write_file(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

// Noiseless setting-1 genes spread over [-5, 3].
std::string noiseless_canonical(std::size_t n, std::size_t extra_c) {
    const auto t = simulation_setting(1);
    std::ostringstream s;
    s << "gene_id,set,x,y,z\n";
    for (std::size_t j = 0; j < n + extra_c; ++j) {
        const double mu = -5.0 + 8.0 * static_cast<double>(j) / static_cast<double>(n + extra_c - 1);
        const std::string y = format_double(t.alpha2 + t.beta2 * mu), z = format_double(t.alpha3 + t.beta3 * mu);
        if (j < n) {
            s << "g" << j << ",A," << format_double(mu) << ',' << y << ',' << z << '\n';
        } else {
            s << "g" << j << ",C-B,,," << z << '\n';
        }
    }
    return s.str();
}

std::vector<std::string> files_in(const std::string& dir) {
    std::vector<std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

TEST(CliFit, NoiselessFixtureRecoversTheta) {
    const auto dir = oracle::temp_dir("cli-fit");
    write_file(dir + "/in.csv", noiseless_canonical(30, 0));
    const auto r = mecal_run({"--out", dir + "/out", "fit", dir + "/in.csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream fit_text(oracle::slurp(dir + "/out/fit.txt"));
    std::map<std::string, double> values;
    std::string line;
    while (std::getline(fit_text, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos || line[0] == '#') continue;
        double v;
        if (csv::parse_double(line.substr(eq + 3), v)) values[line.substr(0, eq)] = v;
    }
    EXPECT_NEAR(values.at("alpha2"), 9, 1e-9);
    EXPECT_NEAR(values.at("alpha3"), 5, 1e-9);
    EXPECT_NEAR(values.at("beta2"), 0.75, 1e-10);
    EXPECT_NEAR(values.at("beta3"), 1, 1e-10);
    for (const char* k : {"sigma1_sq", "sigma2_sq", "sigma3_sq"}) EXPECT_NEAR(values.at(k), 0, 1e-9) << k;
    EXPECT_TRUE(fs::exists(dir + "/out/manifest.json"));
}

TEST(CliFit, RangeFilterIsRecorded) {
    const auto dir = oracle::temp_dir("cli-range");
    auto text = noiseless_canonical(30, 0);
    text += "low,A,-7,3.75,-2\n";
    write_file(dir + "/in.csv", text);
    ASSERT_EQ(mecal_run({"--out", dir, "fit", dir + "/in.csv"}).code, 0);
    const auto manifest = nlohmann::json::parse(oracle::slurp(dir + "/manifest.json"));
    EXPECT_EQ(manifest["notes"]["fit"]["demoted_by_range"], 1);
    EXPECT_EQ(manifest["notes"]["fit"]["n_fit"], 30);
    EXPECT_EQ(manifest["notes"]["fit"]["range"], "-6:4");
    EXPECT_EQ(manifest["subcommand"], "fit");
    EXPECT_EQ(manifest["inputs"].size(), 1u);
}

TEST(CliFit, MissingInputWritesNothing) {
    const auto dir = oracle::temp_dir("cli-missing");
    const auto r = mecal_run({"--out", dir + "/out", "fit", dir + "/nope.csv"});
    EXPECT_EQ(r.code, cli::kIo);
    EXPECT_FALSE(r.err.empty());
    EXPECT_TRUE(files_in(dir + "/out").empty());
}

TEST(CliCalibrate, ZOnlyGenesMapThroughRnaSeq) {
    const auto dir = oracle::temp_dir("cli-cal-z");
    write_file(dir + "/in.csv", "gene_id,set,x,y,z\nc1,C-B,,,7\nc2,C-B,,,-1.5\n");
    const auto r = mecal_run({"--out", dir, "calibrate", dir + "/in.csv", "--theta", "9,5,0.75,1.25,0.8,1.2,0.5"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = read_csv(dir + "/calibrated.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_NEAR(num(rows[0].at("mu_hat")), (7 - 5) / 1.25, 1e-12);
    EXPECT_NEAR(num(rows[1].at("mu_hat")), (-1.5 - 5) / 1.25, 1e-12);
    EXPECT_NEAR(num(rows[0].at("se")), std::sqrt(0.5) / 1.25, 1e-12);
    EXPECT_EQ(rows[0].at("source"), "z");
    EXPECT_EQ(rows[0].at("set"), "C-B");
}

TEST(CliCalibrate, FitThenCalibrateRecoversNoiselessLevels) {
    const auto dir = oracle::temp_dir("cli-cal");
    write_file(dir + "/in.csv", noiseless_canonical(20, 10));
    ASSERT_EQ(mecal_run({"--out", dir + "/fit", "fit", dir + "/in.csv"}).code, 0);
    const auto r = mecal_run({"--out", dir + "/cal", "calibrate", dir + "/in.csv", "--fit", dir + "/fit/fit.txt"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = read_csv(dir + "/cal/calibrated.csv");
    ASSERT_EQ(rows.size(), 30u);
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const double mu = -5.0 + 8.0 * static_cast<double>(j) / 29.0;
        EXPECT_NEAR(num(rows[j].at("mu_hat")), mu, 1e-9) << rows[j].at("gene_id");
    }
}

TEST(CliCalibrate, SimulatedErrorsMatchLeadingVariance) {
    const auto dir = oracle::temp_dir("cli-cal-sim");
    ASSERT_EQ(mecal_run({"--seed", "31", "--out", dir + "/sim", "simulate", "--mode", "dataset", "--n", "600"}).code, 0);
    const auto data = dir + "/sim/dataset.csv";
    ASSERT_EQ(mecal_run({"--out", dir + "/fit", "fit", data, "--range", "none"}).code, 0);
    ASSERT_EQ(mecal_run({"--out", dir + "/cal", "calibrate", data, "--fit", dir + "/fit/fit.txt"}).code, 0);
    const auto est = read_csv(dir + "/cal/calibrated.csv");
    const auto truth = read_csv(dir + "/sim/truth.csv");
    ASSERT_EQ(est.size(), truth.size());
    double ss = 0;
    for (std::size_t j = 0; j < est.size(); ++j) {
        ASSERT_EQ(est[j].at("gene_id"), truth[j].at("gene_id"));
        const double d = num(est[j].at("mu_hat")) - num(truth[j].at("mu"));
        ss += d * d;
    }
    const double rms = std::sqrt(ss / static_cast<double>(est.size()));
    EXPECT_NEAR(rms / std::sqrt(variance_leading(simulation_setting(1)).gamma_a), 1.0, 0.1);
}

TEST(CliDe, IdenticalInputsRejectNothing) {
    const auto dir = oracle::temp_dir("cli-de");
    ASSERT_EQ(
        mecal_run({"--out", dir + "/sim", "simulate", "--mode", "dataset", "--n", "100", "--n-c-only", "100"}).code, 0);
    const auto data = dir + "/sim/dataset.csv";
    const auto r = mecal_run({"--out", dir + "/de", "de", data, data, "--range", "none"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* arm : {"calibrated", "rnaseq"}) {
        const auto rows = read_csv(dir + "/de/de_" + std::string(arm) + ".csv");
        ASSERT_EQ(rows.size(), 200u);
        for (const auto& row : rows) EXPECT_EQ(row.at("rejected"), "0");
    }
    const auto summary = oracle::slurp(dir + "/de/de_summary.csv");
    EXPECT_NE(summary.find("Total,0,0,0"), std::string::npos) << summary;
}

TEST(CliDe, FdrOutsideUnitIntervalIsUsageError) {
    const auto dir = oracle::temp_dir("cli-de-fdr");
    write_file(dir + "/in.csv", noiseless_canonical(20, 0));
    EXPECT_EQ(mecal_run({"--out", dir + "/o", "de", dir + "/in.csv", dir + "/in.csv", "--fdr", "1.5"}).code,
              cli::kUsage);
    EXPECT_EQ(mecal_run({"--out", dir + "/o", "de", dir + "/in.csv", dir + "/in.csv", "--fdr", "0"}).code,
              cli::kUsage);
    EXPECT_TRUE(files_in(dir + "/o").empty());
}

TEST(CliDiagnose, NoiselessResidualsVanish) {
    const auto dir = oracle::temp_dir("cli-diag0");
    write_file(dir + "/in.csv", noiseless_canonical(25, 5));
    const auto r = mecal_run({"--out", dir, "diagnose", dir + "/in.csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = read_csv(dir + "/residuals.csv");
    ASSERT_EQ(rows.size(), 25u);
    for (const auto& row : rows) {
        for (const char* k : {"e1", "e2", "e3"}) EXPECT_NEAR(num(row.at(k)), 0.0, 1e-9);
    }
    const auto header = oracle::slurp(dir + "/qq.csv").substr(0, 32);
    EXPECT_EQ(header.rfind("component,p,theoretical,sample\n", 0), 0u);
}

TEST(CliDiagnose, QqSlopeEstimatesErrorScale) {
    const auto dir = oracle::temp_dir("cli-diag");
    ASSERT_EQ(mecal_run({"--seed", "4", "--out", dir + "/sim", "simulate", "--mode", "dataset", "--n", "2000"}).code,
              0);
    ASSERT_EQ(mecal_run({"--out", dir, "diagnose", dir + "/sim/dataset.csv", "--range", "none"}).code, 0);
    const auto rows = read_csv(dir + "/qq.csv");
    const auto t = simulation_setting(1);
    const std::map<std::string, double> sigma = {
        {"e1", std::sqrt(t.sigma1_sq)}, {"e2", std::sqrt(t.sigma2_sq)}, {"e3", std::sqrt(t.sigma3_sq)}};
    for (const auto& [component, s] : sigma) {
        std::vector<double> th, sample;
        for (const auto& row : rows) {
            if (row.at("component") != component) continue;
            th.push_back(num(row.at("theoretical")));
            sample.push_back(num(row.at("sample")));
        }
        ASSERT_EQ(th.size(), 2000u);
        for (std::size_t i = 1; i < sample.size(); ++i) ASSERT_LE(sample[i - 1], sample[i]);
        EXPECT_NEAR(oracle::ls_slope(th, sample) / s, 1.0, 0.1) << component;
    }
}

TEST(CliSimulate, SameSeedSameBytes) {
    const auto dir = oracle::temp_dir("cli-sim");
    const std::vector<std::string> args = {"simulate", "--mode", "accuracy", "--setting", "2", "--grid", "20,50",
                                           "--n", "50", "--n-test", "40", "--reps", "10"};
    auto first = args, second = args;
    first.insert(first.begin(), {"--seed", "9", "--out", dir + "/a", "--threads", "1"});
    second.insert(second.begin(), {"--seed", "9", "--out", dir + "/b", "--threads", "4"});
    ASSERT_EQ(mecal_run(first).code, 0);
    ASSERT_EQ(mecal_run(second).code, 0);
    for (const char* f : {"amse_curves.csv", "variance_curves.csv", "curvature.csv"}) {
        const auto a = oracle::slurp(dir + "/a/" + f);
        EXPECT_FALSE(a.empty()) << f;
        EXPECT_EQ(a, oracle::slurp(dir + "/b/" + f)) << f;
    }
}

TEST(CliSimulate, NoisySettingFavoursRawPcrOverYz) {
    const auto dir = oracle::temp_dir("cli-sim3");
    ASSERT_EQ(mecal_run({"--out", dir, "simulate", "--mode", "accuracy", "--setting", "3", "--grid", "100", "--n",
                         "100", "--n-test", "200", "--reps", "20"})
                  .code,
              0);
    std::map<std::string, double> amse;
    for (const auto& row : read_csv(dir + "/amse_curves.csv")) amse[row.at("estimator")] = num(row.at("amse"));
    EXPECT_GT(amse.at("yz"), amse.at("x"));
    EXPECT_LT(amse.at("xyz"), amse.at("x"));
}

TEST(CliSimulate, ConfigFileAndFlagPrecedence) {
    const auto dir = oracle::temp_dir("cli-simcfg");
    write_file(dir + "/cfg.json", R"({"mode": "dataset", "setting": 2, "dataset": {"n": 12, "n_c_only": 3}})");
    ASSERT_EQ(mecal_run({"--out", dir + "/a", "simulate", "--config", dir + "/cfg.json"}).code, 0);
    EXPECT_EQ(read_csv(dir + "/a/dataset.csv").size(), 15u);
    ASSERT_EQ(mecal_run({"--out", dir + "/b", "simulate", "--config", dir + "/cfg.json", "--n", "20"}).code, 0);
    EXPECT_EQ(read_csv(dir + "/b/dataset.csv").size(), 23u);
    const auto manifest = nlohmann::json::parse(oracle::slurp(dir + "/b/manifest.json"));
    EXPECT_EQ(manifest["inputs"][0]["role"], "config");
}

TEST(CliConfig, ErrorsNameTheFieldPath) {
    const auto dir = oracle::temp_dir("cli-cfgerr");
    write_file(dir + "/bad.json", R"({"mode": "accuracy", "accuracy": {"replications": 0}})");
    auto r = mecal_run({"--out", dir + "/o", "simulate", "--config", dir + "/bad.json"});
    EXPECT_EQ(r.code, cli::kConfig);
    EXPECT_NE(r.err.find("replications"), std::string::npos) << r.err;

    write_file(dir + "/typo.json", R"({"mode": "dataset", "dataset": {"nn": 5}})");
    r = mecal_run({"--out", dir + "/o", "simulate", "--config", dir + "/typo.json"});
    EXPECT_EQ(r.code, cli::kConfig);
    EXPECT_NE(r.err.find("dataset.nn"), std::string::npos) << r.err;
    EXPECT_TRUE(files_in(dir + "/o").empty());
}

TEST(CliExitCodes, ParseNestingDegenerate) {
    const auto dir = oracle::temp_dir("cli-codes");
    write_file(dir + "/parse.csv", "gene_id,platform,replicate,value\ng1,PCR,0,abc\n");
    EXPECT_EQ(mecal_run({"--out", dir + "/o", "fit", dir + "/parse.csv"}).code, cli::kParse);

    write_file(dir + "/nest.csv", "gene_id,platform,replicate,value\ng1,PCR,0,1\ng1,RNASEQ,0,2\n");
    const auto nest = mecal_run({"--out", dir + "/o", "fit", dir + "/nest.csv"});
    EXPECT_EQ(nest.code, cli::kNesting);
    EXPECT_NE(nest.err.find("g1"), std::string::npos);

    std::ostringstream flat;
    flat << "gene_id,set,x,y,z\n";
    for (int j = 0; j < 10; ++j) flat << "g" << j << ",A,1," << j << ',' << (j * j) % 7 << '\n';
    write_file(dir + "/flat.csv", flat.str());
    EXPECT_EQ(mecal_run({"--out", dir + "/o", "fit", dir + "/flat.csv"}).code, cli::kDegenerate);

    write_file(dir + "/tiny.csv", noiseless_canonical(3, 0));
    EXPECT_EQ(mecal_run({"--out", dir + "/o", "fit", dir + "/tiny.csv"}).code, cli::kInsufficient);

    EXPECT_EQ(mecal_run({"frobnicate"}).code, cli::kUsage);
    EXPECT_EQ(mecal_run({}).code, cli::kUsage);
    EXPECT_TRUE(files_in(dir + "/o").empty());
}

TEST(CliHelp, ShowsDefaults) {
    auto r = mecal_run({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("--seed"), std::string::npos);
    EXPECT_NE(r.out.find("[1]"), std::string::npos) << r.out;
    r = mecal_run({"fit", "--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("-6:4"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("symmetric"), std::string::npos);
    r = mecal_run({"de", "--help"});
    EXPECT_NE(r.out.find("0.01"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("both"), std::string::npos);
    for (const char* sub : {"calibrate", "diagnose", "simulate", "rerun"}) {
        r = mecal_run({sub, "--help"});
        EXPECT_EQ(r.code, 0) << sub;
        EXPECT_FALSE(r.out.empty()) << sub;
    }
}

TEST(CliRerun, ReproducesAndDetectsTampering) {
    const auto dir = oracle::temp_dir("cli-rerun");
    ASSERT_EQ(mecal_run({"--seed", "3", "--out", dir + "/sim", "simulate", "--mode", "dataset", "--n", "80"}).code, 0);
    ASSERT_EQ(mecal_run({"--out", dir + "/fit", "fit", dir + "/sim/dataset.csv", "--bootstrap", "100"}).code, 0);
    const auto original = oracle::slurp(dir + "/fit/fit.txt");
    auto r = mecal_run({"--out", dir + "/again", "rerun", dir + "/fit/manifest.json"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(oracle::slurp(dir + "/again/fit.txt"), original);
    r = mecal_run({"--out", dir + "/again-sim", "--threads", "3", "rerun", dir + "/sim/manifest.json"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(oracle::slurp(dir + "/again-sim/dataset.csv"), oracle::slurp(dir + "/sim/dataset.csv"));

    // A changed input no longer matches the recorded digest.
    write_file(dir + "/sim/dataset.csv", oracle::slurp(dir + "/sim/dataset.csv") + "extra,C-B,,,1\n");
    r = mecal_run({"--out", dir + "/tampered", "rerun", dir + "/fit/manifest.json"});
    EXPECT_EQ(r.code, cli::kMismatch);
    EXPECT_TRUE(files_in(dir + "/tampered").empty());
}
