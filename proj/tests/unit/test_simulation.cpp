#include "mecal/error.hpp"
#include "mecal/rng.hpp"
#include "mecal/simulation.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace mecal;

namespace {

std::string config_field(const SimConfig& c) {
    try {
        c.validate();
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

std::string config_field(const DESimConfig& c) {
    try {
        c.validate();
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

DESimConfig small_de(std::uint64_t seed) {
    DESimConfig c;
    c.genes_total = 600;
    c.genes_de = 60;
    c.set_sizes = {100, 300, 600};
    c.seed = seed;
    return c;
}

} // namespace

TEST(Settings, Presets) {
    const auto s1 = simulation_setting(1);
    EXPECT_EQ(s1.to_array(), (std::array<double, 7>{9, 5, 0.75, 1, 0.8, 1.2, 1}));
    const auto s2 = simulation_setting(2);
    EXPECT_EQ(s2.to_array(), (std::array<double, 7>{0.02, 0.2, 0.9, 0.95, 0.5, 1, 0.75}));
    const auto s3 = simulation_setting(3);
    EXPECT_EQ(s3.to_array(), (std::array<double, 7>{-5, 5, 1.3, 1.2, 0.2, 1, 1.2}));
    EXPECT_THROW(simulation_setting(0), ConfigError);
    EXPECT_THROW(simulation_setting(4), ConfigError);
}

TEST(SimConfigValidate, NamesTheField) {
    SimConfig c;
    EXPECT_EQ(config_field(c), "");
    auto bad = c;
    bad.replications = 0;
    EXPECT_EQ(config_field(bad), "replications");
    bad = c;
    bad.n_train_grid = {20, 400};
    EXPECT_EQ(config_field(bad), "n_train_grid[1]");
    bad = c;
    bad.theta.sigma2_sq = 0;
    EXPECT_EQ(config_field(bad), "theta.sigma2_sq");
    bad = c;
    bad.theta.beta3 = 0;
    EXPECT_EQ(config_field(bad), "theta.beta3");
    bad = c;
    bad.mu_law.variance = -1;
    EXPECT_EQ(config_field(bad), "mu_law.variance");
    bad = c;
    bad.mu_law.kind = MuLaw::Kind::Fixed;
    bad.mu_law.values = {1, 2, 3};
    EXPECT_EQ(config_field(bad), "mu_law.values");
    bad.n_train = 3;
    bad.n_train_grid = {3};
    EXPECT_EQ(config_field(bad), "n_train");
    bad = c;
    bad.max_skip_fraction = 1.5;
    EXPECT_EQ(config_field(bad), "max_skip_fraction");
}

TEST(DESimConfigValidate, NamesTheField) {
    auto c = small_de(1);
    EXPECT_EQ(config_field(c), "");
    auto bad = c;
    bad.genes_de = 0;
    EXPECT_EQ(config_field(bad), "genes_de");
    bad = c;
    bad.set_sizes = {300, 200, 600};
    EXPECT_FALSE(config_field(bad).empty());
    bad = c;
    bad.effect_lo = 3;
    EXPECT_FALSE(config_field(bad).empty());
    bad = c;
    bad.fdr_grid = {0.0};
    EXPECT_FALSE(config_field(bad).empty());
}

TEST(GenerateDataset, DeterministicBySeedAndRep) {
    SimConfig c;
    c.n_train = 50;
    c.n_b_only = 10;
    c.n_c_only = 5;
    c.seed = 77;
    const auto a = generate_dataset(c, 3);
    const auto b = generate_dataset(c, 3);
    const auto other_rep = generate_dataset(c, 4);
    ASSERT_EQ(a.table.size(), 65u);
    EXPECT_EQ(a.table.genes().front().id, "g00001");
    EXPECT_EQ(a.table.set_sizes().n, 50u);
    EXPECT_EQ(a.table.set_sizes().m, 60u);
    EXPECT_EQ(a.table.set_sizes().l, 65u);
    for (std::size_t j = 0; j < a.table.size(); ++j) {
        EXPECT_EQ(a.table.genes()[j].z, b.table.genes()[j].z);
        EXPECT_NE(a.table.genes()[j].z, other_rep.table.genes()[j].z);
    }
    // True levels are shared across replications.
    EXPECT_EQ(a.true_mu, other_rep.true_mu);
}

TEST(GenerateDataset, VanishingNoiseReproducesModel) {
    SimConfig c;
    c.theta = simulation_setting(2);
    c.theta.sigma1_sq = c.theta.sigma2_sq = c.theta.sigma3_sq = 1e-12;
    c.n_train = 40;
    const auto d = generate_dataset(c, 0);
    const auto& t = c.theta;
    for (std::size_t j = 0; j < d.table.size(); ++j) {
        const auto& g = d.table.genes()[j];
        EXPECT_NEAR(*g.x, d.true_mu[j], 1e-4);
        EXPECT_NEAR(*g.y, t.alpha2 + t.beta2 * d.true_mu[j], 1e-4);
        EXPECT_NEAR(*g.z, t.alpha3 + t.beta3 * d.true_mu[j], 1e-4);
    }
}

TEST(GenerateDataset, ErrorVarianceMatchesTheta) {
    SimConfig c;
    c.n_train = 10000;
    const auto d = generate_dataset(c, 0);
    double s = 0, ss = 0;
    const auto n = static_cast<double>(d.table.size());
    for (std::size_t j = 0; j < d.table.size(); ++j) {
        const double e = *d.table.genes()[j].x - d.true_mu[j];
        s += e;
        ss += e * e;
    }
    const double var = (ss - s * s / n) / (n - 1);
    EXPECT_NEAR(var / 0.8, 1.0, 0.05);
    // True levels follow N(0, 25).
    double ms = 0, mss = 0;
    for (double m : d.true_mu) {
        ms += m;
        mss += m * m;
    }
    EXPECT_NEAR((mss - ms * ms / n) / (n - 1) / 25.0, 1.0, 0.05);
}

TEST(AccuracyExperiment, SmallRunOrdersEstimators) {
    SimConfig c;
    c.theta = simulation_setting(1);
    c.n_train = 100;
    c.n_train_grid = {30, 100};
    c.n_test = 200;
    c.replications = 30;
    c.seed = 5;
    const auto r = run_accuracy_experiment(c);
    EXPECT_EQ(r.amse.size(), 8u);
    for (std::size_t n : {30u, 100u}) {
        EXPECT_LT(r.amse_of("xyz", n), r.amse_of("yz", n));
        EXPECT_LT(r.amse_of("xyz", n), r.amse_of("x", n));
    }
    EXPECT_LT(r.amse_of("xyz", 100), r.amse_of("xyz", 30));
    // At n = 100 the XYZ error sits a little above its leading-order variance.
    const double inflation = r.amse_of("xyz", 100) / variance_leading(c.theta).gamma_a;
    EXPECT_GT(inflation, 0.95);
    EXPECT_LT(inflation, 1.25);
    EXPECT_EQ(r.variance_curves.size(), 4u * 2u * 200u);
    EXPECT_EQ(r.curvature.size(), 8u);
    std::ostringstream amse, var;
    write_amse_csv(amse, r);
    write_variance_curves_csv(var, r);
    EXPECT_EQ(amse.str().rfind("estimator,n,amse\n", 0), 0u);
    EXPECT_EQ(var.str().rfind("estimator,n,mu,emp_var\n", 0), 0u);
}

TEST(AccuracyExperiment, ThreadCountDoesNotChangeResults) {
    SimConfig c;
    c.n_train = 40;
    c.n_train_grid = {20, 40};
    c.n_test = 50;
    c.replications = 12;
    c.threads = 1;
    const auto one = run_accuracy_experiment(c);
    c.threads = 5;
    const auto five = run_accuracy_experiment(c);
    for (std::size_t i = 0; i < one.amse.size(); ++i) EXPECT_EQ(one.amse[i].amse, five.amse[i].amse);
}

TEST(Roc, MatchesThresholdOracle) {
    Rng rng = Rng::stream(3, "roc");
    std::vector<double> scores(300);
    std::vector<bool> truth(300);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        truth[i] = rng.uniform() < 0.2;
        // Rounded scores create ties.
        scores[i] = std::round((rng.normal() + (truth[i] ? 1.5 : 0.0)) * 4) / 4;
    }
    const auto curve = roc_curve("arm", scores, truth);
    ASSERT_GE(curve.points.size(), 2u);
    EXPECT_EQ(curve.points.front().fpr, 0.0);
    EXPECT_EQ(curve.points.front().tpr, 0.0);
    EXPECT_EQ(curve.points.back().fpr, 1.0);
    EXPECT_EQ(curve.points.back().tpr, 1.0);
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        EXPECT_GE(curve.points[k].fpr, curve.points[k - 1].fpr);
        EXPECT_GE(curve.points[k].tpr, curve.points[k - 1].tpr);
    }
    // Every interior point equals thresholding at one of the distinct scores.
    std::set<double> distinct(scores.begin(), scores.end());
    std::set<std::pair<double, double>> expected = {{0.0, 0.0}};
    for (double s : distinct) expected.insert(oracle::rates_at(scores, truth, s));
    std::set<std::pair<double, double>> got;
    for (const auto& p : curve.points) got.insert({p.fpr, p.tpr});
    EXPECT_EQ(got, expected);

    for (double level : {0.01, 0.05, 0.2}) {
        double best = 0;
        for (const auto& [f, t] : expected) {
            if (f <= level) best = std::max(best, t);
        }
        EXPECT_DOUBLE_EQ(tpr_at_fpr(curve, level), best);
    }
    EXPECT_THROW(roc_curve("x", {1, 2}, {true, true}), DomainError);
}

TEST(DEExperiment, DeterministicAndCalibratedNotWorse) {
    const auto a = run_de_experiment(small_de(8));
    const auto b = run_de_experiment(small_de(8));
    EXPECT_EQ(a.tested, 600u);
    EXPECT_EQ(a.positives, 60u);
    ASSERT_EQ(a.tpr.size(), b.tpr.size());
    for (std::size_t i = 0; i < a.tpr.size(); ++i) EXPECT_EQ(a.tpr[i].value, b.tpr[i].value);
    EXPECT_GE(a.tpr_of("calibrated", 0.2) + 0.05, a.tpr_of("rnaseq", 0.2));

    const auto data = generate_de_data(small_de(8));
    EXPECT_EQ(data.condition_1.size(), 600u);
    EXPECT_EQ(static_cast<std::size_t>(std::count(data.is_de.begin(), data.is_de.end(), true)), 60u);
    for (std::size_t j = 0; j < data.condition_1.size(); ++j) {
        EXPECT_EQ(data.condition_1.genes()[j].set(), data.condition_2.genes()[j].set());
    }
}
