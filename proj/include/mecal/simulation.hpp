#ifndef MECAL_SIMULATION_HPP
#define MECAL_SIMULATION_HPP

#include "mecal/inference.hpp"
#include "mecal/measurement_table.hpp"
#include "mecal/model.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mecal {

/// Structural parameters of the three reference simulation settings.
/// Setting 1 resembles real MAQC/SEQC fits; in setting 2 microarray and
/// RNA-Seq are mildly noisier than qRT-PCR; in setting 3 much noisier.
Theta simulation_setting(int setting);

/// Law of the true expression levels. `Normal` takes mean and variance.
/// `Fixed` uses the listed values in order.
struct MuLaw {
    enum class Kind { Normal, Fixed };
    Kind kind = Kind::Normal;
    double mean = 0.0;
    double variance = 25.0;
    std::vector<double> values;
};

/**
 * One accuracy experiment: a training pool of `n_train` genes and a test set
 * of `n_test` genes (all measured on every platform) with true levels drawn
 * once from `mu_law`. Each replication redraws measurement errors, fits on
 * the first n training genes for every n in the grid and calibrates the
 * test set.
 */
struct SimConfig {
    Theta theta = simulation_setting(1);
    MuLaw mu_law;
    std::vector<std::size_t> n_train_grid = {20, 50, 100, 300};
    std::size_t n_train = 300;
    std::size_t n_test = 1000;
    std::size_t n_b_only = 0; ///< extra B-A genes in generated datasets
    std::size_t n_c_only = 0; ///< extra C-B genes in generated datasets
    std::size_t replications = 200;
    std::uint64_t seed = 1;
    Alpha3Convention convention = Alpha3Convention::Symmetric;
    double max_skip_fraction = 0.10;
    unsigned threads = 0;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

struct SimDataset {
    MeasurementTable table;
    std::vector<double> true_mu; ///< aligned with table.genes()
};

/**
 * Dataset of n_train A genes followed by n_b_only B-A and n_c_only C-B genes,
 * ids g00001, g00002, ...
 *
 * True levels are functional constants: they come from the "mu" stream of the
 * seed and are identical for every rep_index. Measurement errors come from the
 * "dataset" stream split by rep_index.
 */
SimDataset generate_dataset(const SimConfig& config, std::size_t rep_index);

struct AmsePoint {
    std::string estimator; ///< xyz, yz, z or x (the raw qRT-PCR value)
    std::size_t n = 0;
    double amse = 0.0;
};

struct VariancePoint {
    std::string estimator;
    std::size_t n = 0;
    double mu = 0.0;
    double emp_var = 0.0;
};

/// Least-squares fit emp_var = c0 + c1 mu + c2 mu^2 over the test genes.
struct CurvaturePoint {
    std::string estimator;
    std::size_t n = 0;
    double curvature = 0.0; ///< c2
    double se = 0.0;
};

struct SkipCount {
    std::size_t n = 0;
    std::size_t skipped = 0;           ///< degenerate fits, excluded from aggregates
    std::size_t negative_variance = 0; ///< fits with a negative sigma_i^2, kept
};

struct AccuracyReport {
    SimConfig config;
    std::vector<AmsePoint> amse;
    std::vector<VariancePoint> variance_curves;
    std::vector<CurvaturePoint> curvature;
    std::vector<SkipCount> skips;

    double amse_of(const std::string& estimator, std::size_t n) const;
    const CurvaturePoint& curvature_of(const std::string& estimator, std::size_t n) const;
};

/**
 * Runs the accuracy experiment. Test-set estimates use the closed forms as
 * written (`CalibrationPolicy::Unchecked`) so that small-n fits with negative
 * variance estimates are scored rather than dropped; they are counted in
 * `skips`. A degenerate fit drops that (replication, n) cell; more than
 * `max_skip_fraction` dropped at any n raises InstabilityError.
 */
AccuracyReport run_accuracy_experiment(const SimConfig& config);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::string arm;
    std::vector<RocPoint> points; ///< from (0, 0) to (1, 1), nondecreasing
};

/// ROC from scores (larger = more significant) and truth labels. Tied scores
/// enter together. Throws DomainError without both classes present.
RocCurve roc_curve(std::string arm, const std::vector<double>& scores, const std::vector<bool>& positive);

/// Largest TPR reached at FPR <= fpr.
double tpr_at_fpr(const RocCurve& curve, double fpr);

/**
 * Two-condition DE simulation. Condition-1 levels follow `mu_law`; a random
 * `genes_de` of the measured genes shift by d ~ Uniform([-hi, -lo] ∪ [lo, hi]).
 * All three platforms are generated from the measurement-error system, the
 * first n genes in A, the next m - n in B-A and the rest of the first l in C-B.
 */
struct DESimConfig {
    std::size_t genes_total = 5000;
    std::size_t genes_de = 500;
    SetSizes set_sizes{500, 3000, 5000};
    Theta theta = simulation_setting(1);
    MuLaw mu_law;
    double effect_lo = 0.5;
    double effect_hi = 2.0;
    std::vector<double> fpr_grid = {0.01, 0.02, 0.05, 0.1, 0.2};
    std::vector<double> fdr_grid = {0.01, 0.05, 0.1};
    std::uint64_t seed = 1;
    Alpha3Convention convention = Alpha3Convention::Symmetric;

    void validate() const;
};

struct ArmOperatingPoint {
    std::string arm;
    double level = 0.0; ///< FPR (for tpr) or FDR (for BH counts)
    double value = 0.0;
};

struct BhOutcome {
    std::string arm;
    double fdr = 0.0;
    std::size_t rejected = 0;
    std::size_t false_discoveries = 0;
};

struct DESimReport {
    DESimConfig config;
    std::vector<RocCurve> roc;              ///< "calibrated" and "rnaseq"
    std::vector<ArmOperatingPoint> tpr;     ///< TPR at each fpr_grid value
    std::vector<BhOutcome> bh;              ///< BH at each fdr_grid value
    std::size_t tested = 0;
    std::size_t positives = 0;

    double tpr_of(const std::string& arm, double fpr) const;
};

DESimReport run_de_experiment(const DESimConfig& config);

/// Generates the two conditions of a DE simulation, for callers that want
/// to run their own analysis. `is_de` is aligned with the tables' genes.
struct DESimData {
    MeasurementTable condition_1;
    MeasurementTable condition_2;
    std::vector<bool> is_de;
};

DESimData generate_de_data(const DESimConfig& config);

void write_amse_csv(std::ostream& out, const AccuracyReport& report);
void write_variance_curves_csv(std::ostream& out, const AccuracyReport& report);
void write_roc_csv(std::ostream& out, const std::vector<RocCurve>& curves);

} // namespace mecal

#endif
