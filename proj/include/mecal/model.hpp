#ifndef MECAL_MODEL_HPP
#define MECAL_MODEL_HPP

#include "mecal/measurement_table.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mecal {

class Rng;

/**
 * Structural parameters of the three-platform measurement-error system
 *
 *     X_j = mu_j + e1_j                 (qRT-PCR,    j in A)
 *     Y_j = alpha2 + beta2 mu_j + e2_j  (microarray, j in B)
 *     Z_j = alpha3 + beta3 mu_j + e3_j  (RNA-Seq,    j in C)
 *
 * with independent e_i ~ N(0, sigma_i^2). Intercepts are in log2 units,
 * slopes are dimensionless, variances are in log2^2 units.
 */
struct Theta {
    double alpha2 = 0.0;
    double alpha3 = 0.0;
    double beta2 = 1.0;
    double beta3 = 1.0;
    double sigma1_sq = 1.0;
    double sigma2_sq = 1.0;
    double sigma3_sq = 1.0;

    std::array<double, 7> to_array() const;
    static Theta from_array(const std::array<double, 7>& v);
};

/// Component names in the canonical order alpha2, alpha3, beta2, beta3,
/// sigma1_sq, sigma2_sq, sigma3_sq.
inline constexpr std::array<std::string_view, 7> kThetaNames = {
    "alpha2", "alpha3", "beta2", "beta3", "sigma1_sq", "sigma2_sq", "sigma3_sq"};

/// Means and (n - 1)-denominator covariances of (X, Y, Z) over the genes in A.
struct SampleMoments {
    std::size_t n = 0;
    double x_bar = 0.0, y_bar = 0.0, z_bar = 0.0;
    double s_xx = 0.0, s_yy = 0.0, s_zz = 0.0;
    double s_xy = 0.0, s_xz = 0.0, s_yz = 0.0;
};

/// Moments over A. Throws InsufficientDataError when n < 2.
SampleMoments compute_moments(const MeasurementTable& table);

/// Moments of three equal-length columns.
SampleMoments compute_moments(std::span<const double> x, std::span<const double> y, std::span<const double> z);

/**
 * Which slope enters the RNA-Seq intercept estimate.
 *
 * `Symmetric` uses alpha3 = z_bar - beta3 * x_bar, the form consistent with
 * the RNA-Seq model. `AsPrinted` reproduces alpha3 = z_bar - beta2 * x_bar
 * for comparison with published numbers that used it.
 */
enum class Alpha3Convention { Symmetric, AsPrinted };

std::string_view to_string(Alpha3Convention c);
std::optional<Alpha3Convention> parse_alpha3_convention(std::string_view token);

enum class FitWarning { NegativeVariance };

std::string_view to_string(FitWarning w);

struct StructuralFit {
    Theta theta;
    std::optional<std::array<double, 7>> se; ///< bootstrap standard errors, same order as Theta
    double mu_spread = 0.0;                  ///< s_xy s_xz / s_yz, so sigma1_sq + mu_spread == s_xx
    SampleMoments moments;
    Alpha3Convention convention = Alpha3Convention::Symmetric;
    /// |sigma_i^2| at or below this is treated as an exact zero.
    double variance_tolerance = 0.0;
    std::vector<FitWarning> warnings;

    bool has_warning(FitWarning w) const;
};

/// Relative size below which a covariance denominator counts as zero.
inline constexpr double kDegenerateTolerance = 1e-12;

/**
 * Method-of-moments estimates of the structural parameters.
 *
 * Variance estimates are not constrained to be non-negative; a negative one
 * sets FitWarning::NegativeVariance. Throws DegenerateCovarianceError naming
 * the vanishing moment when s_xy, s_xz or s_yz is zero relative to
 * max(s_xx, s_yy, s_zz).
 */
StructuralFit fit_structural(const SampleMoments& moments,
                             Alpha3Convention convention = Alpha3Convention::Symmetric);

/// Which measurements a calibrated estimate pools: A genes use (X, Y, Z),
/// B-A genes use (Y, Z), C-B genes use Z alone.
enum class Source { Xyz, Yz, Z };

std::string_view to_string(Source s);
Source source_for(GeneSet set);

struct CalibratedEstimate {
    std::string gene_id;
    double mu_hat = 0.0;
    double variance = 0.0;
    Source source = Source::Z;
    double se = 0.0;
};

/// Asymptotic variances of the three calibrated estimators.
struct VarianceComponents {
    double gamma_a = 0.0;
    double gamma_ba = 0.0;
    double gamma_cb = 0.0;

    double for_source(Source s) const;
};

/// Leading-order variances. Throws DomainError unless every sigma_i^2 > 0
/// and both slopes are nonzero.
VarianceComponents variance_leading(const Theta& theta);
inline VarianceComponents variance_leading(const StructuralFit& fit) { return variance_leading(fit.theta); }

/// Precision-weighted (generalized least squares) estimates of mu given the
/// structural parameters. These evaluate the closed forms as written and do
/// not check signs; see `calibrate` for the checked path.
double gls_xyz(const Theta& theta, double x, double y, double z);
double gls_yz(const Theta& theta, double y, double z);
double gls_z(const Theta& theta, double z);

/// How `calibrate` treats negative variance estimates.
///
/// `Strict` throws CalibrationBlockedError when a gene's path needs a negative
/// component. `Unchecked` evaluates the closed forms regardless; simulation
/// harnesses use it when estimating what the raw estimator does at small n.
enum class CalibrationPolicy { Strict, Unchecked };

/**
 * Calibrated expression estimates for every gene in the table, in table order.
 *
 * Under `Strict`, path requirements are: XYZ needs sigma1..3, YZ needs sigma2
 * and sigma3, Z needs sigma3 (for its variance) and beta3 != 0. A component
 * within `variance_tolerance` of zero is an exact measurement: the estimate is
 * the mean of the exact channels mapped to the qRT-PCR scale, with variance 0.
 * Each estimate carries the leading-order variance of its path.
 */
std::vector<CalibratedEstimate> calibrate(const MeasurementTable& table, const StructuralFit& fit,
                                          CalibrationPolicy policy = CalibrationPolicy::Strict);

/// Calibrates a single gene.
CalibratedEstimate calibrate_gene(const Gene& gene, const StructuralFit& fit,
                                  CalibrationPolicy policy = CalibrationPolicy::Strict);

/// Residuals of a gene in A against its calibrated value.
struct Residual {
    std::string gene_id;
    double e1 = 0.0; ///< X - mu_hat
    double e2 = 0.0; ///< Y - alpha2 - beta2 mu_hat
    double e3 = 0.0; ///< Z - alpha3 - beta3 mu_hat
};

/// Residuals over the A genes that have an XYZ estimate in `calibrated`
/// (matched by gene id), in table order.
std::vector<Residual> residuals(const MeasurementTable& table, const StructuralFit& fit,
                                const std::vector<CalibratedEstimate>& calibrated);

/// Share of mu_hat^{xyz} carried by each platform:
/// w1 = gamma_A / sigma1^2, w2 = beta2^2 gamma_A / sigma2^2, w3 = beta3^2 gamma_A / sigma3^2.
/// Var(e_i) = sigma_i^2 (1 - w_i), so e_i / sqrt(1 - w_i) has variance sigma_i^2.
std::array<double, 3> platform_weights(const Theta& theta);

/// Draws one gene's measurements from the model for a gene in `set`.
Gene simulate_gene(const Theta& theta, double mu, GeneSet set, Rng& rng, std::string id = {});

} // namespace mecal

#endif
