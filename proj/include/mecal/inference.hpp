#ifndef MECAL_INFERENCE_HPP
#define MECAL_INFERENCE_HPP

#include "mecal/bootstrap.hpp"
#include "mecal/measurement_table.hpp"
#include "mecal/model.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mecal {

/// Estimates of one gene under two conditions, on the qRT-PCR log2 scale.
struct PairedEstimate {
    std::string gene_id;
    GeneSet set = GeneSet::A;
    double mu1 = 0.0;
    double var1 = 0.0;
    double mu2 = 0.0;
    double var2 = 0.0;
};

using ConditionPair = std::vector<PairedEstimate>;

struct ZTestResult {
    double z = 0.0;
    double p = 1.0;
};

/// z = (mu1 - mu2) / sqrt(var1 + var2) and p = 2 P(Z > |z|) for each gene.
/// Throws DomainError naming the gene when a variance is not positive.
std::vector<ZTestResult> z_test(const ConditionPair& pairs);

struct BhResult {
    double q = 1.0;
    bool rejected = false;
};

/// Benjamini-Hochberg step-up at level `fdr`, with monotone adjusted q-values.
/// Ties keep input order. Throws DomainError for p outside [0, 1] or fdr
/// outside (0, 1).
std::vector<BhResult> bh_adjust(std::span<const double> p_values, double fdr);

/// What is tested: calibrated estimates, or the RNA-Seq measurement mapped to
/// the qRT-PCR scale by (Z - alpha3) / beta3 with variance sigma3^2 / beta3^2.
enum class Measurement { Calibrated, RnaSeqRaw };

std::string_view to_string(Measurement m);

struct DEResult {
    std::string gene_id;
    GeneSet set = GeneSet::A;
    double mu1 = 0.0;
    double mu2 = 0.0;
    double se1 = 0.0;
    double se2 = 0.0;
    double z_stat = 0.0;
    double p_value = 1.0;
    double q_value = 1.0;
    bool rejected = false;
};

struct SetCounts {
    std::size_t a = 0;
    std::size_t ba = 0;
    std::size_t cb = 0;

    std::size_t total() const { return a + ba + cb; }
    std::size_t& operator[](GeneSet s);
};

struct DEArm {
    Measurement measurement = Measurement::Calibrated;
    std::vector<DEResult> results;
    SetCounts rejected;
};

struct DEOptions {
    double fdr = 0.01;
    std::vector<Measurement> arms = {Measurement::Calibrated};
    VarianceMode variance_mode = VarianceMode::Leading;
    BootstrapOptions bootstrap;
    Alpha3Convention convention = Alpha3Convention::Symmetric;
};

struct DEReport {
    StructuralFit fit1;
    StructuralFit fit2;
    std::vector<DEArm> arms;
    std::size_t compared = 0;       ///< genes present in both conditions
    std::size_t only_in_first = 0;  ///< dropped by the intersection
    std::size_t only_in_second = 0;
    std::vector<std::string> warnings;

    const DEArm* arm(Measurement m) const;
};

/**
 * Two-condition differential expression.
 *
 * Fits each condition independently on its own A set, pairs the genes present
 * in both tables (a gene whose membership differs between conditions is
 * reported under the less informative set), tests each pair and applies BH.
 * Genes outside the intersection are dropped with a warning carrying counts.
 */
DEReport de_pipeline(const MeasurementTable& table_1, const MeasurementTable& table_2, const DEOptions& options);

/// Same, with the structural fits supplied by the caller.
DEReport de_pipeline(const MeasurementTable& table_1, const StructuralFit& fit_1, const MeasurementTable& table_2,
                     const StructuralFit& fit_2, const DEOptions& options);

/// Genes rejected by both arms, per set.
SetCounts overlap_counts(const DEArm& first, const DEArm& second);

/// Table-style summary: rows A, B-A, C-B, Total; columns per arm, plus
/// Overlap when both arms are present.
void write_de_summary(std::ostream& out, const DEReport& report);

/// `gene_id,set,mu1,mu2,se1,se2,z,p,q,rejected`
void write_de_table(std::ostream& out, const DEArm& arm);

} // namespace mecal

#endif
