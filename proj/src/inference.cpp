#include "mecal/inference.hpp"

#include "mecal/csv.hpp"
#include "mecal/error.hpp"
#include "mecal/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <unordered_set>

namespace mecal {

std::vector<ZTestResult> z_test(const ConditionPair& pairs) {
    std::vector<ZTestResult> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (!(p.var1 > 0.0) || !(p.var2 > 0.0)) {
            throw DomainError("non-positive variance for gene '" + p.gene_id + "'");
        }
        ZTestResult r;
        r.z = (p.mu1 - p.mu2) / std::sqrt(p.var1 + p.var2);
        // Keep p inside (0, 1] even when erfc underflows.
        r.p = std::max(stats::two_sided_p(r.z), std::numeric_limits<double>::min());
        out.push_back(r);
    }
    return out;
}

std::vector<BhResult> bh_adjust(std::span<const double> p_values, double fdr) {
    if (!(fdr > 0.0 && fdr < 1.0)) {
        throw DomainError("fdr must lie in (0, 1)");
    }
    for (std::size_t i = 0; i < p_values.size(); ++i) {
        if (!(p_values[i] >= 0.0 && p_values[i] <= 1.0)) {
            throw DomainError("p-value " + std::to_string(i) + " lies outside [0, 1]");
        }
    }
    const std::size_t m = p_values.size();
    std::vector<BhResult> out(m);
    if (m == 0) return out;

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

    const double dm = static_cast<double>(m);
    std::size_t cutoff = 0; // number rejected
    for (std::size_t k = m; k >= 1; --k) {
        if (p_values[order[k - 1]] <= static_cast<double>(k) * fdr / dm) {
            cutoff = k;
            break;
        }
    }

    double running = 1.0;
    for (std::size_t k = m; k >= 1; --k) {
        const std::size_t i = order[k - 1];
        running = std::min(running, p_values[i] * dm / static_cast<double>(k));
        out[i].q = running;
        out[i].rejected = k <= cutoff;
    }
    return out;
}

std::string_view to_string(Measurement m) { return m == Measurement::Calibrated ? "calibrated" : "rnaseq"; }

std::size_t& SetCounts::operator[](GeneSet s) {
    switch (s) {
    case GeneSet::A: return a;
    case GeneSet::BminusA: return ba;
    case GeneSet::CminusB: return cb;
    }
    return cb;
}

const DEArm* DEReport::arm(Measurement m) const {
    for (const auto& a : arms) {
        if (a.measurement == m) return &a;
    }
    return nullptr;
}

namespace {

GeneSet coarser(GeneSet a, GeneSet b) { return static_cast<int>(a) > static_cast<int>(b) ? a : b; }

struct PlatformEstimate {
    double mu;
    double variance;
};

std::vector<PlatformEstimate> estimates_for(const MeasurementTable& table, const StructuralFit& fit, Measurement m,
                                            const DEOptions& options) {
    std::vector<PlatformEstimate> out(table.size());
    if (m == Measurement::RnaSeqRaw) {
        const Theta& t = fit.theta;
        if (t.beta3 == 0.0) throw CalibrationBlockedError("beta3 is zero; RNA-Seq values cannot be rescaled");
        if (!(t.sigma3_sq > 0.0)) {
            throw CalibrationBlockedError("sigma3_sq = " + format_double(t.sigma3_sq) +
                                          " is not positive; the RNA-Seq arm has no usable variance");
        }
        const double variance = t.sigma3_sq / (t.beta3 * t.beta3);
        for (std::size_t j = 0; j < table.size(); ++j) {
            out[j] = {gls_z(t, *table.genes()[j].z), variance};
        }
        return out;
    }
    const auto calibrated = calibrate(table, fit, CalibrationPolicy::Strict);
    std::vector<double> variance;
    if (options.variance_mode == VarianceMode::Bootstrap) {
        variance = estimate_variance(fit, table, VarianceMode::Bootstrap, options.bootstrap).variance;
    }
    for (std::size_t j = 0; j < table.size(); ++j) {
        out[j] = {calibrated[j].mu_hat, variance.empty() ? calibrated[j].variance : variance[j]};
    }
    return out;
}

} // namespace

DEReport de_pipeline(const MeasurementTable& table_1, const MeasurementTable& table_2, const DEOptions& options) {
    const auto fit_1 = fit_structural(compute_moments(table_1), options.convention);
    const auto fit_2 = fit_structural(compute_moments(table_2), options.convention);
    return de_pipeline(table_1, fit_1, table_2, fit_2, options);
}

DEReport de_pipeline(const MeasurementTable& table_1, const StructuralFit& fit_1, const MeasurementTable& table_2,
                     const StructuralFit& fit_2, const DEOptions& options) {
    if (!(options.fdr > 0.0 && options.fdr < 1.0)) {
        throw DomainError("fdr must lie in (0, 1)");
    }
    DEReport report;
    report.fit1 = fit_1;
    report.fit2 = fit_2;

    // Intersection in condition-1 order.
    std::vector<std::pair<std::size_t, std::size_t>> matched;
    matched.reserve(table_1.size());
    for (std::size_t i = 0; i < table_1.size(); ++i) {
        if (const auto j = table_2.find(table_1.genes()[i].id)) matched.emplace_back(i, *j);
    }
    report.compared = matched.size();
    report.only_in_first = table_1.size() - matched.size();
    report.only_in_second = table_2.size() - matched.size();
    if (report.only_in_first || report.only_in_second) {
        report.warnings.push_back("gene sets differ: " + std::to_string(report.only_in_first) +
                                  " gene(s) only in condition 1 and " + std::to_string(report.only_in_second) +
                                  " only in condition 2 were not tested");
    }

    for (const auto m : options.arms) {
        const auto est_1 = estimates_for(table_1, fit_1, m, options);
        const auto est_2 = estimates_for(table_2, fit_2, m, options);

        ConditionPair pairs;
        pairs.reserve(matched.size());
        for (const auto& [i, j] : matched) {
            const auto& g1 = table_1.genes()[i];
            const auto& g2 = table_2.genes()[j];
            pairs.push_back(PairedEstimate{g1.id, coarser(g1.set(), g2.set()), est_1[i].mu, est_1[i].variance,
                                           est_2[j].mu, est_2[j].variance});
        }
        const auto tests = z_test(pairs);
        std::vector<double> p(tests.size());
        for (std::size_t k = 0; k < tests.size(); ++k) p[k] = tests[k].p;
        const auto bh = bh_adjust(p, options.fdr);

        DEArm arm;
        arm.measurement = m;
        arm.results.reserve(pairs.size());
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto& pr = pairs[k];
            arm.results.push_back(DEResult{pr.gene_id, pr.set, pr.mu1, pr.mu2, std::sqrt(pr.var1), std::sqrt(pr.var2),
                                           tests[k].z, tests[k].p, bh[k].q, bh[k].rejected});
            if (bh[k].rejected) ++arm.rejected[pr.set];
        }
        report.arms.push_back(std::move(arm));
    }
    return report;
}

SetCounts overlap_counts(const DEArm& first, const DEArm& second) {
    std::unordered_set<std::string_view> rejected;
    for (const auto& r : second.results) {
        if (r.rejected) rejected.insert(r.gene_id);
    }
    SetCounts out;
    for (const auto& r : first.results) {
        if (r.rejected && rejected.count(r.gene_id)) ++out[r.set];
    }
    return out;
}

void write_de_summary(std::ostream& out, const DEReport& report) {
    const DEArm* cal = report.arm(Measurement::Calibrated);
    const DEArm* raw = report.arm(Measurement::RnaSeqRaw);
    std::vector<std::pair<std::string, SetCounts>> columns;
    if (cal) columns.emplace_back("Calibration", cal->rejected);
    if (raw) columns.emplace_back("RNA-Seq", raw->rejected);
    if (cal && raw) columns.emplace_back("Overlap", overlap_counts(*cal, *raw));

    out << "Gene set";
    for (const auto& c : columns) out << ',' << c.first;
    out << '\n';
    const std::pair<const char*, GeneSet> rows[] = {
        {"A", GeneSet::A}, {"B-A", GeneSet::BminusA}, {"C-B", GeneSet::CminusB}};
    for (const auto& [label, set] : rows) {
        out << label;
        for (auto& c : columns) out << ',' << c.second[set];
        out << '\n';
    }
    out << "Total";
    for (const auto& c : columns) out << ',' << c.second.total();
    out << '\n';
}

void write_de_table(std::ostream& out, const DEArm& arm) {
    out << "gene_id,set,mu1,mu2,se1,se2,z,p,q,rejected\n";
    for (const auto& r : arm.results) {
        csv::write_row(out, {r.gene_id, std::string(to_string(r.set)), format_double(r.mu1), format_double(r.mu2),
                             format_double(r.se1), format_double(r.se2), format_double(r.z_stat),
                             format_double(r.p_value), format_double(r.q_value), r.rejected ? "1" : "0"});
    }
}

} // namespace mecal
