#include "mecal/bootstrap.hpp"

#include "mecal/error.hpp"
#include "mecal/parallel.hpp"
#include "mecal/rng.hpp"

#include <cmath>

namespace mecal {

std::string_view to_string(VarianceMode m) { return m == VarianceMode::Leading ? "leading" : "bootstrap"; }

std::optional<VarianceMode> parse_variance_mode(std::string_view token) {
    if (token == "leading") return VarianceMode::Leading;
    if (token == "bootstrap") return VarianceMode::Bootstrap;
    return std::nullopt;
}

namespace {

void check_preconditions(const StructuralFit& fit, const BootstrapOptions& options) {
    if (options.reps < kMinBootstrapReps) {
        throw DomainError("bootstrap needs at least " + std::to_string(kMinBootstrapReps) + " replicates, got " +
                          std::to_string(options.reps));
    }
    const Theta& t = fit.theta;
    if (!(t.sigma1_sq > 0.0 && t.sigma2_sq > 0.0 && t.sigma3_sq > 0.0)) {
        throw DomainError("bootstrap needs a fit with every sigma_i^2 > 0");
    }
}

// Dataset with mu fixed at each gene's calibrated estimate, drawn from the fit.
MeasurementTable resample(const MeasurementTable& table, const Theta& theta, const std::vector<double>& mu, Rng rng) {
    std::vector<Gene> genes;
    genes.reserve(table.size());
    const auto& source = table.genes();
    for (std::size_t j = 0; j < source.size(); ++j) {
        genes.push_back(simulate_gene(theta, mu[j], source[j].set(), rng, source[j].id));
    }
    return MeasurementTable(std::move(genes));
}

std::vector<double> centres(const MeasurementTable& table, const StructuralFit& fit) {
    const auto calibrated = calibrate(table, fit, CalibrationPolicy::Strict);
    std::vector<double> mu(calibrated.size());
    for (std::size_t j = 0; j < mu.size(); ++j) mu[j] = calibrated[j].mu_hat;
    return mu;
}

void check_discards(std::size_t discarded, const BootstrapOptions& options) {
    if (static_cast<double>(discarded) > options.max_discard_fraction * static_cast<double>(options.reps)) {
        throw InstabilityError(std::to_string(discarded) + " of " + std::to_string(options.reps) +
                               " bootstrap replicates were discarded (limit " +
                               std::to_string(options.max_discard_fraction * 100.0) + "%)");
    }
}

} // namespace

BootstrapSe bootstrap_se(const MeasurementTable& table, const StructuralFit& fit, const BootstrapOptions& options) {
    check_preconditions(fit, options);
    const auto mu = centres(table, fit);

    // Only A genes enter the refit, so resample just those.
    const auto a_only = table.subset(table.a_indices());
    std::vector<double> mu_a;
    for (std::size_t j = 0; j < table.size(); ++j) {
        if (table.genes()[j].x) mu_a.push_back(mu[j]);
    }

    const Rng base = Rng::stream(options.seed, "bootstrap");
    std::vector<std::optional<std::array<double, 7>>> draws(options.reps);
    parallel_for(options.reps, options.threads, [&](std::size_t r) {
        const auto sample = resample(a_only, fit.theta, mu_a, base.split(r));
        try {
            draws[r] = fit_structural(compute_moments(sample), fit.convention).theta.to_array();
        } catch (const DegenerateCovarianceError&) {
            draws[r].reset();
        }
    });

    BootstrapSe result;
    std::array<double, 7> sum{}, sum_sq{};
    std::array<double, 7> shift = fit.theta.to_array(); // shifted sums for stability
    for (const auto& d : draws) {
        if (!d) {
            ++result.discarded;
            continue;
        }
        ++result.used;
        for (std::size_t k = 0; k < 7; ++k) {
            const double v = (*d)[k] - shift[k];
            sum[k] += v;
            sum_sq[k] += v * v;
        }
    }
    check_discards(result.discarded, options);
    const double n = static_cast<double>(result.used);
    for (std::size_t k = 0; k < 7; ++k) {
        result.se[k] = std::sqrt((sum_sq[k] - sum[k] * sum[k] / n) / (n - 1.0));
    }
    return result;
}

VarianceEstimate estimate_variance(const StructuralFit& fit, const MeasurementTable& table, VarianceMode mode,
                                   const BootstrapOptions& options) {
    VarianceEstimate result;
    if (mode == VarianceMode::Leading) {
        const auto calibrated = calibrate(table, fit, CalibrationPolicy::Strict);
        result.variance.reserve(calibrated.size());
        for (const auto& c : calibrated) result.variance.push_back(c.variance);
        return result;
    }

    check_preconditions(fit, options);
    const auto mu = centres(table, fit);
    const std::size_t genes = table.size();
    const Rng base = Rng::stream(options.seed, "bootstrap");

    std::vector<std::vector<double>> draws(options.reps);
    parallel_for(options.reps, options.threads, [&](std::size_t r) {
        const auto sample = resample(table, fit.theta, mu, base.split(r));
        try {
            const auto refit = fit_structural(compute_moments(sample), fit.convention);
            const auto calibrated = calibrate(sample, refit, CalibrationPolicy::Strict);
            std::vector<double> values(genes);
            for (std::size_t j = 0; j < genes; ++j) values[j] = calibrated[j].mu_hat;
            draws[r] = std::move(values);
        } catch (const DegenerateCovarianceError&) {
            draws[r].clear();
        } catch (const CalibrationBlockedError&) {
            draws[r].clear();
        }
    });

    std::vector<double> sum(genes, 0.0), sum_sq(genes, 0.0);
    for (const auto& d : draws) {
        if (d.empty()) {
            ++result.discarded;
            continue;
        }
        ++result.used;
        for (std::size_t j = 0; j < genes; ++j) {
            const double v = d[j] - mu[j];
            sum[j] += v;
            sum_sq[j] += v * v;
        }
    }
    check_discards(result.discarded, options);
    const double n = static_cast<double>(result.used);
    result.variance.resize(genes);
    for (std::size_t j = 0; j < genes; ++j) {
        result.variance[j] = (sum_sq[j] - sum[j] * sum[j] / n) / (n - 1.0);
    }
    return result;
}

} // namespace mecal
