#ifndef MECAL_BOOTSTRAP_HPP
#define MECAL_BOOTSTRAP_HPP

#include "mecal/model.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace mecal {

/**
 * Functional-model parametric bootstrap.
 *
 * Each replicate regenerates every gene's available measurements from the
 * fitted parameters with mu_j held at its calibrated estimate, refits on A and
 * (for variance estimation) recalibrates every gene. Replicate r draws from
 * `Rng::stream(seed, "bootstrap").split(r)`, so results depend only on the
 * seed, never on the thread count.
 */
struct BootstrapOptions {
    std::size_t reps = 1000;
    std::uint64_t seed = 1;
    unsigned threads = 0; ///< 0 = hardware concurrency
    double max_discard_fraction = 0.10;
};

inline constexpr std::size_t kMinBootstrapReps = 100;

struct BootstrapSe {
    std::array<double, 7> se{};
    std::size_t used = 0;
    std::size_t discarded = 0;
};

/// Standard deviations of the refitted structural parameters.
/// Replicates whose refit hits a degenerate covariance are discarded; more
/// than `max_discard_fraction` discarded raises InstabilityError.
BootstrapSe bootstrap_se(const MeasurementTable& table, const StructuralFit& fit, const BootstrapOptions& options);

enum class VarianceMode { Leading, Bootstrap };

std::string_view to_string(VarianceMode m);
std::optional<VarianceMode> parse_variance_mode(std::string_view token);

struct VarianceEstimate {
    std::vector<double> variance; ///< aligned with table.genes()
    std::size_t used = 0;
    std::size_t discarded = 0;
};

/**
 * Per-gene variance of the calibrated estimate.
 *
 * `Leading` returns the path's leading-order variance. `Bootstrap` returns the
 * sample variance of mu_hat across full-pipeline replicates, which includes
 * the finite-n inflation from estimating the structural parameters. A
 * replicate is discarded when its refit is degenerate or its calibration is
 * blocked by a negative variance estimate.
 */
VarianceEstimate estimate_variance(const StructuralFit& fit, const MeasurementTable& table, VarianceMode mode,
                                   const BootstrapOptions& options = {});

} // namespace mecal

#endif
