#ifndef MECAL_STATS_HPP
#define MECAL_STATS_HPP

#include <array>
#include <span>

namespace mecal::stats {

/// P(Z > z) for standard normal Z, accurate far into the tail.
double normal_upper_tail(double z);

/// 2 P(Z > |z|).
double two_sided_p(double z);

/// Standard normal quantile, p in (0, 1).
double normal_quantile(double p);

double mean(std::span<const double> values);

/// Sample variance with denominator n - 1. Requires at least two values.
double sample_variance(std::span<const double> values);

/// Ordinary least squares fit of y = c0 + c1 x + c2 x^2.
struct QuadraticFit {
    std::array<double, 3> coef{};
    std::array<double, 3> se{};
    double residual_variance = 0.0;
};

QuadraticFit fit_quadratic(std::span<const double> x, std::span<const double> y);

/// Least-squares slope and intercept of y on x.
struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
};

LineFit fit_line(std::span<const double> x, std::span<const double> y);

} // namespace mecal::stats

#endif
