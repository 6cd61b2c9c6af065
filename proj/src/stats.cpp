#include "mecal/stats.hpp"

#include "mecal/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mecal::stats {

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double two_sided_p(double z) { return std::erfc(std::fabs(z) / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("normal quantile requires p in (0, 1)");
    }
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double mean(std::span<const double> values) {
    if (values.empty()) {
        throw InsufficientDataError("mean of an empty sample");
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
    if (values.size() < 2) {
        throw InsufficientDataError("sample variance needs at least two values");
    }
    const double m = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return ss / static_cast<double>(values.size() - 1);
}

QuadraticFit fit_quadratic(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 4) {
        throw InsufficientDataError("quadratic fit needs at least four paired points");
    }
    const std::size_t n = x.size();
    // Centre and scale x so the normal equations stay well conditioned.
    const double xm = mean(x);
    double xs = 0.0;
    for (double v : x) xs = std::max(xs, std::fabs(v - xm));
    if (xs == 0.0) {
        throw DegenerateCovarianceError("quadratic fit: x has no spread");
    }

    double g[3][3] = {};
    double b[3] = {};
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (x[i] - xm) / xs;
        const double row[3] = {1.0, t, t * t};
        for (int r = 0; r < 3; ++r) {
            b[r] += row[r] * y[i];
            for (int c = 0; c < 3; ++c) g[r][c] += row[r] * row[c];
        }
    }

    // Invert the 3x3 Gram matrix by cofactors.
    const double det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1]) -
                       g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0]) +
                       g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
    if (det == 0.0) {
        throw DegenerateCovarianceError("quadratic fit: singular design");
    }
    double inv[3][3];
    inv[0][0] = (g[1][1] * g[2][2] - g[1][2] * g[2][1]) / det;
    inv[0][1] = (g[0][2] * g[2][1] - g[0][1] * g[2][2]) / det;
    inv[0][2] = (g[0][1] * g[1][2] - g[0][2] * g[1][1]) / det;
    inv[1][0] = (g[1][2] * g[2][0] - g[1][0] * g[2][2]) / det;
    inv[1][1] = (g[0][0] * g[2][2] - g[0][2] * g[2][0]) / det;
    inv[1][2] = (g[0][2] * g[1][0] - g[0][0] * g[1][2]) / det;
    inv[2][0] = (g[1][0] * g[2][1] - g[1][1] * g[2][0]) / det;
    inv[2][1] = (g[0][1] * g[2][0] - g[0][0] * g[2][1]) / det;
    inv[2][2] = (g[0][0] * g[1][1] - g[0][1] * g[1][0]) / det;

    double t_coef[3];
    for (int r = 0; r < 3; ++r) {
        t_coef[r] = inv[r][0] * b[0] + inv[r][1] * b[1] + inv[r][2] * b[2];
    }

    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (x[i] - xm) / xs;
        const double r = y[i] - (t_coef[0] + t_coef[1] * t + t_coef[2] * t * t);
        rss += r * r;
    }
    const double s2 = rss / static_cast<double>(n - 3);

    // Map coefficients of (a + b t + c t^2), t = (x - xm)/xs, back to powers of x.
    // The transform is linear, coef = M t_coef, so cov(coef) = M cov(t) M^T.
    const double m[3][3] = {
        {1.0, -xm / xs, xm * xm / (xs * xs)},
        {0.0, 1.0 / xs, -2.0 * xm / (xs * xs)},
        {0.0, 0.0, 1.0 / (xs * xs)},
    };
    QuadraticFit fit;
    fit.residual_variance = s2;
    for (int r = 0; r < 3; ++r) {
        double c = 0.0;
        for (int k = 0; k < 3; ++k) c += m[r][k] * t_coef[k];
        fit.coef[r] = c;
        double v = 0.0;
        for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 3; ++l) v += m[r][k] * inv[k][l] * m[r][l];
        fit.se[r] = std::sqrt(s2 * v);
    }
    return fit;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw InsufficientDataError("line fit needs at least two paired points");
    }
    const double xm = mean(x);
    const double ym = mean(y);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - xm) * (y[i] - ym);
        sxx += (x[i] - xm) * (x[i] - xm);
    }
    if (sxx == 0.0) {
        throw DegenerateCovarianceError("line fit: x has no spread");
    }
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = ym - fit.slope * xm;
    return fit;
}

} // namespace mecal::stats
