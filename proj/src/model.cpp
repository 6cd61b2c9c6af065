#include "mecal/model.hpp"

#include "mecal/error.hpp"
#include "mecal/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace mecal {

std::array<double, 7> Theta::to_array() const {
    return {alpha2, alpha3, beta2, beta3, sigma1_sq, sigma2_sq, sigma3_sq};
}

Theta Theta::from_array(const std::array<double, 7>& v) { return Theta{v[0], v[1], v[2], v[3], v[4], v[5], v[6]}; }

std::string_view to_string(Alpha3Convention c) {
    return c == Alpha3Convention::Symmetric ? "symmetric" : "printed";
}

std::optional<Alpha3Convention> parse_alpha3_convention(std::string_view token) {
    if (token == "symmetric") return Alpha3Convention::Symmetric;
    if (token == "printed") return Alpha3Convention::AsPrinted;
    return std::nullopt;
}

std::string_view to_string(FitWarning w) {
    switch (w) {
    case FitWarning::NegativeVariance: return "NEGATIVE_VARIANCE";
    }
    return "?";
}

bool StructuralFit::has_warning(FitWarning w) const {
    return std::find(warnings.begin(), warnings.end(), w) != warnings.end();
}

std::string_view to_string(Source s) {
    switch (s) {
    case Source::Xyz: return "xyz";
    case Source::Yz: return "yz";
    case Source::Z: return "z";
    }
    return "?";
}

Source source_for(GeneSet set) {
    switch (set) {
    case GeneSet::A: return Source::Xyz;
    case GeneSet::BminusA: return Source::Yz;
    case GeneSet::CminusB: return Source::Z;
    }
    return Source::Z;
}

double VarianceComponents::for_source(Source s) const {
    switch (s) {
    case Source::Xyz: return gamma_a;
    case Source::Yz: return gamma_ba;
    case Source::Z: return gamma_cb;
    }
    return gamma_cb;
}

SampleMoments compute_moments(std::span<const double> x, std::span<const double> y, std::span<const double> z) {
    const std::size_t n = x.size();
    if (y.size() != n || z.size() != n) {
        throw DomainError("moment columns differ in length");
    }
    if (n < 2) {
        throw InsufficientDataError("sample moments need at least 2 genes in A, got " + std::to_string(n));
    }
    SampleMoments m;
    m.n = n;
    for (std::size_t j = 0; j < n; ++j) {
        m.x_bar += x[j];
        m.y_bar += y[j];
        m.z_bar += z[j];
    }
    const double dn = static_cast<double>(n);
    m.x_bar /= dn;
    m.y_bar /= dn;
    m.z_bar /= dn;
    for (std::size_t j = 0; j < n; ++j) {
        const double dx = x[j] - m.x_bar;
        const double dy = y[j] - m.y_bar;
        const double dz = z[j] - m.z_bar;
        m.s_xx += dx * dx;
        m.s_yy += dy * dy;
        m.s_zz += dz * dz;
        m.s_xy += dx * dy;
        m.s_xz += dx * dz;
        m.s_yz += dy * dz;
    }
    const double denom = dn - 1.0;
    m.s_xx /= denom;
    m.s_yy /= denom;
    m.s_zz /= denom;
    m.s_xy /= denom;
    m.s_xz /= denom;
    m.s_yz /= denom;
    return m;
}

SampleMoments compute_moments(const MeasurementTable& table) {
    std::vector<double> x, y, z;
    const auto sizes = table.set_sizes();
    x.reserve(sizes.n);
    y.reserve(sizes.n);
    z.reserve(sizes.n);
    for (const auto& g : table.genes()) {
        if (!g.x) continue;
        x.push_back(*g.x);
        y.push_back(*g.y);
        z.push_back(*g.z);
    }
    return compute_moments(x, y, z);
}

StructuralFit fit_structural(const SampleMoments& m, Alpha3Convention convention) {
    const double scale = std::max({m.s_xx, m.s_yy, m.s_zz});
    const double tol = kDegenerateTolerance * scale;
    auto require = [&](double s, const char* name) {
        if (!(std::fabs(s) > tol) || s == 0.0) {
            throw DegenerateCovarianceError(std::string("degenerate covariance: ") + name +
                                            " vanishes, so the structural parameters are not identified");
        }
    };
    require(m.s_xz, "s_xz");
    require(m.s_xy, "s_xy");
    require(m.s_yz, "s_yz");

    StructuralFit fit;
    fit.moments = m;
    fit.convention = convention;
    Theta& t = fit.theta;
    t.beta2 = m.s_yz / m.s_xz;
    t.beta3 = m.s_yz / m.s_xy;
    t.alpha2 = m.y_bar - t.beta2 * m.x_bar;
    t.alpha3 = m.z_bar - (convention == Alpha3Convention::Symmetric ? t.beta3 : t.beta2) * m.x_bar;
    fit.mu_spread = m.s_xy * m.s_xz / m.s_yz;
    t.sigma1_sq = m.s_xx - fit.mu_spread;
    t.sigma2_sq = m.s_yy - m.s_xy * m.s_yz / m.s_xz;
    t.sigma3_sq = m.s_zz - m.s_yz * m.s_xz / m.s_xy;
    fit.variance_tolerance = kDegenerateTolerance * scale;

    const double v_tol = fit.variance_tolerance;
    if (t.sigma1_sq < -v_tol || t.sigma2_sq < -v_tol || t.sigma3_sq < -v_tol) {
        fit.warnings.push_back(FitWarning::NegativeVariance);
    }
    return fit;
}

VarianceComponents variance_leading(const Theta& t) {
    if (!(t.sigma1_sq > 0.0 && t.sigma2_sq > 0.0 && t.sigma3_sq > 0.0)) {
        throw DomainError("leading-order variances need every sigma_i^2 > 0");
    }
    if (t.beta2 == 0.0 || t.beta3 == 0.0) {
        throw DomainError("leading-order variances need nonzero slopes");
    }
    const double p1 = 1.0 / t.sigma1_sq;
    const double p2 = t.beta2 * t.beta2 / t.sigma2_sq;
    const double p3 = t.beta3 * t.beta3 / t.sigma3_sq;
    return VarianceComponents{1.0 / (p1 + p2 + p3), 1.0 / (p2 + p3), t.sigma3_sq / (t.beta3 * t.beta3)};
}

double gls_xyz(const Theta& t, double x, double y, double z) {
    const double num = x / t.sigma1_sq + t.beta2 * (y - t.alpha2) / t.sigma2_sq + t.beta3 * (z - t.alpha3) / t.sigma3_sq;
    const double den = 1.0 / t.sigma1_sq + t.beta2 * t.beta2 / t.sigma2_sq + t.beta3 * t.beta3 / t.sigma3_sq;
    return num / den;
}

double gls_yz(const Theta& t, double y, double z) {
    const double num = t.beta2 * (y - t.alpha2) / t.sigma2_sq + t.beta3 * (z - t.alpha3) / t.sigma3_sq;
    const double den = t.beta2 * t.beta2 / t.sigma2_sq + t.beta3 * t.beta3 / t.sigma3_sq;
    return num / den;
}

double gls_z(const Theta& t, double z) { return (z - t.alpha3) / t.beta3; }

namespace {

// Variance of the path estimator, evaluated as written (no sign checks).
double raw_path_variance(const Theta& t, Source s) {
    const double p2 = t.beta2 * t.beta2 / t.sigma2_sq;
    const double p3 = t.beta3 * t.beta3 / t.sigma3_sq;
    switch (s) {
    case Source::Xyz: return 1.0 / (1.0 / t.sigma1_sq + p2 + p3);
    case Source::Yz: return 1.0 / (p2 + p3);
    case Source::Z: return t.sigma3_sq / (t.beta3 * t.beta3);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

struct Channel {
    int platform; // 1, 2, 3
    double sigma_sq;
    double observed;
    double alpha;
    double beta;
};

} // namespace

CalibratedEstimate calibrate_gene(const Gene& gene, const StructuralFit& fit, CalibrationPolicy policy) {
    const Theta& t = fit.theta;
    CalibratedEstimate est;
    est.gene_id = gene.id;
    est.source = source_for(gene.set());

    if (policy == CalibrationPolicy::Unchecked) {
        switch (est.source) {
        case Source::Xyz: est.mu_hat = gls_xyz(t, *gene.x, *gene.y, *gene.z); break;
        case Source::Yz: est.mu_hat = gls_yz(t, *gene.y, *gene.z); break;
        case Source::Z: est.mu_hat = gls_z(t, *gene.z); break;
        }
        est.variance = raw_path_variance(t, est.source);
        est.se = est.variance >= 0.0 ? std::sqrt(est.variance) : std::numeric_limits<double>::quiet_NaN();
        return est;
    }

    std::vector<Channel> channels;
    channels.reserve(3);
    if (est.source == Source::Xyz) channels.push_back({1, t.sigma1_sq, *gene.x, 0.0, 1.0});
    if (est.source != Source::Z) channels.push_back({2, t.sigma2_sq, *gene.y, t.alpha2, t.beta2});
    channels.push_back({3, t.sigma3_sq, *gene.z, t.alpha3, t.beta3});

    const double tol = fit.variance_tolerance;
    std::vector<const Channel*> exact;
    for (const auto& c : channels) {
        if (c.beta == 0.0) {
            throw CalibrationBlockedError("beta" + std::to_string(c.platform) + " is zero; gene '" + gene.id +
                                          "' cannot be mapped to the qRT-PCR scale");
        }
        if (c.sigma_sq < -tol) {
            throw CalibrationBlockedError("sigma" + std::to_string(c.platform) + "_sq = " + format_double(c.sigma_sq) +
                                          " is negative and the " + std::string(to_string(est.source)) +
                                          " path of gene '" + gene.id +
                                          "' needs it; use a larger A set or review the model assumptions");
        }
        if (c.sigma_sq <= tol) exact.push_back(&c);
    }

    if (!exact.empty()) {
        double sum = 0.0;
        for (const auto* c : exact) sum += (c->observed - c->alpha) / c->beta;
        est.mu_hat = sum / static_cast<double>(exact.size());
        est.variance = 0.0;
        est.se = 0.0;
        return est;
    }

    switch (est.source) {
    case Source::Xyz: est.mu_hat = gls_xyz(t, *gene.x, *gene.y, *gene.z); break;
    case Source::Yz: est.mu_hat = gls_yz(t, *gene.y, *gene.z); break;
    case Source::Z: est.mu_hat = gls_z(t, *gene.z); break;
    }
    est.variance = raw_path_variance(t, est.source);
    est.se = std::sqrt(est.variance);
    return est;
}

std::vector<CalibratedEstimate> calibrate(const MeasurementTable& table, const StructuralFit& fit,
                                          CalibrationPolicy policy) {
    std::vector<CalibratedEstimate> out;
    out.reserve(table.size());
    for (const auto& g : table.genes()) out.push_back(calibrate_gene(g, fit, policy));
    return out;
}

std::vector<Residual> residuals(const MeasurementTable& table, const StructuralFit& fit,
                                const std::vector<CalibratedEstimate>& calibrated) {
    std::unordered_map<std::string_view, const CalibratedEstimate*> by_id;
    for (const auto& c : calibrated) {
        if (c.source == Source::Xyz) by_id.emplace(c.gene_id, &c);
    }
    const Theta& t = fit.theta;
    std::vector<Residual> out;
    for (const auto& g : table.genes()) {
        if (!g.x) continue;
        const auto it = by_id.find(g.id);
        if (it == by_id.end()) continue;
        const double mu = it->second->mu_hat;
        out.push_back(Residual{g.id, *g.x - mu, *g.y - t.alpha2 - t.beta2 * mu, *g.z - t.alpha3 - t.beta3 * mu});
    }
    return out;
}

std::array<double, 3> platform_weights(const Theta& t) {
    const double gamma_a = variance_leading(t).gamma_a;
    return {gamma_a / t.sigma1_sq, t.beta2 * t.beta2 * gamma_a / t.sigma2_sq,
            t.beta3 * t.beta3 * gamma_a / t.sigma3_sq};
}

Gene simulate_gene(const Theta& t, double mu, GeneSet set, Rng& rng, std::string id) {
    if (t.sigma1_sq < 0.0 || t.sigma2_sq < 0.0 || t.sigma3_sq < 0.0) {
        throw DomainError("cannot simulate from negative error variances");
    }
    Gene g;
    g.id = std::move(id);
    if (set == GeneSet::A) g.x = mu + std::sqrt(t.sigma1_sq) * rng.normal();
    if (set != GeneSet::CminusB) g.y = t.alpha2 + t.beta2 * mu + std::sqrt(t.sigma2_sq) * rng.normal();
    g.z = t.alpha3 + t.beta3 * mu + std::sqrt(t.sigma3_sq) * rng.normal();
    return g;
}

} // namespace mecal
