#include "mecal/simulation.hpp"

#include "mecal/csv.hpp"
#include "mecal/error.hpp"
#include "mecal/parallel.hpp"
#include "mecal/rng.hpp"
#include "mecal/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>

namespace mecal {

Theta simulation_setting(int setting) {
    switch (setting) {
    case 1: return Theta{9.0, 5.0, 0.75, 1.0, 0.8, 1.2, 1.0};
    case 2: return Theta{0.02, 0.2, 0.9, 0.95, 0.5, 1.0, 0.75};
    case 3: return Theta{-5.0, 5.0, 1.3, 1.2, 0.2, 1.0, 1.2};
    default: throw ConfigError("setting", "must be 1, 2 or 3, got " + std::to_string(setting));
    }
}

namespace {

void validate_theta(const Theta& t, const std::string& prefix) {
    if (!(t.sigma1_sq > 0.0)) throw ConfigError(prefix + ".sigma1_sq", "must be > 0");
    if (!(t.sigma2_sq > 0.0)) throw ConfigError(prefix + ".sigma2_sq", "must be > 0");
    if (!(t.sigma3_sq > 0.0)) throw ConfigError(prefix + ".sigma3_sq", "must be > 0");
    if (t.beta2 == 0.0 || !std::isfinite(t.beta2)) throw ConfigError(prefix + ".beta2", "must be finite and nonzero");
    if (t.beta3 == 0.0 || !std::isfinite(t.beta3)) throw ConfigError(prefix + ".beta3", "must be finite and nonzero");
    if (!std::isfinite(t.alpha2)) throw ConfigError(prefix + ".alpha2", "must be finite");
    if (!std::isfinite(t.alpha3)) throw ConfigError(prefix + ".alpha3", "must be finite");
}

void validate_mu_law(const MuLaw& law, std::size_t needed) {
    if (law.kind == MuLaw::Kind::Normal) {
        if (!std::isfinite(law.mean)) throw ConfigError("mu_law.mean", "must be finite");
        if (!(law.variance > 0.0) || !std::isfinite(law.variance)) throw ConfigError("mu_law.variance", "must be > 0");
    } else if (law.values.size() < needed) {
        throw ConfigError("mu_law.values", "needs at least " + std::to_string(needed) + " values, got " +
                                               std::to_string(law.values.size()));
    }
}

// `count` true levels starting at `offset` into a fixed list, or fresh normal draws.
std::vector<double> draw_mu(const MuLaw& law, std::size_t count, std::size_t offset, Rng rng) {
    std::vector<double> mu(count);
    if (law.kind == MuLaw::Kind::Fixed) {
        std::copy_n(law.values.begin() + static_cast<std::ptrdiff_t>(offset), count, mu.begin());
        return mu;
    }
    const double sd = std::sqrt(law.variance);
    for (auto& v : mu) v = rng.normal(law.mean, sd);
    return mu;
}

std::string gene_name(std::size_t index) {
    std::string digits = std::to_string(index + 1);
    if (digits.size() < 5) digits.insert(0, 5 - digits.size(), '0');
    return "g" + digits;
}

} // namespace

void SimConfig::validate() const {
    validate_theta(theta, "theta");
    if (replications < 1) throw ConfigError("replications", "must be >= 1");
    if (n_train < 4) throw ConfigError("n_train", "must be >= 4");
    if (n_train_grid.empty()) throw ConfigError("n_train_grid", "must not be empty");
    for (std::size_t i = 0; i < n_train_grid.size(); ++i) {
        const auto n = n_train_grid[i];
        const auto field = "n_train_grid[" + std::to_string(i) + "]";
        if (n < 4) throw ConfigError(field, "must be >= 4");
        if (n > n_train) throw ConfigError(field, "exceeds n_train = " + std::to_string(n_train));
    }
    if (n_test < 4) throw ConfigError("n_test", "must be >= 4");
    if (!(max_skip_fraction >= 0.0 && max_skip_fraction <= 1.0)) {
        throw ConfigError("max_skip_fraction", "must lie in [0, 1]");
    }
    validate_mu_law(mu_law, n_train + n_test);
}

SimDataset generate_dataset(const SimConfig& config, std::size_t rep_index) {
    validate_theta(config.theta, "theta");
    const std::size_t total = config.n_train + config.n_b_only + config.n_c_only;
    validate_mu_law(config.mu_law, total);

    SimDataset out;
    out.true_mu = draw_mu(config.mu_law, total, 0, Rng::stream(config.seed, "mu"));
    Rng rng = Rng::stream(config.seed, "dataset").split(rep_index);
    std::vector<Gene> genes;
    genes.reserve(total);
    for (std::size_t j = 0; j < total; ++j) {
        const GeneSet set = j < config.n_train                       ? GeneSet::A
                            : j < config.n_train + config.n_b_only ? GeneSet::BminusA
                                                                     : GeneSet::CminusB;
        genes.push_back(simulate_gene(config.theta, out.true_mu[j], set, rng, gene_name(j)));
    }
    out.table = MeasurementTable(std::move(genes));
    return out;
}

namespace {

constexpr std::array<const char*, 4> kEstimators = {"xyz", "yz", "z", "x"};

struct Columns {
    std::vector<double> x, y, z;

    explicit Columns(std::size_t n) : x(n), y(n), z(n) {}
};

Columns draw_columns(const Theta& t, const std::vector<double>& mu, Rng rng) {
    Columns c(mu.size());
    const double s1 = std::sqrt(t.sigma1_sq);
    const double s2 = std::sqrt(t.sigma2_sq);
    const double s3 = std::sqrt(t.sigma3_sq);
    for (std::size_t j = 0; j < mu.size(); ++j) {
        // Same draw order as simulate_gene: x, y, z.
        c.x[j] = mu[j] + s1 * rng.normal();
        c.y[j] = t.alpha2 + t.beta2 * mu[j] + s2 * rng.normal();
        c.z[j] = t.alpha3 + t.beta3 * mu[j] + s3 * rng.normal();
    }
    return c;
}

struct CellResult {
    bool used = false;
    bool negative_variance = false;
    std::array<std::vector<double>, 3> estimates; // xyz, yz, z over the test genes
};

struct ReplicationResult {
    std::vector<double> x_test;
    std::vector<CellResult> cells; // one per grid entry
};

} // namespace

double AccuracyReport::amse_of(const std::string& estimator, std::size_t n) const {
    for (const auto& p : amse) {
        if (p.estimator == estimator && p.n == n) return p.amse;
    }
    throw DomainError("no aMSE entry for " + estimator + " at n = " + std::to_string(n));
}

const CurvaturePoint& AccuracyReport::curvature_of(const std::string& estimator, std::size_t n) const {
    for (const auto& p : curvature) {
        if (p.estimator == estimator && p.n == n) return p;
    }
    throw DomainError("no curvature entry for " + estimator + " at n = " + std::to_string(n));
}

AccuracyReport run_accuracy_experiment(const SimConfig& config) {
    config.validate();

    const auto mu_train = draw_mu(config.mu_law, config.n_train, 0, Rng::stream(config.seed, "mu.train"));
    const auto mu_test = draw_mu(config.mu_law, config.n_test, config.n_train, Rng::stream(config.seed, "mu.test"));
    const Rng train_base = Rng::stream(config.seed, "train");
    const Rng test_base = Rng::stream(config.seed, "test");
    const auto& grid = config.n_train_grid;

    std::vector<ReplicationResult> reps(config.replications);
    parallel_for(config.replications, config.threads, [&](std::size_t r) {
        const auto train = draw_columns(config.theta, mu_train, train_base.split(r));
        const auto test = draw_columns(config.theta, mu_test, test_base.split(r));
        ReplicationResult& out = reps[r];
        out.x_test = test.x;
        out.cells.resize(grid.size());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const std::size_t n = grid[g];
            CellResult& cell = out.cells[g];
            StructuralFit fit;
            try {
                fit = fit_structural(compute_moments(std::span(train.x).first(n), std::span(train.y).first(n),
                                                     std::span(train.z).first(n)),
                                     config.convention);
            } catch (const DegenerateCovarianceError&) {
                continue;
            }
            cell.negative_variance = fit.has_warning(FitWarning::NegativeVariance);
            for (auto& e : cell.estimates) e.resize(config.n_test);
            bool finite = true;
            for (std::size_t j = 0; j < config.n_test; ++j) {
                cell.estimates[0][j] = gls_xyz(fit.theta, test.x[j], test.y[j], test.z[j]);
                cell.estimates[1][j] = gls_yz(fit.theta, test.y[j], test.z[j]);
                cell.estimates[2][j] = gls_z(fit.theta, test.z[j]);
                finite = finite && std::isfinite(cell.estimates[0][j]) && std::isfinite(cell.estimates[1][j]) &&
                         std::isfinite(cell.estimates[2][j]);
            }
            cell.used = finite;
        }
    });

    AccuracyReport report;
    report.config = config;
    const std::size_t genes = config.n_test;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const std::size_t n = grid[g];
        SkipCount skip{n, 0, 0};
        std::vector<std::size_t> used;
        for (std::size_t r = 0; r < reps.size(); ++r) {
            const auto& cell = reps[r].cells[g];
            if (cell.negative_variance) ++skip.negative_variance;
            if (cell.used) {
                used.push_back(r);
            } else {
                ++skip.skipped;
            }
        }
        report.skips.push_back(skip);
        if (static_cast<double>(skip.skipped) > config.max_skip_fraction * static_cast<double>(reps.size())) {
            throw InstabilityError("accuracy experiment: " + std::to_string(skip.skipped) + " of " +
                                   std::to_string(reps.size()) + " replications degenerate at n = " +
                                   std::to_string(n));
        }
        if (used.size() < 2) {
            throw InstabilityError("accuracy experiment: fewer than two usable replications at n = " +
                                   std::to_string(n));
        }

        for (std::size_t k = 0; k < kEstimators.size(); ++k) {
            auto value = [&](std::size_t r, std::size_t j) {
                return k < 3 ? reps[r].cells[g].estimates[k][j] : reps[r].x_test[j];
            };
            double sq_err = 0.0;
            std::vector<double> emp_var(genes);
            for (std::size_t j = 0; j < genes; ++j) {
                double mean = 0.0;
                for (auto r : used) {
                    const double v = value(r, j);
                    mean += v;
                    sq_err += (v - mu_test[j]) * (v - mu_test[j]);
                }
                mean /= static_cast<double>(used.size());
                double ss = 0.0;
                for (auto r : used) ss += (value(r, j) - mean) * (value(r, j) - mean);
                emp_var[j] = ss / static_cast<double>(used.size() - 1);
                report.variance_curves.push_back(VariancePoint{kEstimators[k], n, mu_test[j], emp_var[j]});
            }
            report.amse.push_back(
                AmsePoint{kEstimators[k], n, sq_err / static_cast<double>(used.size() * genes)});
            const auto quad = stats::fit_quadratic(mu_test, emp_var);
            report.curvature.push_back(CurvaturePoint{kEstimators[k], n, quad.coef[2], quad.se[2]});
        }
    }
    return report;
}

RocCurve roc_curve(std::string arm, const std::vector<double>& scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) throw DomainError("roc: scores and labels differ in length");
    const auto pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
    const std::size_t neg = positive.size() - pos;
    if (pos == 0 || neg == 0) throw DomainError("roc: needs at least one positive and one negative");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.arm = std::move(arm);
    curve.points.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            positive[order[i]] ? ++tp : ++fp;
            ++i;
        }
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                                static_cast<double>(tp) / static_cast<double>(pos)});
    }
    return curve;
}

double tpr_at_fpr(const RocCurve& curve, double fpr) {
    double best = 0.0;
    for (const auto& p : curve.points) {
        if (p.fpr <= fpr) best = std::max(best, p.tpr);
    }
    return best;
}

void DESimConfig::validate() const {
    validate_theta(theta, "theta");
    if (genes_de < 1) throw ConfigError("genes_de", "must be >= 1 so the ROC has positives");
    if (genes_de > genes_total) throw ConfigError("genes_de", "exceeds genes_total");
    if (set_sizes.n < 4) throw ConfigError("set_sizes.n", "must be >= 4 to fit the structural parameters");
    if (set_sizes.n > set_sizes.m) throw ConfigError("set_sizes.m", "must be >= set_sizes.n");
    if (set_sizes.m > set_sizes.l) throw ConfigError("set_sizes.l", "must be >= set_sizes.m");
    if (set_sizes.l > genes_total) throw ConfigError("set_sizes.l", "exceeds genes_total");
    if (genes_de >= set_sizes.l) throw ConfigError("genes_de", "must leave at least one non-DE measured gene");
    if (!(effect_lo > 0.0 && effect_lo < effect_hi)) {
        throw ConfigError("effect_lo", "need 0 < effect_lo < effect_hi");
    }
    for (std::size_t i = 0; i < fpr_grid.size(); ++i) {
        if (!(fpr_grid[i] > 0.0 && fpr_grid[i] <= 1.0)) {
            throw ConfigError("fpr_grid[" + std::to_string(i) + "]", "must lie in (0, 1]");
        }
    }
    for (std::size_t i = 0; i < fdr_grid.size(); ++i) {
        if (!(fdr_grid[i] > 0.0 && fdr_grid[i] < 1.0)) {
            throw ConfigError("fdr_grid[" + std::to_string(i) + "]", "must lie in (0, 1)");
        }
    }
    validate_mu_law(mu_law, genes_total);
}

DESimData generate_de_data(const DESimConfig& config) {
    config.validate();
    const std::size_t l = config.set_sizes.l;
    const auto mu1 = draw_mu(config.mu_law, config.genes_total, 0, Rng::stream(config.seed, "mu"));

    // DE genes: a uniform random subset of the measured genes (partial Fisher-Yates).
    std::vector<std::size_t> pool(l);
    std::iota(pool.begin(), pool.end(), 0);
    Rng pick = Rng::stream(config.seed, "de");
    for (std::size_t i = 0; i < config.genes_de; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(pick.below(l - i));
        std::swap(pool[i], pool[j]);
    }
    std::vector<bool> is_de(l, false);
    std::vector<double> mu2(mu1.begin(), mu1.begin() + static_cast<std::ptrdiff_t>(l));
    Rng effects = Rng::stream(config.seed, "effects");
    for (std::size_t i = 0; i < config.genes_de; ++i) {
        const std::size_t j = pool[i];
        const double sign = effects.uniform() < 0.5 ? -1.0 : 1.0;
        const double size = effects.uniform(config.effect_lo, config.effect_hi);
        is_de[j] = true;
        mu2[j] += sign * size;
    }

    auto build = [&](const std::vector<double>& mu, const char* label) {
        Rng rng = Rng::stream(config.seed, label);
        std::vector<Gene> genes;
        genes.reserve(l);
        for (std::size_t j = 0; j < l; ++j) {
            const GeneSet set = j < config.set_sizes.n   ? GeneSet::A
                                : j < config.set_sizes.m ? GeneSet::BminusA
                                                         : GeneSet::CminusB;
            genes.push_back(simulate_gene(config.theta, mu[j], set, rng, gene_name(j)));
        }
        return MeasurementTable(std::move(genes));
    };
    DESimData data;
    data.condition_1 = build(mu1, "condition1");
    data.condition_2 = build(mu2, "condition2");
    data.is_de = std::move(is_de);
    return data;
}

double DESimReport::tpr_of(const std::string& arm, double fpr) const {
    for (const auto& p : tpr) {
        if (p.arm == arm && p.level == fpr) return p.value;
    }
    throw DomainError("no TPR entry for " + arm + " at FPR " + format_double(fpr));
}

DESimReport run_de_experiment(const DESimConfig& config) {
    const auto data = generate_de_data(config);

    StructuralFit fit_1, fit_2;
    try {
        fit_1 = fit_structural(compute_moments(data.condition_1), config.convention);
        fit_2 = fit_structural(compute_moments(data.condition_2), config.convention);
    } catch (const DegenerateCovarianceError& e) {
        throw InstabilityError(std::string("DE experiment: degenerate structural fit: ") + e.what());
    }

    DEOptions options;
    options.fdr = config.fdr_grid.empty() ? 0.05 : config.fdr_grid.front();
    options.arms = {Measurement::Calibrated, Measurement::RnaSeqRaw};
    options.convention = config.convention;
    const auto de = de_pipeline(data.condition_1, fit_1, data.condition_2, fit_2, options);

    DESimReport report;
    report.config = config;
    report.tested = de.compared;
    report.positives = config.genes_de;
    for (const auto& arm : de.arms) {
        const std::string name(to_string(arm.measurement));
        std::vector<double> scores(arm.results.size());
        std::vector<bool> truth(arm.results.size());
        std::vector<double> p(arm.results.size());
        for (std::size_t k = 0; k < arm.results.size(); ++k) {
            scores[k] = std::fabs(arm.results[k].z_stat);
            p[k] = arm.results[k].p_value;
            // Results follow condition-1 order, which is the generation order.
            truth[k] = data.is_de[k];
        }
        auto curve = roc_curve(name, scores, truth);
        for (double f : config.fpr_grid) report.tpr.push_back({name, f, tpr_at_fpr(curve, f)});
        for (double q : config.fdr_grid) {
            const auto bh = bh_adjust(p, q);
            BhOutcome outcome{name, q, 0, 0};
            for (std::size_t k = 0; k < bh.size(); ++k) {
                if (!bh[k].rejected) continue;
                ++outcome.rejected;
                if (!truth[k]) ++outcome.false_discoveries;
            }
            report.bh.push_back(outcome);
        }
        report.roc.push_back(std::move(curve));
    }
    return report;
}

void write_amse_csv(std::ostream& out, const AccuracyReport& report) {
    out << "estimator,n,amse\n";
    for (const auto& p : report.amse) {
        csv::write_row(out, {p.estimator, std::to_string(p.n), format_double(p.amse)});
    }
}

void write_variance_curves_csv(std::ostream& out, const AccuracyReport& report) {
    out << "estimator,n,mu,emp_var\n";
    for (const auto& p : report.variance_curves) {
        csv::write_row(out, {p.estimator, std::to_string(p.n), format_double(p.mu), format_double(p.emp_var)});
    }
}

void write_roc_csv(std::ostream& out, const std::vector<RocCurve>& curves) {
    out << "arm,fpr,tpr\n";
    for (const auto& c : curves) {
        for (const auto& p : c.points) {
            csv::write_row(out, {c.arm, format_double(p.fpr), format_double(p.tpr)});
        }
    }
}

} // namespace mecal
