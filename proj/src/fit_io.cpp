#include "mecal/fit_io.hpp"

#include "mecal/csv.hpp"
#include "mecal/error.hpp"

#include <istream>
#include <map>
#include <ostream>
#include <string>

namespace mecal {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return std::string(s.substr(first, last - first + 1));
}

} // namespace

void write_fit(std::ostream& out, const StructuralFit& fit) {
    auto kv = [&](std::string_view key, double v) { out << key << " = " << format_double(v) << '\n'; };
    out << "# structural fit of the three-platform measurement-error system\n";
    out << "format = mecal-fit/1\n";
    out << "convention = " << to_string(fit.convention) << '\n';
    out << "n = " << fit.moments.n << '\n';
    const auto theta = fit.theta.to_array();
    for (std::size_t k = 0; k < 7; ++k) kv(kThetaNames[k], theta[k]);
    if (fit.se) {
        for (std::size_t k = 0; k < 7; ++k) kv("se." + std::string(kThetaNames[k]), (*fit.se)[k]);
    }
    kv("mu_spread", fit.mu_spread);
    const auto& m = fit.moments;
    kv("x_bar", m.x_bar);
    kv("y_bar", m.y_bar);
    kv("z_bar", m.z_bar);
    kv("s_xx", m.s_xx);
    kv("s_yy", m.s_yy);
    kv("s_zz", m.s_zz);
    kv("s_xy", m.s_xy);
    kv("s_xz", m.s_xz);
    kv("s_yz", m.s_yz);
    kv("variance_tolerance", fit.variance_tolerance);
    out << "warnings =";
    for (std::size_t i = 0; i < fit.warnings.size(); ++i) out << (i ? "," : " ") << to_string(fit.warnings[i]);
    out << '\n';
}

StructuralFit read_fit(std::istream& in) {
    std::map<std::string, std::pair<std::string, std::size_t>> entries;
    std::string line;
    std::size_t line_no = 0;
    while (csv::read_line(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
        auto key = trim(std::string_view(text).substr(0, eq));
        auto value = trim(std::string_view(text).substr(eq + 1));
        if (!entries.emplace(key, std::make_pair(value, line_no)).second) {
            throw ParseError(line_no, "repeated key '" + key + "'");
        }
    }

    auto text_of = [&](const std::string& key) -> const std::pair<std::string, std::size_t>& {
        const auto it = entries.find(key);
        if (it == entries.end()) throw ParseError(line_no, "fit file lacks key '" + key + "'");
        return it->second;
    };
    auto number = [&](const std::string& key) {
        const auto& [value, at] = text_of(key);
        double v;
        if (!csv::parse_double(value, v)) throw ParseError(at, key + ": not a finite number");
        return v;
    };

    if (text_of("format").first != "mecal-fit/1") {
        throw ParseError(text_of("format").second, "unsupported fit format '" + text_of("format").first + "'");
    }
    StructuralFit fit;
    const auto convention = parse_alpha3_convention(text_of("convention").first);
    if (!convention) throw EnumValueError(text_of("convention").second, "convention must be symmetric or printed");
    fit.convention = *convention;

    std::array<double, 7> theta{};
    for (std::size_t k = 0; k < 7; ++k) theta[k] = number(std::string(kThetaNames[k]));
    fit.theta = Theta::from_array(theta);
    if (entries.count("se.alpha2")) {
        std::array<double, 7> se{};
        for (std::size_t k = 0; k < 7; ++k) se[k] = number("se." + std::string(kThetaNames[k]));
        fit.se = se;
    }
    fit.mu_spread = number("mu_spread");
    auto& m = fit.moments;
    const double n = number("n");
    if (n < 0 || n != static_cast<double>(static_cast<std::size_t>(n))) {
        throw ParseError(text_of("n").second, "n must be a non-negative integer");
    }
    m.n = static_cast<std::size_t>(n);
    m.x_bar = number("x_bar");
    m.y_bar = number("y_bar");
    m.z_bar = number("z_bar");
    m.s_xx = number("s_xx");
    m.s_yy = number("s_yy");
    m.s_zz = number("s_zz");
    m.s_xy = number("s_xy");
    m.s_xz = number("s_xz");
    m.s_yz = number("s_yz");
    fit.variance_tolerance = number("variance_tolerance");

    const auto& [warnings, at] = text_of("warnings");
    std::size_t start = 0;
    while (start < warnings.size()) {
        auto end = warnings.find(',', start);
        if (end == std::string::npos) end = warnings.size();
        const auto token = trim(std::string_view(warnings).substr(start, end - start));
        if (token == "NEGATIVE_VARIANCE") {
            fit.warnings.push_back(FitWarning::NegativeVariance);
        } else if (!token.empty()) {
            throw EnumValueError(at, "unknown warning '" + token + "'");
        }
        start = end + 1;
    }
    return fit;
}

} // namespace mecal
