#include "mecal/cli.hpp"

#include "mecal/bootstrap.hpp"
#include "mecal/csv.hpp"
#include "mecal/fit_io.hpp"
#include "mecal/inference.hpp"
#include "mecal/ingest.hpp"
#include "mecal/measurement_table.hpp"
#include "mecal/model.hpp"
#include "mecal/simulation.hpp"
#include "mecal/stats.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>
#include <variant>

#ifndef MECAL_VERSION
#define MECAL_VERSION "0.0.0"
#endif

namespace mecal::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------- plumbing

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int size = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &size, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::ostringstream hex;
    for (unsigned int i = 0; i < size; ++i) {
        hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return hex.str();
}

std::string read_file(const std::string& path) {
    std::error_code ec;
    if (!fs::exists(path, ec)) throw IoError("cannot open '" + path + "': no such file");
    if (fs::is_directory(path, ec)) throw IoError("cannot open '" + path + "': is a directory");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw IoError("error while reading '" + path + "'");
    return buffer.str();
}

std::string absolute_path(const std::string& path) { return fs::absolute(path).lexically_normal().string(); }

struct Context {
    std::ostream& out;
    std::ostream& err;
};

// Everything a command produces. Nothing touches the output directory until
// commit(), so a failing command leaves no files behind.
struct Run {
    std::string subcommand;
    Json config;
    Json inputs = Json::array();
    Json notes = Json::object();
    std::vector<std::string> warnings;
    std::vector<std::pair<std::string, std::string>> files;

    void add_file(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }

    void warn(const std::string& message, Context& ctx) {
        warnings.push_back(message);
        ctx.err << "warning: " << message << '\n';
    }

    std::string add_input(const std::string& role, const std::string& path) {
        auto bytes = read_file(path);
        inputs.push_back(Json{{"role", role}, {"path", path}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
        return bytes;
    }
};

Json output_digests(const Run& run) {
    Json outputs = Json::array();
    for (const auto& [name, content] : run.files) {
        outputs.push_back(Json{{"name", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
    }
    return outputs;
}

Json build_manifest(const Run& run, const std::vector<std::string>& argv, double elapsed) {
    Json m;
    m["format"] = "mecal-manifest/1";
    m["version"] = MECAL_VERSION;
    m["subcommand"] = run.subcommand;
    m["argv"] = argv;
    m["config"] = run.config;
    m["seed"] = run.config.contains("seed") ? run.config["seed"] : Json(nullptr);
    m["inputs"] = run.inputs;
    m["outputs"] = output_digests(run);
    m["notes"] = run.notes;
    m["warnings"] = run.warnings;
    m["timing"] = Json{{"elapsed_seconds", elapsed}};
    return m;
}

void write_bytes(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << content;
    out.close();
    if (!out) throw IoError("error while writing '" + path.string() + "'");
}

// Stages every file in a hidden sibling directory, then renames them into
// place. The manifest goes last, so its presence marks a complete run.
void commit(const Run& run, const std::string& out_dir, const std::string& manifest) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    const fs::path staging =
        fs::path(out_dir) / (".mecal-staging-" + std::to_string(::getpid()) + "-" + std::to_string(stamp));
    fs::create_directory(staging, ec);
    if (ec) throw IoError("cannot create staging directory in '" + out_dir + "': " + ec.message());
    try {
        for (const auto& [name, content] : run.files) write_bytes(staging / name, content);
        write_bytes(staging / kManifestName, manifest);
        for (const auto& [name, content] : run.files) fs::rename(staging / name, fs::path(out_dir) / name);
        fs::rename(staging / kManifestName, fs::path(out_dir) / kManifestName);
    } catch (const fs::filesystem_error& e) {
        fs::remove_all(staging, ec);
        throw IoError(e.what());
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
    fs::remove_all(staging, ec);
}

// ------------------------------------------------------------ JSON reading

// Strict reader for config objects: type errors and unknown keys are
// ConfigErrors carrying the dotted field path.
class Reader {
public:
    Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "must be a JSON object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const Json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(const std::string& key, double& dst) {
        if (const Json* v = find(key)) dst = as_number(*v, field(key));
    }

    template <typename Int>
    void integer(const std::string& key, Int& dst) {
        if (const Json* v = find(key)) dst = as_integer<Int>(*v, field(key));
    }

    void text(const std::string& key, std::string& dst) {
        if (const Json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(field(key), "expected a string");
            dst = v->get<std::string>();
        }
    }

    template <typename Int>
    void integer_list(const std::string& key, std::vector<Int>& dst) {
        if (const Json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(field(key), "expected an array");
            dst.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                dst.push_back(as_integer<Int>((*v)[i], field(key) + "[" + std::to_string(i) + "]"));
            }
        }
    }

    void number_list(const std::string& key, std::vector<double>& dst) {
        if (const Json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(field(key), "expected an array");
            dst.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                dst.push_back(as_number((*v)[i], field(key) + "[" + std::to_string(i) + "]"));
            }
        }
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError(field(item.key()), "unknown field");
        }
    }

    static double as_number(const Json& v, const std::string& field) {
        if (!v.is_number()) throw ConfigError(field, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(field, "must be finite");
        return d;
    }

    template <typename Int>
    static Int as_integer(const Json& v, const std::string& field) {
        if (v.is_number_unsigned()) return static_cast<Int>(v.get<std::uint64_t>());
        if (v.is_number_integer()) {
            if (v.get<std::int64_t>() < 0) throw ConfigError(field, "must be >= 0");
            return static_cast<Int>(v.get<std::int64_t>());
        }
        throw ConfigError(field, "expected a non-negative integer");
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename Enum, typename Parse>
Enum enum_field(const std::string& token, Parse parse, const std::string& field, const std::string& allowed) {
    const auto v = parse(token);
    if (!v) throw ConfigError(field, "unknown value '" + token + "' (expected " + allowed + ")");
    return *v;
}

// ------------------------------------------------------------ shared options

std::optional<Scale> parse_scale(std::string_view t) {
    if (t == "log2") return Scale::Log2;
    if (t == "linear") return Scale::Linear;
    return std::nullopt;
}
std::string scale_token(Scale s) { return s == Scale::Log2 ? "log2" : "linear"; }

std::optional<AveragingOrder> parse_averaging(std::string_view t) {
    if (t == "log-then-mean") return AveragingOrder::LogThenMean;
    if (t == "mean-then-log") return AveragingOrder::MeanThenLog;
    return std::nullopt;
}
std::string averaging_token(AveragingOrder a) {
    return a == AveragingOrder::LogThenMean ? "log-then-mean" : "mean-then-log";
}

struct InputOptions {
    Scale scale = Scale::Log2;
    AveragingOrder averaging = AveragingOrder::LogThenMean;
    std::string delimiter = "auto";

    Json to_json() const {
        return Json{{"scale", scale_token(scale)}, {"averaging", averaging_token(averaging)}, {"delimiter", delimiter}};
    }

    void read(Reader& r) {
        std::string s = scale_token(scale), a = averaging_token(averaging);
        r.text("scale", s);
        r.text("averaging", a);
        r.text("delimiter", delimiter);
        scale = enum_field<Scale>(s, parse_scale, r.field("scale"), "linear or log2");
        averaging =
            enum_field<AveragingOrder>(a, parse_averaging, r.field("averaging"), "log-then-mean or mean-then-log");
        if (delimiter != "auto" && delimiter != "comma" && delimiter != "tab") {
            throw ConfigError(r.field("delimiter"), "unknown value '" + delimiter + "' (expected auto, comma or tab)");
        }
    }
};

struct RangeFilter {
    bool enabled = true;
    double lo = kDefaultRangeLo;
    double hi = kDefaultRangeHi;

    std::string token() const { return enabled ? format_double(lo) + ":" + format_double(hi) : "none"; }

    static RangeFilter parse(const std::string& token, const std::string& field) {
        RangeFilter r;
        if (token == "none") {
            r.enabled = false;
            return r;
        }
        const auto colon = token.find(':', 1);
        if (colon == std::string::npos || !csv::parse_double(token.substr(0, colon), r.lo) ||
            !csv::parse_double(token.substr(colon + 1), r.hi)) {
            throw UsageError(field + ": expected LO:HI or none, got '" + token + "'");
        }
        if (!(r.lo < r.hi)) throw UsageError(field + ": LO must be below HI, got '" + token + "'");
        return r;
    }
};

void read_range(Reader& r, RangeFilter& range) {
    std::string token = range.token();
    r.text("range", token);
    try {
        range = RangeFilter::parse(token, r.field("range"));
    } catch (const UsageError& e) {
        throw ConfigError(r.field("range"), e.what());
    }
}

Alpha3Convention read_convention(Reader& r, Alpha3Convention current) {
    std::string token(to_string(current));
    r.text("alpha3_convention", token);
    return enum_field<Alpha3Convention>(token, parse_alpha3_convention, r.field("alpha3_convention"),
                                        "symmetric or printed");
}

VarianceMode read_var_mode(Reader& r, VarianceMode current) {
    std::string token(to_string(current));
    r.text("var_mode", token);
    return enum_field<VarianceMode>(token, parse_variance_mode, r.field("var_mode"), "leading or bootstrap");
}

std::string strip_line(const ParseError& e) {
    const std::string what = e.what();
    const auto colon = what.find(": ");
    return colon == std::string::npos ? what : what.substr(colon + 2);
}

struct LoadedTable {
    MeasurementTable table;
    std::string format; // "raw" or "canonical"
};

LoadedTable load_table(const std::string& role, const std::string& path, const InputOptions& options, Run& run) {
    auto bytes = run.add_input(role, path);
    if (bytes.rfind("\xEF\xBB\xBF", 0) == 0) bytes.erase(0, 3);
    const auto first_end = bytes.find('\n');
    std::string header = bytes.substr(0, first_end);
    if (!header.empty() && header.back() == '\r') header.pop_back();

    std::istringstream in(bytes);
    try {
        if (header == "gene_id,set,x,y,z") return {read_canonical_table(in), "canonical"};
        TableFormat format;
        if (options.delimiter == "comma") format.delimiter = ',';
        if (options.delimiter == "tab") format.delimiter = '\t';
        const auto records = parse_table(in, format);
        return {build_table(collapse_replicates(records, options.scale, options.averaging)), "raw"};
    } catch (const ParseError& e) {
        // Keep the concrete type (enum, duplicate) and prefix the file name.
        if (dynamic_cast<const EnumValueError*>(&e)) throw EnumValueError(e.line(), path + ": " + strip_line(e));
        if (dynamic_cast<const DuplicateError*>(&e)) throw DuplicateError(e.line(), path + ": " + strip_line(e));
        throw ParseError(e.line(), path + ": " + strip_line(e));
    }
}

std::string sizes_text(const SetSizes& s) {
    return "|A| = " + std::to_string(s.n) + ", |B| = " + std::to_string(s.m) + ", |C| = " + std::to_string(s.l);
}

Json sizes_json(const SetSizes& s) { return Json{{"A", s.n}, {"B", s.m}, {"C", s.l}}; }

// Range filter plus fit, with the bookkeeping every fitting command records.
StructuralFit fit_table(const MeasurementTable& table, const RangeFilter& range, Alpha3Convention convention,
                        const std::string& label, Run& run, Context& ctx) {
    MeasurementTable filtered = range.enabled ? filter_expression_range(table, range.lo, range.hi) : table;
    const auto before = table.set_sizes().n;
    const auto after = filtered.set_sizes().n;
    run.notes[label]["range"] = range.token();
    run.notes[label]["demoted_by_range"] = before - after;
    run.notes[label]["n_fit"] = after;
    run.notes[label]["set_sizes"] = sizes_json(table.set_sizes());
    if (after < 4) {
        throw InsufficientDataError(label + ": need at least 4 genes in A after the range filter " + range.token() +
                                    ", have " + std::to_string(after));
    }
    auto fit = fit_structural(compute_moments(filtered), convention);
    if (fit.has_warning(FitWarning::NegativeVariance)) {
        std::string which;
        const auto v = fit.theta.to_array();
        for (std::size_t k = 4; k < 7; ++k) {
            if (v[k] < -fit.variance_tolerance) which += (which.empty() ? "" : ", ") + std::string(kThetaNames[k]);
        }
        run.warn(label + ": negative variance estimate (" + which + "); the fit is reported as computed", ctx);
    }
    return fit;
}

// ---------------------------------------------------------------- fit

struct FitConfig {
    std::string input;
    InputOptions input_options;
    RangeFilter range;
    std::size_t bootstrap = 0;
    Alpha3Convention convention = Alpha3Convention::Symmetric;
    std::uint64_t seed = 1;
    unsigned threads = 0;

    Json to_json() const {
        return Json{{"input", input},
                    {"input_options", input_options.to_json()},
                    {"range", range.token()},
                    {"bootstrap", bootstrap},
                    {"alpha3_convention", std::string(to_string(convention))},
                    {"seed", seed},
                    {"threads", threads}};
    }

    static FitConfig from_json(const Json& j) {
        FitConfig c;
        Reader r(j, "config");
        r.text("input", c.input);
        if (const Json* io = r.find("input_options")) {
            Reader sub(*io, r.field("input_options"));
            c.input_options.read(sub);
            sub.finish();
        }
        read_range(r, c.range);
        r.integer("bootstrap", c.bootstrap);
        c.convention = read_convention(r, c.convention);
        r.integer("seed", c.seed);
        r.integer("threads", c.threads);
        r.finish();
        return c;
    }
};

void check_bootstrap_reps(std::size_t reps, const std::string& flag) {
    if (reps != 0 && reps < kMinBootstrapReps) {
        throw UsageError(flag + " needs at least " + std::to_string(kMinBootstrapReps) + " replicates, got " +
                         std::to_string(reps));
    }
}

void execute(const FitConfig& c, Run& run, Context& ctx) {
    check_bootstrap_reps(c.bootstrap, "--bootstrap");
    const auto loaded = load_table("input", c.input, c.input_options, run);
    run.notes["input_format"] = loaded.format;
    auto fit = fit_table(loaded.table, c.range, c.convention, "fit", run, ctx);
    if (c.bootstrap > 0) {
        BootstrapOptions options;
        options.reps = c.bootstrap;
        options.seed = c.seed;
        options.threads = c.threads;
        const MeasurementTable filtered =
            c.range.enabled ? filter_expression_range(loaded.table, c.range.lo, c.range.hi) : loaded.table;
        const auto boot = bootstrap_se(filtered, fit, options);
        fit.se = boot.se;
        run.notes["bootstrap"] = Json{{"reps", c.bootstrap}, {"used", boot.used}, {"discarded", boot.discarded}};
    }
    std::ostringstream report;
    write_fit(report, fit);
    run.add_file("fit.txt", report.str());
    ctx.out << "fit: n = " << fit.moments.n << ", " << sizes_text(loaded.table.set_sizes()) << '\n';
}

// ---------------------------------------------------------------- calibrate

struct FitSource {
    std::string path;            // fit report, or
    std::optional<Theta> theta;  // inline parameters

    Json to_json() const {
        if (theta) {
            Json t;
            const auto v = theta->to_array();
            for (std::size_t k = 0; k < 7; ++k) t[std::string(kThetaNames[k])] = v[k];
            return Json{{"theta", t}};
        }
        return Json{{"path", path}};
    }

    void read(Reader& r) {
        r.text("path", path);
        if (const Json* t = r.find("theta")) {
            Reader tr(*t, r.field("theta"));
            auto v = Theta{}.to_array();
            for (std::size_t k = 0; k < 7; ++k) {
                const std::string name(kThetaNames[k]);
                const Json* x = tr.find(name);
                if (!x) throw ConfigError(tr.field(name), "missing");
                v[k] = Reader::as_number(*x, tr.field(name));
            }
            tr.finish();
            theta = Theta::from_array(v);
        }
        if (path.empty() == !theta) throw ConfigError(r.field("path"), "give exactly one of path or theta");
    }

    StructuralFit load(Alpha3Convention convention, Run& run) const {
        if (theta) {
            StructuralFit fit;
            fit.theta = *theta;
            fit.convention = convention;
            return fit;
        }
        const auto bytes = run.add_input("fit", path);
        std::istringstream in(bytes);
        try {
            return read_fit(in);
        } catch (const ParseError& e) {
            throw ParseError(e.line(), path + ": " + strip_line(e));
        }
    }
};

Theta parse_inline_theta(const std::string& token) {
    std::array<double, 7> v{};
    std::size_t k = 0, start = 0;
    while (k < 7) {
        const auto comma = token.find(',', start);
        const auto piece = token.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!csv::parse_double(piece, v[k])) {
            throw UsageError("--theta: component " + std::to_string(k + 1) + " is not a number: '" + piece + "'");
        }
        ++k;
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (k != 7 || token.find(',', start) != std::string::npos) {
        throw UsageError("--theta: expected 7 comma-separated values alpha2,alpha3,beta2,beta3,sigma1_sq,sigma2_sq,"
                         "sigma3_sq");
    }
    return Theta::from_array(v);
}

struct CalibrateConfig {
    std::string input;
    InputOptions input_options;
    FitSource fit;
    VarianceMode var_mode = VarianceMode::Leading;
    std::size_t bootstrap = 1000;
    Alpha3Convention convention = Alpha3Convention::Symmetric;
    std::uint64_t seed = 1;
    unsigned threads = 0;

    Json to_json() const {
        return Json{{"input", input},
                    {"input_options", input_options.to_json()},
                    {"fit", fit.to_json()},
                    {"var_mode", std::string(to_string(var_mode))},
                    {"bootstrap", bootstrap},
                    {"alpha3_convention", std::string(to_string(convention))},
                    {"seed", seed},
                    {"threads", threads}};
    }

    static CalibrateConfig from_json(const Json& j) {
        CalibrateConfig c;
        Reader r(j, "config");
        r.text("input", c.input);
        if (const Json* io = r.find("input_options")) {
            Reader sub(*io, r.field("input_options"));
            c.input_options.read(sub);
            sub.finish();
        }
        const Json* f = r.find("fit");
        if (!f) throw ConfigError("config.fit", "missing");
        Reader fr(*f, r.field("fit"));
        c.fit.read(fr);
        fr.finish();
        c.var_mode = read_var_mode(r, c.var_mode);
        r.integer("bootstrap", c.bootstrap);
        c.convention = read_convention(r, c.convention);
        r.integer("seed", c.seed);
        r.integer("threads", c.threads);
        r.finish();
        return c;
    }
};

BootstrapOptions bootstrap_options(std::size_t reps, std::uint64_t seed, unsigned threads) {
    BootstrapOptions o;
    o.reps = reps;
    o.seed = seed;
    o.threads = threads;
    return o;
}

void execute(const CalibrateConfig& c, Run& run, Context& ctx) {
    if (c.var_mode == VarianceMode::Bootstrap) {
        if (c.bootstrap == 0) throw UsageError("--var-mode bootstrap needs --bootstrap REPS > 0");
        check_bootstrap_reps(c.bootstrap, "--bootstrap");
    }
    const auto loaded = load_table("input", c.input, c.input_options, run);
    run.notes["input_format"] = loaded.format;
    run.notes["set_sizes"] = sizes_json(loaded.table.set_sizes());
    const auto fit = c.fit.load(c.convention, run);
    if (fit.has_warning(FitWarning::NegativeVariance)) {
        run.warn("the fit carries a negative variance estimate; genes whose path needs it cannot be calibrated", ctx);
    }
    const auto calibrated = calibrate(loaded.table, fit, CalibrationPolicy::Strict);
    std::vector<double> se(calibrated.size());
    for (std::size_t j = 0; j < se.size(); ++j) se[j] = calibrated[j].se;
    if (c.var_mode == VarianceMode::Bootstrap) {
        const auto v = estimate_variance(fit, loaded.table, VarianceMode::Bootstrap,
                                         bootstrap_options(c.bootstrap, c.seed, c.threads));
        for (std::size_t j = 0; j < se.size(); ++j) se[j] = std::sqrt(v.variance[j]);
        run.notes["bootstrap"] = Json{{"reps", c.bootstrap}, {"used", v.used}, {"discarded", v.discarded}};
    }

    std::ostringstream table;
    table << "gene_id,set,mu_hat,se,source\n";
    const auto& genes = loaded.table.genes();
    for (std::size_t j = 0; j < calibrated.size(); ++j) {
        csv::write_row(table, {genes[j].id, std::string(to_string(genes[j].set())), format_double(calibrated[j].mu_hat),
                               format_double(se[j]), std::string(to_string(calibrated[j].source))});
    }
    run.add_file("calibrated.csv", table.str());
    ctx.out << "calibrate: " << calibrated.size() << " genes, " << sizes_text(loaded.table.set_sizes()) << '\n';
}

// ---------------------------------------------------------------- de

std::vector<Measurement> arms_for(const std::string& arm) {
    if (arm == "calibrated") return {Measurement::Calibrated};
    if (arm == "rnaseq") return {Measurement::RnaSeqRaw};
    if (arm == "both") return {Measurement::Calibrated, Measurement::RnaSeqRaw};
    throw ConfigError("config.arm", "unknown value '" + arm + "' (expected calibrated, rnaseq or both)");
}

void check_fdr(double fdr, const std::string& field) {
    if (!(fdr > 0.0 && fdr < 1.0)) throw UsageError(field + " must lie in (0, 1), got " + format_double(fdr));
}

struct DeConfig {
    std::string input1, input2;
    InputOptions input_options;
    RangeFilter range;
    double fdr = 0.01;
    std::string arm = "both";
    VarianceMode var_mode = VarianceMode::Leading;
    std::size_t bootstrap = 1000;
    Alpha3Convention convention = Alpha3Convention::Symmetric;
    std::uint64_t seed = 1;
    unsigned threads = 0;

    Json to_json() const {
        return Json{{"input1", input1},
                    {"input2", input2},
                    {"input_options", input_options.to_json()},
                    {"range", range.token()},
                    {"fdr", fdr},
                    {"arm", arm},
                    {"var_mode", std::string(to_string(var_mode))},
                    {"bootstrap", bootstrap},
                    {"alpha3_convention", std::string(to_string(convention))},
                    {"seed", seed},
                    {"threads", threads}};
    }

    static DeConfig from_json(const Json& j) {
        DeConfig c;
        Reader r(j, "config");
        r.text("input1", c.input1);
        r.text("input2", c.input2);
        if (const Json* io = r.find("input_options")) {
            Reader sub(*io, r.field("input_options"));
            c.input_options.read(sub);
            sub.finish();
        }
        read_range(r, c.range);
        r.number("fdr", c.fdr);
        if (!(c.fdr > 0.0 && c.fdr < 1.0)) throw ConfigError("config.fdr", "must lie in (0, 1)");
        r.text("arm", c.arm);
        arms_for(c.arm);
        c.var_mode = read_var_mode(r, c.var_mode);
        r.integer("bootstrap", c.bootstrap);
        c.convention = read_convention(r, c.convention);
        r.integer("seed", c.seed);
        r.integer("threads", c.threads);
        r.finish();
        return c;
    }
};

void execute(const DeConfig& c, Run& run, Context& ctx) {
    check_fdr(c.fdr, "--fdr");
    if (c.var_mode == VarianceMode::Bootstrap) check_bootstrap_reps(c.bootstrap, "--bootstrap");
    const auto t1 = load_table("input1", c.input1, c.input_options, run);
    const auto t2 = load_table("input2", c.input2, c.input_options, run);
    run.notes["input_format"] = Json{t1.format, t2.format};
    const auto fit1 = fit_table(t1.table, c.range, c.convention, "condition1", run, ctx);
    const auto fit2 = fit_table(t2.table, c.range, c.convention, "condition2", run, ctx);

    DEOptions options;
    options.fdr = c.fdr;
    options.arms = arms_for(c.arm);
    options.variance_mode = c.var_mode;
    options.bootstrap = bootstrap_options(c.bootstrap, c.seed, c.threads);
    options.convention = c.convention;
    const auto report = de_pipeline(t1.table, fit1, t2.table, fit2, options);
    for (const auto& w : report.warnings) run.warn(w, ctx);

    run.notes["compared"] = report.compared;
    run.notes["only_in_condition1"] = report.only_in_first;
    run.notes["only_in_condition2"] = report.only_in_second;
    if (report.arm(Measurement::RnaSeqRaw)) {
        run.notes["rnaseq_arm_variance"] =
            "sigma3_sq / beta3^2 from each condition's fit, applied to (z - alpha3) / beta3";
    }
    for (const auto& arm : report.arms) {
        std::ostringstream table;
        write_de_table(table, arm);
        run.add_file("de_" + std::string(to_string(arm.measurement)) + ".csv", table.str());
        run.notes["rejected"][std::string(to_string(arm.measurement))] = arm.rejected.total();
    }
    std::ostringstream summary;
    write_de_summary(summary, report);
    run.add_file("de_summary.csv", summary.str());
    ctx.out << summary.str();
}

// ---------------------------------------------------------------- diagnose

struct DiagnoseConfig {
    std::string input;
    InputOptions input_options;
    std::optional<FitSource> fit; // absent: fit the input itself
    RangeFilter range;
    Alpha3Convention convention = Alpha3Convention::Symmetric;
    std::uint64_t seed = 1;
    unsigned threads = 0;

    Json to_json() const {
        return Json{{"input", input},
                    {"input_options", input_options.to_json()},
                    {"fit", fit ? fit->to_json() : Json(nullptr)},
                    {"range", range.token()},
                    {"alpha3_convention", std::string(to_string(convention))},
                    {"seed", seed},
                    {"threads", threads}};
    }

    static DiagnoseConfig from_json(const Json& j) {
        DiagnoseConfig c;
        Reader r(j, "config");
        r.text("input", c.input);
        if (const Json* io = r.find("input_options")) {
            Reader sub(*io, r.field("input_options"));
            c.input_options.read(sub);
            sub.finish();
        }
        if (const Json* f = r.find("fit"); f && !f->is_null()) {
            Reader fr(*f, r.field("fit"));
            c.fit.emplace();
            c.fit->read(fr);
            fr.finish();
        }
        read_range(r, c.range);
        c.convention = read_convention(r, c.convention);
        r.integer("seed", c.seed);
        r.integer("threads", c.threads);
        r.finish();
        return c;
    }
};

void execute(const DiagnoseConfig& c, Run& run, Context& ctx) {
    const auto loaded = load_table("input", c.input, c.input_options, run);
    run.notes["input_format"] = loaded.format;
    if (loaded.table.set_sizes().n == 0) throw InsufficientDataError("diagnose: the input has no genes in A");
    const StructuralFit fit =
        c.fit ? c.fit->load(c.convention, run) : fit_table(loaded.table, c.range, c.convention, "fit", run, ctx);
    const auto res = residuals(loaded.table, fit, calibrate(loaded.table, fit, CalibrationPolicy::Strict));

    std::ostringstream table;
    table << "gene_id,e1,e2,e3\n";
    for (const auto& r : res) {
        csv::write_row(table, {r.gene_id, format_double(r.e1), format_double(r.e2), format_double(r.e3)});
    }
    run.add_file("residuals.csv", table.str());

    // e_i / sqrt(1 - w_i) has variance sigma_i^2, so a QQ line through these
    // points has slope sigma_i.
    std::array<double, 3> scale{1.0, 1.0, 1.0};
    try {
        const auto w = platform_weights(fit.theta);
        for (std::size_t i = 0; i < 3; ++i) scale[i] = 1.0 / std::sqrt(1.0 - w[i]);
        run.notes["qq_standardization"] = "e_i / sqrt(1 - w_i)";
    } catch (const DomainError& e) {
        run.warn(std::string("QQ residuals are not standardized: ") + e.what(), ctx);
        run.notes["qq_standardization"] = "none";
    }
    std::ostringstream qq;
    qq << "component,p,theoretical,sample\n";
    const std::size_t n = res.size();
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> values(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double e = i == 0 ? res[k].e1 : i == 1 ? res[k].e2 : res[k].e3;
            values[k] = e * scale[i];
        }
        std::sort(values.begin(), values.end());
        const std::string name = "e" + std::to_string(i + 1);
        for (std::size_t k = 0; k < n; ++k) {
            const double p = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
            csv::write_row(qq, {name, format_double(p), format_double(stats::normal_quantile(p)),
                                format_double(values[k])});
        }
    }
    run.add_file("qq.csv", qq.str());
    run.notes["residual_genes"] = n;
    ctx.out << "diagnose: " << n << " A genes\n";
}

// ---------------------------------------------------------------- simulate

std::optional<std::string> parse_mode(std::string_view t) {
    if (t == "dataset" || t == "accuracy" || t == "de") return std::string(t);
    return std::nullopt;
}

struct SimulateConfig {
    std::string mode = "dataset";
    int setting = 1;
    Theta theta = simulation_setting(1);
    MuLaw mu_law;
    Alpha3Convention convention = Alpha3Convention::Symmetric;
    // dataset
    std::size_t n = 300;
    std::size_t n_b_only = 0;
    std::size_t n_c_only = 0;
    std::size_t rep = 0;
    // accuracy
    std::vector<std::size_t> n_train_grid = {20, 50, 100, 300};
    std::size_t n_test = 1000;
    std::size_t replications = 200;
    double max_skip_fraction = 0.10;
    // de
    DESimConfig de;
    std::uint64_t seed = 1;
    unsigned threads = 0;

    Json to_json() const {
        Json t;
        const auto v = theta.to_array();
        for (std::size_t k = 0; k < 7; ++k) t[std::string(kThetaNames[k])] = v[k];
        Json law;
        if (mu_law.kind == MuLaw::Kind::Normal) {
            law = Json{{"kind", "normal"}, {"mean", mu_law.mean}, {"variance", mu_law.variance}};
        } else {
            law = Json{{"kind", "fixed"}, {"values", mu_law.values}};
        }
        return Json{{"mode", mode},
                    {"setting", setting},
                    {"theta", t},
                    {"mu_law", law},
                    {"alpha3_convention", std::string(to_string(convention))},
                    {"dataset", Json{{"n", n}, {"n_b_only", n_b_only}, {"n_c_only", n_c_only}, {"rep", rep}}},
                    {"accuracy", Json{{"n_train_grid", n_train_grid},
                                      {"n_test", n_test},
                                      {"replications", replications},
                                      {"max_skip_fraction", max_skip_fraction}}},
                    {"de", Json{{"genes_total", de.genes_total},
                                {"genes_de", de.genes_de},
                                {"set_sizes", std::vector<std::size_t>{de.set_sizes.n, de.set_sizes.m, de.set_sizes.l}},
                                {"effect_lo", de.effect_lo},
                                {"effect_hi", de.effect_hi},
                                {"fpr_grid", de.fpr_grid},
                                {"fdr_grid", de.fdr_grid}}},
                    {"seed", seed},
                    {"threads", threads}};
    }

    // Fields absent from `j` keep their defaults; `setting` selects the preset
    // that `theta` entries then override.
    static SimulateConfig from_json(const Json& j) {
        SimulateConfig c;
        Reader r(j, "config");
        r.text("mode", c.mode);
        if (!parse_mode(c.mode)) {
            throw ConfigError("config.mode", "unknown value '" + c.mode + "' (expected dataset, accuracy or de)");
        }
        if (const Json* s = r.find("setting")) {
            if (!s->is_number_integer()) throw ConfigError("config.setting", "expected 1, 2 or 3");
            c.setting = s->get<int>();
        }
        try {
            c.theta = simulation_setting(c.setting);
        } catch (const ConfigError& e) {
            throw ConfigError("config.setting", "must be 1, 2 or 3");
        }
        if (const Json* t = r.find("theta")) {
            Reader tr(*t, "config.theta");
            auto v = c.theta.to_array();
            for (std::size_t k = 0; k < 7; ++k) tr.number(std::string(kThetaNames[k]), v[k]);
            tr.finish();
            c.theta = Theta::from_array(v);
        }
        if (const Json* m = r.find("mu_law")) {
            Reader mr(*m, "config.mu_law");
            std::string kind = "normal";
            mr.text("kind", kind);
            if (kind == "normal") {
                mr.number("mean", c.mu_law.mean);
                mr.number("variance", c.mu_law.variance);
            } else if (kind == "fixed") {
                c.mu_law.kind = MuLaw::Kind::Fixed;
                mr.number_list("values", c.mu_law.values);
            } else {
                throw ConfigError("config.mu_law.kind", "unknown value '" + kind + "' (expected normal or fixed)");
            }
            mr.finish();
        }
        c.convention = read_convention(r, c.convention);
        if (const Json* d = r.find("dataset")) {
            Reader dr(*d, "config.dataset");
            dr.integer("n", c.n);
            dr.integer("n_b_only", c.n_b_only);
            dr.integer("n_c_only", c.n_c_only);
            dr.integer("rep", c.rep);
            dr.finish();
        }
        if (const Json* a = r.find("accuracy")) {
            Reader ar(*a, "config.accuracy");
            ar.integer_list("n_train_grid", c.n_train_grid);
            ar.integer("n_test", c.n_test);
            ar.integer("replications", c.replications);
            ar.number("max_skip_fraction", c.max_skip_fraction);
            ar.finish();
        }
        if (const Json* d = r.find("de")) {
            Reader dr(*d, "config.de");
            dr.integer("genes_total", c.de.genes_total);
            dr.integer("genes_de", c.de.genes_de);
            std::vector<std::size_t> sizes{c.de.set_sizes.n, c.de.set_sizes.m, c.de.set_sizes.l};
            dr.integer_list("set_sizes", sizes);
            if (sizes.size() != 3) throw ConfigError("config.de.set_sizes", "expected [n, m, l]");
            c.de.set_sizes = SetSizes{sizes[0], sizes[1], sizes[2]};
            dr.number("effect_lo", c.de.effect_lo);
            dr.number("effect_hi", c.de.effect_hi);
            dr.number_list("fpr_grid", c.de.fpr_grid);
            dr.number_list("fdr_grid", c.de.fdr_grid);
            dr.finish();
        }
        r.integer("seed", c.seed);
        r.integer("threads", c.threads);
        r.finish();
        return c;
    }

    SimConfig sim() const {
        SimConfig s;
        s.theta = theta;
        s.mu_law = mu_law;
        s.convention = convention;
        s.seed = seed;
        s.threads = threads;
        s.max_skip_fraction = max_skip_fraction;
        if (mode == "dataset") {
            s.n_train = n;
            s.n_b_only = n_b_only;
            s.n_c_only = n_c_only;
        } else {
            s.n_train_grid = n_train_grid;
            s.n_train = n_train_grid.empty() ? 0 : *std::max_element(n_train_grid.begin(), n_train_grid.end());
            s.n_test = n_test;
            s.replications = replications;
        }
        return s;
    }

    DESimConfig de_config() const {
        DESimConfig d = de;
        d.theta = theta;
        d.mu_law = mu_law;
        d.seed = seed;
        d.convention = convention;
        return d;
    }
};

// The RNA-Seq generator is the linear measurement model itself; no read-level
// simulation is done. Recorded in every simulate manifest.
constexpr const char* kGeneratorNote =
    "RNA-Seq values are drawn from Z = alpha3 + beta3 mu + e3 with the configured sigma3_sq; no read-level "
    "simulation";

void execute(const SimulateConfig& c, Run& run, Context& ctx) {
    run.notes["rnaseq_generator"] = kGeneratorNote;
    if (c.mode == "dataset") {
        const auto cfg = c.sim();
        if (cfg.n_train + cfg.n_b_only + cfg.n_c_only == 0) throw ConfigError("config.dataset.n", "no genes requested");
        const auto data = generate_dataset(cfg, c.rep);
        std::ostringstream table, truth;
        write_canonical_table(table, data.table);
        truth << "gene_id,mu\n";
        for (std::size_t j = 0; j < data.true_mu.size(); ++j) {
            csv::write_row(truth, {data.table.genes()[j].id, format_double(data.true_mu[j])});
        }
        run.add_file("dataset.csv", table.str());
        run.add_file("truth.csv", truth.str());
        run.notes["set_sizes"] = sizes_json(data.table.set_sizes());
        ctx.out << "simulate: " << sizes_text(data.table.set_sizes()) << '\n';
        return;
    }
    if (c.mode == "accuracy") {
        const auto report = run_accuracy_experiment(c.sim());
        std::ostringstream amse, curves, curvature;
        write_amse_csv(amse, report);
        write_variance_curves_csv(curves, report);
        curvature << "estimator,n,curvature,se\n";
        for (const auto& p : report.curvature) {
            csv::write_row(curvature, {p.estimator, std::to_string(p.n), format_double(p.curvature), format_double(p.se)});
        }
        run.add_file("amse_curves.csv", amse.str());
        run.add_file("variance_curves.csv", curves.str());
        run.add_file("curvature.csv", curvature.str());
        Json skips = Json::array();
        for (const auto& s : report.skips) {
            skips.push_back(Json{{"n", s.n}, {"skipped", s.skipped}, {"negative_variance", s.negative_variance}});
            if (s.negative_variance > 0) {
                run.warn("n = " + std::to_string(s.n) + ": " + std::to_string(s.negative_variance) +
                             " replication(s) had a negative variance estimate and were scored as computed",
                         ctx);
            }
        }
        run.notes["skips"] = skips;
        ctx.out << amse.str();
        return;
    }
    const auto cfg = c.de_config();
    const auto report = run_de_experiment(cfg);
    std::ostringstream roc, tpr, bh;
    write_roc_csv(roc, report.roc);
    tpr << "arm,fpr,tpr\n";
    for (const auto& p : report.tpr) csv::write_row(tpr, {p.arm, format_double(p.level), format_double(p.value)});
    bh << "arm,fdr,rejected,false_discoveries\n";
    for (const auto& b : report.bh) {
        csv::write_row(bh, {b.arm, format_double(b.fdr), std::to_string(b.rejected), std::to_string(b.false_discoveries)});
    }
    run.add_file("roc.csv", roc.str());
    run.add_file("tpr.csv", tpr.str());
    run.add_file("bh.csv", bh.str());
    run.notes["tested"] = report.tested;
    run.notes["positives"] = report.positives;
    run.notes["sigma3_sq_assumption"] = "condition data use the configured sigma3_sq (" +
                                        format_double(cfg.theta.sigma3_sq) + ") for the RNA-Seq platform";
    run.notes["rnaseq_arm_variance"] = "sigma3_sq / beta3^2 from each condition's fit";
    ctx.out << tpr.str();
}

// ---------------------------------------------------------------- dispatch

using AnyConfig = std::variant<FitConfig, CalibrateConfig, DeConfig, DiagnoseConfig, SimulateConfig>;

const char* name_of(const AnyConfig& c) {
    static constexpr const char* names[] = {"fit", "calibrate", "de", "diagnose", "simulate"};
    return names[c.index()];
}

AnyConfig config_from_json(const std::string& subcommand, const Json& j) {
    if (subcommand == "fit") return FitConfig::from_json(j);
    if (subcommand == "calibrate") return CalibrateConfig::from_json(j);
    if (subcommand == "de") return DeConfig::from_json(j);
    if (subcommand == "diagnose") return DiagnoseConfig::from_json(j);
    if (subcommand == "simulate") return SimulateConfig::from_json(j);
    throw ConfigError("subcommand", "unknown subcommand '" + subcommand + "'");
}

Run execute_any(const AnyConfig& config, Context& ctx) {
    Run run;
    run.subcommand = name_of(config);
    std::visit(
        [&](const auto& c) {
            run.config = c.to_json();
            execute(c, run, ctx);
        },
        config);
    return run;
}

void set_threads(AnyConfig& config, unsigned threads) {
    std::visit([&](auto& c) { c.threads = threads; }, config);
}

void set_seed(AnyConfig& config, std::uint64_t seed) {
    std::visit([&](auto& c) { c.seed = seed; }, config);
}

Json load_json_file(const std::string& path, const std::string& what) {
    const auto bytes = read_file(path);
    try {
        return Json::parse(bytes);
    } catch (const Json::parse_error& e) {
        throw ConfigError(what, std::string("not valid JSON: ") + e.what());
    }
}

// Re-executes a manifest's resolved config and checks inputs and outputs
// against the recorded digests before anything is written.
Run rerun(const std::string& manifest_path, std::optional<unsigned> threads, Context& ctx) {
    const Json manifest = load_json_file(manifest_path, "manifest");
    if (!manifest.is_object() || !manifest.contains("subcommand") || !manifest["subcommand"].is_string() ||
        !manifest.contains("config")) {
        throw ConfigError("manifest", "missing subcommand or config");
    }
    auto config = config_from_json(manifest["subcommand"].get<std::string>(), manifest["config"]);
    if (threads) set_threads(config, *threads);
    Run run = execute_any(config, ctx);

    std::map<std::string, std::string> recorded_inputs;
    for (const auto& in : manifest.value("inputs", Json::array())) {
        recorded_inputs[in.value("role", "") + ":" + in.value("path", "")] = in.value("sha256", "");
    }
    for (const auto& in : run.inputs) {
        const auto key = in["role"].get<std::string>() + ":" + in["path"].get<std::string>();
        const auto it = recorded_inputs.find(key);
        if (it != recorded_inputs.end() && it->second != in["sha256"].get<std::string>()) {
            throw MismatchError("input '" + in["path"].get<std::string>() + "' changed since the manifest was written");
        }
    }
    const Json outputs = output_digests(run);
    if (manifest.contains("outputs") && manifest["outputs"] != outputs) {
        throw MismatchError("re-run outputs differ from the digests recorded in " + manifest_path);
    }
    return run;
}

int exit_code_for(const std::exception_ptr& failure, std::ostream& err) {
    try {
        std::rethrow_exception(failure);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kParse;
    } catch (const NestingError& e) {
        err << "nesting error: " << e.what() << '\n';
        return kNesting;
    } catch (const DegenerateCovarianceError& e) {
        err << "degenerate fit: " << e.what() << '\n';
        return kDegenerate;
    } catch (const CalibrationBlockedError& e) {
        err << "calibration blocked: " << e.what() << '\n';
        return kBlocked;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const InstabilityError& e) {
        err << "unstable: " << e.what() << '\n';
        return kInstability;
    } catch (const DomainError& e) {
        err << "domain error: " << e.what() << '\n';
        return kDomain;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const InsufficientDataError& e) {
        err << "insufficient data: " << e.what() << '\n';
        return kInsufficient;
    } catch (const MismatchError& e) {
        err << "mismatch: " << e.what() << '\n';
        return kMismatch;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

struct Flags {
    std::string input, input2, fit_path, theta, config_path, manifest;
    std::string scale = "log2", averaging = "log-then-mean", delimiter = "auto";
    std::string range = RangeFilter{}.token();
    std::string convention = "symmetric", var_mode = "leading", arm = "both", mode = "dataset";
    std::size_t bootstrap = 0, calibrate_bootstrap = 1000;
    double fdr = 0.01;
    int setting = 1;
    std::size_t n = 300, n_b_only = 0, n_c_only = 0, rep = 0, n_test = 1000, reps = 200;
    std::size_t genes = 5000, genes_de = 500;
    std::vector<std::size_t> grid = {20, 50, 100, 300};
    std::vector<std::size_t> sets = {500, 3000, 5000};
};

void add_input_options(CLI::App* sub, Flags& f) {
    sub->add_option("--scale", f.scale, "Scale of raw values")->check(CLI::IsMember({"linear", "log2"}));
    sub->add_option("--averaging", f.averaging, "Replicate averaging order for linear input")
        ->check(CLI::IsMember({"log-then-mean", "mean-then-log"}));
    sub->add_option("--delimiter", f.delimiter, "Raw-table delimiter")->check(CLI::IsMember({"auto", "comma", "tab"}));
}

void add_convention(CLI::App* sub, Flags& f) {
    sub->add_option("--alpha3-convention", f.convention, "Slope used in the RNA-Seq intercept estimate")
        ->check(CLI::IsMember({"symmetric", "printed"}));
}

void add_range(CLI::App* sub, Flags& f) {
    sub->add_option("--range", f.range, "qRT-PCR range LO:HI kept in A for fitting, or none");
}

InputOptions input_options(const Flags& f) {
    InputOptions o;
    o.scale = *parse_scale(f.scale);
    o.averaging = *parse_averaging(f.averaging);
    o.delimiter = f.delimiter;
    return o;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Comparative calibration of qRT-PCR, microarray and RNA-Seq expression measurements", "mecal"};
    app.option_defaults()->always_capture_default();
    app.set_version_flag("--version", MECAL_VERSION);
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    unsigned threads = 0;
    std::string out_dir = ".";
    auto* seed_opt = app.add_option("--seed", seed, "Random seed");
    auto* threads_opt = app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
    app.add_option("--out", out_dir, "Output directory");

    Flags f;
    auto* fit = app.add_subcommand("fit", "Estimate the structural parameters from the genes in A");
    fit->add_option("input", f.input, "Measurement table (raw long format or canonical)")->required();
    add_input_options(fit, f);
    add_range(fit, f);
    fit->add_option("--bootstrap", f.bootstrap, "Bootstrap replicates for standard errors (0 = off)");
    add_convention(fit, f);

    auto* cal = app.add_subcommand("calibrate", "Calibrated expression estimates for every gene");
    cal->add_option("input", f.input, "Measurement table")->required();
    auto* fit_opt = cal->add_option("--fit", f.fit_path, "Fit report written by `mecal fit`");
    auto* theta_opt = cal->add_option("--theta", f.theta, "Inline alpha2,alpha3,beta2,beta3,sigma1_sq,sigma2_sq,sigma3_sq");
    fit_opt->excludes(theta_opt);
    add_input_options(cal, f);
    cal->add_option("--var-mode", f.var_mode, "Variance of the calibrated estimates")
        ->check(CLI::IsMember({"leading", "bootstrap"}));
    cal->add_option("--bootstrap", f.calibrate_bootstrap, "Bootstrap replicates for --var-mode bootstrap");
    add_convention(cal, f);

    auto* de = app.add_subcommand("de", "Two-condition differential expression");
    de->add_option("input1", f.input, "Condition 1 measurement table")->required();
    de->add_option("input2", f.input2, "Condition 2 measurement table")->required();
    add_input_options(de, f);
    add_range(de, f);
    de->add_option("--fdr", f.fdr, "Benjamini-Hochberg FDR level, in (0, 1)");
    de->add_option("--arm", f.arm, "Measurements to test")->check(CLI::IsMember({"calibrated", "rnaseq", "both"}));
    de->add_option("--var-mode", f.var_mode, "Variance of the calibrated estimates")
        ->check(CLI::IsMember({"leading", "bootstrap"}));
    de->add_option("--bootstrap", f.calibrate_bootstrap, "Bootstrap replicates for --var-mode bootstrap");
    add_convention(de, f);

    auto* diag = app.add_subcommand("diagnose", "Residuals of the A genes and normal QQ pairs");
    diag->add_option("input", f.input, "Measurement table")->required();
    diag->add_option("--fit", f.fit_path, "Fit report (default: fit the input)");
    add_input_options(diag, f);
    add_range(diag, f);
    add_convention(diag, f);

    auto* sim = app.add_subcommand("simulate", "Simulated datasets and Monte-Carlo experiments");
    auto* config_opt = sim->add_option("--config", f.config_path, "JSON config; flags given explicitly override it");
    auto* setting_opt = sim->add_option("--setting", f.setting, "Structural-parameter preset")->check(CLI::Range(1, 3));
    auto* mode_opt = sim->add_option("--mode", f.mode, "What to simulate")->check(CLI::IsMember({"dataset", "accuracy", "de"}));
    auto* n_opt = sim->add_option("--n", f.n, "dataset: genes in A");
    auto* nb_opt = sim->add_option("--n-b-only", f.n_b_only, "dataset: extra B-A genes");
    auto* nc_opt = sim->add_option("--n-c-only", f.n_c_only, "dataset: extra C-B genes");
    auto* rep_opt = sim->add_option("--rep", f.rep, "dataset: replication index of the measurement errors");
    auto* grid_opt = sim->add_option("--grid", f.grid, "accuracy: training sizes")->delimiter(',');
    auto* ntest_opt = sim->add_option("--n-test", f.n_test, "accuracy: test genes");
    auto* reps_opt = sim->add_option("--reps", f.reps, "accuracy: replications");
    auto* genes_opt = sim->add_option("--genes", f.genes, "de: total genes");
    auto* genes_de_opt = sim->add_option("--genes-de", f.genes_de, "de: differentially expressed genes");
    auto* sets_opt = sim->add_option("--sets", f.sets, "de: set sizes n,m,l")->delimiter(',')->expected(3);
    add_convention(sim, f);
    auto* sim_conv_opt = sim->get_option("--alpha3-convention");

    auto* re = app.add_subcommand("rerun", "Re-run a command from its manifest and check the outputs match");
    re->add_option("manifest", f.manifest, "manifest.json of an earlier run")->required();

    for (auto* sub : {fit, cal, de, diag, sim, re}) sub->fallthrough();

    std::vector<std::string> argv_tail(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::vector<std::string> reversed(argv_tail.rbegin(), argv_tail.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    const auto started = std::chrono::steady_clock::now();
    Context ctx{out, err};
    try {
        Run result;
        if (re->parsed()) {
            result = rerun(absolute_path(f.manifest),
                           threads_opt->count() ? std::optional<unsigned>(threads) : std::nullopt, ctx);
        } else {
            std::optional<AnyConfig> config;
            if (fit->parsed()) {
                FitConfig c;
                c.input = absolute_path(f.input);
                c.input_options = input_options(f);
                c.range = RangeFilter::parse(f.range, "--range");
                c.bootstrap = f.bootstrap;
                c.convention = *parse_alpha3_convention(f.convention);
                config = c;
            } else if (cal->parsed()) {
                CalibrateConfig c;
                c.input = absolute_path(f.input);
                c.input_options = input_options(f);
                if (fit_opt->count()) {
                    c.fit.path = absolute_path(f.fit_path);
                } else if (theta_opt->count()) {
                    c.fit.theta = parse_inline_theta(f.theta);
                } else {
                    throw UsageError("calibrate needs --fit PATH or --theta VALUES");
                }
                c.var_mode = *parse_variance_mode(f.var_mode);
                c.bootstrap = f.calibrate_bootstrap;
                c.convention = *parse_alpha3_convention(f.convention);
                config = c;
            } else if (de->parsed()) {
                DeConfig c;
                c.input1 = absolute_path(f.input);
                c.input2 = absolute_path(f.input2);
                c.input_options = input_options(f);
                c.range = RangeFilter::parse(f.range, "--range");
                check_fdr(f.fdr, "--fdr");
                c.fdr = f.fdr;
                c.arm = f.arm;
                c.var_mode = *parse_variance_mode(f.var_mode);
                c.bootstrap = f.calibrate_bootstrap;
                c.convention = *parse_alpha3_convention(f.convention);
                config = c;
            } else if (diag->parsed()) {
                DiagnoseConfig c;
                c.input = absolute_path(f.input);
                c.input_options = input_options(f);
                if (!f.fit_path.empty()) c.fit = FitSource{absolute_path(f.fit_path), std::nullopt};
                c.range = RangeFilter::parse(f.range, "--range");
                c.convention = *parse_alpha3_convention(f.convention);
                config = c;
            } else if (sim->parsed()) {
                Json j = Json::object();
                if (config_opt->count()) {
                    const auto path = absolute_path(f.config_path);
                    j = load_json_file(path, "--config");
                    if (!j.is_object()) throw ConfigError("config", "must be a JSON object");
                }
                // Explicit flags override the file.
                if (setting_opt->count()) j["setting"] = f.setting;
                if (mode_opt->count()) j["mode"] = f.mode;
                if (sim_conv_opt->count()) j["alpha3_convention"] = f.convention;
                if (n_opt->count()) j["dataset"]["n"] = f.n;
                if (nb_opt->count()) j["dataset"]["n_b_only"] = f.n_b_only;
                if (nc_opt->count()) j["dataset"]["n_c_only"] = f.n_c_only;
                if (rep_opt->count()) j["dataset"]["rep"] = f.rep;
                if (grid_opt->count()) j["accuracy"]["n_train_grid"] = f.grid;
                if (ntest_opt->count()) j["accuracy"]["n_test"] = f.n_test;
                if (reps_opt->count()) j["accuracy"]["replications"] = f.reps;
                if (genes_opt->count()) j["de"]["genes_total"] = f.genes;
                if (genes_de_opt->count()) j["de"]["genes_de"] = f.genes_de;
                if (sets_opt->count()) j["de"]["set_sizes"] = f.sets;
                if (seed_opt->count() || !j.contains("seed")) j["seed"] = seed;
                if (threads_opt->count() || !j.contains("threads")) j["threads"] = threads;
                config = SimulateConfig::from_json(j);
            }
            if (!sim->parsed()) {
                set_seed(*config, seed);
                set_threads(*config, threads);
            }
            result = execute_any(*config, ctx);
            if (sim->parsed() && config_opt->count()) {
                result.add_input("config", absolute_path(f.config_path));
            }
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        commit(result, out_dir, build_manifest(result, args, elapsed).dump(2) + "\n");
    } catch (...) {
        return exit_code_for(std::current_exception(), err);
    }
    return kOk;
}

} // namespace mecal::cli
