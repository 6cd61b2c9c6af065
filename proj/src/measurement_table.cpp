#include "mecal/measurement_table.hpp"

#include "mecal/csv.hpp"
#include "mecal/error.hpp"

#include <charconv>
#include <istream>
#include <ostream>

namespace mecal {

std::string_view to_string(Platform p) {
    switch (p) {
    case Platform::Pcr: return "PCR";
    case Platform::Microarray: return "MICROARRAY";
    case Platform::RnaSeq: return "RNASEQ";
    }
    return "?";
}

std::optional<Platform> parse_platform(std::string_view token) {
    if (token == "PCR") return Platform::Pcr;
    if (token == "MICROARRAY") return Platform::Microarray;
    if (token == "RNASEQ") return Platform::RnaSeq;
    return std::nullopt;
}

std::string_view to_string(GeneSet s) {
    switch (s) {
    case GeneSet::A: return "A";
    case GeneSet::BminusA: return "B-A";
    case GeneSet::CminusB: return "C-B";
    }
    return "?";
}

std::optional<GeneSet> parse_gene_set(std::string_view token) {
    if (token == "A") return GeneSet::A;
    if (token == "B-A") return GeneSet::BminusA;
    if (token == "C-B") return GeneSet::CminusB;
    return std::nullopt;
}

GeneSet Gene::set() const {
    if (x) return GeneSet::A;
    if (y) return GeneSet::BminusA;
    return GeneSet::CminusB;
}

namespace {

bool well_nested(const Gene& g) {
    if (!g.z) return false;
    if (g.x && !g.y) return false;
    return true;
}

} // namespace

MeasurementTable::MeasurementTable(std::vector<Gene> genes) : genes_(std::move(genes)) {
    std::string offenders;
    std::size_t bad = 0;
    index_.reserve(genes_.size());
    for (std::size_t i = 0; i < genes_.size(); ++i) {
        const auto& g = genes_[i];
        if (!index_.emplace(g.id, i).second) {
            throw DomainError("gene '" + g.id + "' appears more than once");
        }
        if (!well_nested(g)) {
            if (bad < 20) offenders += (bad ? ", " : "") + g.id;
            ++bad;
            continue;
        }
        ++sizes_.l;
        if (g.y) ++sizes_.m;
        if (g.x) ++sizes_.n;
    }
    if (bad) {
        throw NestingError(std::to_string(bad) + " gene(s) violate A ⊂ B ⊂ C nesting: " + offenders +
                           (bad > 20 ? ", ..." : ""));
    }
}

std::vector<std::size_t> MeasurementTable::a_indices() const {
    std::vector<std::size_t> out;
    out.reserve(sizes_.n);
    for (std::size_t i = 0; i < genes_.size(); ++i) {
        if (genes_[i].x) out.push_back(i);
    }
    return out;
}

MeasurementTable MeasurementTable::subset(const std::vector<std::size_t>& indices) const {
    std::vector<Gene> picked;
    picked.reserve(indices.size());
    for (auto i : indices) picked.push_back(genes_.at(i));
    return MeasurementTable(std::move(picked));
}

std::optional<std::size_t> MeasurementTable::find(std::string_view id) const {
    const auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void write_canonical_table(std::ostream& out, const MeasurementTable& table) {
    out << "gene_id,set,x,y,z\n";
    auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& g : table.genes()) {
        csv::write_row(out, {g.id, std::string(to_string(g.set())), cell(g.x), cell(g.y), cell(g.z)});
    }
}

MeasurementTable read_canonical_table(std::istream& in) {
    std::string line;
    if (!csv::read_line(in, line)) {
        throw ParseError(1, "empty input, expected header gene_id,set,x,y,z");
    }
    if (line != "gene_id,set,x,y,z") {
        throw ParseError(1, "expected header gene_id,set,x,y,z, got '" + line + "'");
    }
    std::vector<Gene> genes;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = csv::split_row(line, ',', line_no);
        if (fields.size() != 5) {
            throw ParseError(line_no, "expected 5 fields, got " + std::to_string(fields.size()));
        }
        Gene g;
        g.id = fields[0];
        if (g.id.empty()) throw ParseError(line_no, "empty gene_id");
        const auto declared = parse_gene_set(fields[1]);
        if (!declared) {
            throw EnumValueError(line_no, "unknown set '" + fields[1] + "' (expected A, B-A or C-B)");
        }
        auto value = [&](const std::string& token, const char* column) -> std::optional<double> {
            if (token.empty()) return std::nullopt;
            double v;
            if (!csv::parse_double(token, v)) {
                throw ParseError(line_no, std::string("column ") + column + ": not a finite number: '" + token + "'");
            }
            return v;
        };
        g.x = value(fields[2], "x");
        g.y = value(fields[3], "y");
        g.z = value(fields[4], "z");
        if (well_nested(g) && g.set() != *declared) {
            throw ParseError(line_no, "set column '" + fields[1] + "' disagrees with the populated cells");
        }
        genes.push_back(std::move(g));
    }
    return MeasurementTable(std::move(genes));
}

} // namespace mecal
