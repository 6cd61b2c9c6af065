#include "mecal/ingest.hpp"

#include "mecal/csv.hpp"
#include "mecal/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <set>
#include <tuple>

namespace mecal {

namespace {

bool parse_index(std::string_view token, std::size_t& out) {
    if (token.empty()) return false;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
    return ec == std::errc{} && ptr == token.data() + token.size();
}

} // namespace

std::vector<RawRecord> parse_table(std::istream& in, TableFormat format) {
    std::string line;
    if (!csv::read_line(in, line)) {
        throw ParseError(1, "empty input, expected header gene_id,platform,replicate,value");
    }
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3); // UTF-8 BOM
    const char delim = format.delimiter.value_or(line.find('\t') != std::string::npos ? '\t' : ',');
    const auto header = csv::split_row(line, delim, 1);
    if (header != std::vector<std::string>{"gene_id", "platform", "replicate", "value"}) {
        throw ParseError(1, "expected header gene_id,platform,replicate,value, got '" + line + "'");
    }

    std::vector<RawRecord> records;
    std::set<std::tuple<std::string, Platform, std::size_t>> seen;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = csv::split_row(line, delim, line_no);
        if (fields.size() != 4) {
            throw ParseError(line_no, "expected 4 fields, got " + std::to_string(fields.size()));
        }
        RawRecord rec;
        rec.line = line_no;
        rec.gene_id = fields[0];
        if (rec.gene_id.empty()) throw ParseError(line_no, "empty gene_id");
        const auto platform = parse_platform(fields[1]);
        if (!platform) {
            throw EnumValueError(line_no,
                                 "unknown platform '" + fields[1] + "' (expected PCR, MICROARRAY or RNASEQ)");
        }
        rec.platform = *platform;
        if (!parse_index(fields[2], rec.replicate)) {
            throw ParseError(line_no, "replicate must be a non-negative integer, got '" + fields[2] + "'");
        }
        if (!csv::parse_double(fields[3], rec.value)) {
            throw ParseError(line_no, "value must be a finite number, got '" + fields[3] + "'");
        }
        if (!seen.emplace(rec.gene_id, rec.platform, rec.replicate).second) {
            throw DuplicateError(line_no, "duplicate (" + rec.gene_id + ", " + std::string(to_string(rec.platform)) +
                                              ", " + std::to_string(rec.replicate) + ")");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<CollapsedValue> collapse_replicates(const std::vector<RawRecord>& records, Scale scale,
                                                AveragingOrder order) {
    struct Accumulator {
        std::size_t position;
        std::vector<double> values;
    };
    std::map<std::pair<std::string, Platform>, Accumulator> groups;
    for (const auto& r : records) {
        if (scale == Scale::Linear && !(r.value > 0.0)) {
            throw DomainError("non-positive linear value " + format_double(r.value) + " for gene '" + r.gene_id +
                              "' (" + std::string(to_string(r.platform)) + ", replicate " +
                              std::to_string(r.replicate) + ", line " + std::to_string(r.line) + ")");
        }
        auto [it, inserted] = groups.try_emplace({r.gene_id, r.platform}, Accumulator{groups.size(), {}});
        it->second.values.push_back(r.value);
    }

    std::vector<CollapsedValue> out(groups.size());
    for (auto& [key, acc] : groups) {
        // Sum in sorted order so the mean does not depend on replicate order.
        std::sort(acc.values.begin(), acc.values.end());
        double sum = 0.0;
        const bool log_first = scale == Scale::Linear && order == AveragingOrder::LogThenMean;
        for (double v : acc.values) sum += log_first ? std::log2(v) : v;
        double mean = sum / static_cast<double>(acc.values.size());
        if (scale == Scale::Linear && order == AveragingOrder::MeanThenLog) mean = std::log2(mean);
        out[acc.position] = CollapsedValue{key.first, key.second, mean};
    }
    return out;
}

MeasurementTable build_table(const std::vector<CollapsedValue>& collapsed) {
    std::vector<Gene> genes;
    std::map<std::string, std::size_t> position;
    for (const auto& c : collapsed) {
        auto [it, inserted] = position.try_emplace(c.gene_id, genes.size());
        if (inserted) genes.push_back(Gene{c.gene_id, {}, {}, {}});
        Gene& g = genes[it->second];
        switch (c.platform) {
        case Platform::Pcr: g.x = c.value; break;
        case Platform::Microarray: g.y = c.value; break;
        case Platform::RnaSeq: g.z = c.value; break;
        }
    }
    return MeasurementTable(std::move(genes));
}

MeasurementTable filter_expression_range(const MeasurementTable& table, double lo, double hi) {
    if (!(lo < hi)) {
        throw DomainError("expression range requires lo < hi");
    }
    std::vector<Gene> genes = table.genes();
    for (auto& g : genes) {
        if (g.x && (*g.x < lo || *g.x > hi)) g.x.reset();
    }
    return MeasurementTable(std::move(genes));
}

} // namespace mecal
